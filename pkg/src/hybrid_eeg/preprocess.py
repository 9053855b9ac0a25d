"""Re-referencing, 4 s epoching and awake eyes-closed epoch selection."""
from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .edf import Recording
from .spectral import BANDS, epoch_psds, integrate_band

DEFAULT_EYE_PATTERNS = (r"eyes?\s*open", r"eyes?\s*clos", r"\beo\b", r"\bec\b")


@dataclass(frozen=True)
class EpochSet:
    """Non-overlapping windows of a recording starting at t = 0.

    ``epochs`` is ``(n_epochs, channels, samples_per_epoch)`` in µV.
    """

    epochs: np.ndarray
    epoch_len_s: float
    fs: float
    channels: tuple[str, ...]
    include_mask: np.ndarray

    def __post_init__(self):
        spe = self.epoch_len_s * self.fs
        if self.epochs.ndim != 3 or self.epochs.shape[2] != int(round(spe)):
            raise ValueError(f"epochs shape {self.epochs.shape} does not match "
                             f"{spe:g} samples per epoch")
        if self.include_mask.shape != (self.epochs.shape[0],):
            raise ValueError("include_mask length must equal the number of epochs")

    @property
    def n_epochs(self) -> int:
        return self.epochs.shape[0]

    @property
    def samples_per_epoch(self) -> int:
        return self.epochs.shape[2]

    @property
    def source_offsets_s(self) -> np.ndarray:
        return np.arange(self.n_epochs) * self.epoch_len_s

    def with_mask(self, mask: np.ndarray) -> "EpochSet":
        return replace(self, include_mask=np.asarray(mask, dtype=bool).copy())

    def with_epochs(self, epochs: np.ndarray) -> "EpochSet":
        return replace(self, epochs=epochs)

    def to_continuous(self) -> np.ndarray:
        """Concatenate the epochs back into ``(channels, samples)``."""
        return self.epochs.transpose(1, 0, 2).reshape(len(self.channels), -1)


def load_transfer_matrix(path: str | Path, n_channels: int) -> np.ndarray:
    """Read a whitespace-separated square matrix, one row per channel."""
    g = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if g.shape != (n_channels, n_channels):
        raise ValueError(f"transfer matrix is {g.shape[0]}x{g.shape[1]}, "
                         f"expected {n_channels}x{n_channels}")
    return g


def rereference(rec: Recording, scheme: str = "average",
                transfer_matrix: np.ndarray | str | Path | None = None) -> Recording:
    """Rebuild the reference.

    ``average`` subtracts the instantaneous channel mean, ``rest`` applies a
    caller-supplied transfer matrix ``G`` (``data <- G @ data``) and
    ``none`` returns the input.
    """
    if scheme == "none":
        return rec
    if scheme == "average":
        return rec.replace(data=rec.data - rec.data.mean(axis=0, keepdims=True))
    if scheme == "rest":
        if transfer_matrix is None:
            raise ValueError("rest re-referencing needs a transfer matrix")
        n = len(rec.channels)
        if isinstance(transfer_matrix, (str, Path)):
            g = load_transfer_matrix(transfer_matrix, n)
        else:
            g = np.asarray(transfer_matrix, dtype=np.float64)
            if g.shape != (n, n):
                raise ValueError(f"transfer matrix is {g.shape}, expected ({n}, {n})")
        return rec.replace(data=g @ rec.data)
    raise ValueError(f"unknown reference scheme {scheme!r}")


def segment_epochs(rec: Recording, epoch_len_s: float = 4.0) -> EpochSet:
    spe = epoch_len_s * rec.fs
    if abs(spe - round(spe)) > 1e-9:
        raise ValueError(f"epoch length {epoch_len_s} s is not a whole number of samples at {rec.fs} Hz")
    spe = int(round(spe))
    n_ep = rec.n_samples // spe
    data = rec.data[:, :n_ep * spe].reshape(len(rec.channels), n_ep, spe).transpose(1, 0, 2)
    return EpochSet(np.ascontiguousarray(data), float(epoch_len_s), rec.fs,
                    tuple(rec.channels), np.ones(n_ep, dtype=bool))


@dataclass(frozen=True)
class SelectionReport:
    include_mask: np.ndarray
    eye_event: np.ndarray
    high_amplitude: np.ndarray
    spectral_outlier: np.ndarray
    beta_ratio: np.ndarray
    delta_ratio: np.ndarray
    thresholds: dict

    @property
    def n_included(self) -> int:
        return int(self.include_mask.sum())


def band_ratios(freqs: np.ndarray, power: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Channel-averaged beta and delta power fractions of 1.5-30 Hz, per epoch."""
    total = integrate_band(freqs, power, *BANDS["total"])
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = np.where(total > 0, integrate_band(freqs, power, *BANDS["beta"]) / total, 0.0)
        delta = np.where(total > 0, integrate_band(freqs, power, *BANDS["delta"]) / total, 0.0)
    return beta.mean(axis=-1), delta.mean(axis=-1)


def select_wake_epochs(
    es: EpochSet,
    annotations: Sequence[tuple[float, str]] = (),
    psd: tuple[np.ndarray, np.ndarray] | None = None,
    *,
    eye_patterns: Sequence[str] = DEFAULT_EYE_PATTERNS,
    max_abs_uv: float = 150.0,
    sd_factor: float = 2.2,
) -> SelectionReport:
    """Drop epochs that are unlikely to be awake eyes-closed background.

    An epoch is excluded when it contains an eye open/close annotation, when
    any sample exceeds ``max_abs_uv`` in magnitude, or when its beta or delta
    power fraction exceeds mean + ``sd_factor`` SD of that fraction. The
    spectral statistics are taken over epochs that passed the first two rules.

    ``psd`` is ``(freqs, power)`` from :func:`~hybrid_eeg.spectral.epoch_psds`
    and is computed here when omitted.
    """
    n = es.n_epochs
    start = es.source_offsets_s
    rx = [re.compile(p, re.I) for p in eye_patterns]
    eye = np.zeros(n, bool)
    for onset, label in annotations:
        if any(r.search(label) for r in rx):
            k = int(np.floor(onset / es.epoch_len_s))
            if 0 <= k < n and start[k] <= onset < start[k] + es.epoch_len_s:
                eye[k] = True
    if n:
        high = np.abs(es.epochs).max(axis=(1, 2)) > max_abs_uv
    else:
        high = np.zeros(0, bool)

    if psd is None:
        psd = epoch_psds(es.epochs, es.fs)
    beta, delta = band_ratios(*psd)

    base = es.include_mask & ~eye & ~high
    spectral = np.zeros(n, bool)
    thresholds = {"max_abs_uv": max_abs_uv, "sd_factor": sd_factor}
    if base.any():
        for name, ratio in (("beta", beta), ("delta", delta)):
            mu, sd = ratio[base].mean(), ratio[base].std()
            limit = mu + sd_factor * sd
            thresholds[f"{name}_ratio_limit"] = float(limit)
            spectral |= base & (ratio > limit)
    mask = base & ~spectral
    return SelectionReport(mask, eye, high, spectral, beta, delta, thresholds)
