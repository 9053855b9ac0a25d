"""Multitaper spectra on a 0.25 Hz grid and the band-power background features."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.signal.windows import dpss

from .edf import STANDARD_MONTAGE, MontageMap

GRID_STEP = 0.25

BANDS = {
    "delta": (1.5, 4.0),
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "slow": (1.5, 8.0),
    "total": (1.5, 30.0),
}

ANTERIOR = {"left": ("Fp1", "F7", "F3"), "right": ("Fp2", "F8", "F4")}
POSTERIOR = {"left": ("T5", "P3", "O1"), "right": ("T6", "P4", "O2")}


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class PsdTable:
    """Power spectral density per channel, µV²/Hz on a 0.25 Hz grid."""

    freqs: np.ndarray
    power: np.ndarray
    channels: tuple[str, ...]
    n_tapers: int = 7

    def __post_init__(self):
        freqs = np.asarray(self.freqs, dtype=np.float64)
        power = np.asarray(self.power, dtype=np.float64)
        if power.ndim != 2 or power.shape != (len(self.channels), freqs.size):
            raise SpectralError(f"power shape {power.shape} does not match "
                                f"{len(self.channels)} channels x {freqs.size} freqs")
        if freqs.size > 1 and not np.allclose(np.diff(freqs), GRID_STEP, atol=1e-9):
            raise SpectralError("frequency grid must have a constant 0.25 Hz step")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "power", power)
        object.__setattr__(self, "channels", tuple(self.channels))

    def select(self, channels: Sequence[str]) -> "PsdTable":
        idx = [self.channels.index(c) for c in channels]
        return PsdTable(self.freqs, self.power[idx], tuple(channels), self.n_tapers)

    def restrict(self, fmin: float, fmax: float) -> "PsdTable":
        keep = (self.freqs >= fmin - 1e-9) & (self.freqs <= fmax + 1e-9)
        return PsdTable(self.freqs[keep], self.power[:, keep], self.channels, self.n_tapers)

    def scaled(self, c: float) -> "PsdTable":
        return PsdTable(self.freqs, self.power * c, self.channels, self.n_tapers)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "freq_hz", "power"])
            for ch, row in zip(self.channels, self.power):
                for f, p in zip(self.freqs, row):
                    w.writerow([ch, f"{f:.2f}", repr(float(p))])


@lru_cache(maxsize=16)
def _tapers(n: int, nw: float, k: int) -> np.ndarray:
    # scipy returns unit-energy sequences
    return dpss(n, nw, Kmax=k, sym=False)


def multitaper_spectrum(x: np.ndarray, fs: float, nw: float = 4.0, k: int = 7):
    """Full one-sided multitaper spectrum of the last axis of ``x``.

    Returns ``(freqs, psd)`` covering 0..fs/2 at the native bin width fs/n.
    Each channel is demeaned first; the estimate is the unweighted mean of
    ``k`` DPSS-tapered periodograms with one-sided density scaling.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    x = x - x.mean(axis=-1, keepdims=True)
    tapers = _tapers(n, nw, k)
    spec = np.fft.rfft(x[..., None, :] * tapers, axis=-1)
    psd = (np.abs(spec) ** 2).mean(axis=-2) / fs
    psd[..., 1:] *= 2.0
    if n % 2 == 0:
        psd[..., -1] /= 2.0
    freqs = np.fft.rfftfreq(n, 1.0 / fs)
    return freqs, psd


def multitaper_psd(
    epoch: np.ndarray,
    fs: float,
    fmin: float = 1.5,
    fmax: float = 30.0,
    *,
    channels: Sequence[str] | None = None,
    nw: float = 4.0,
    n_tapers: int = 7,
) -> PsdTable:
    """Multitaper PSD of one epoch restricted to ``[fmin, fmax]``.

    The epoch must span exactly 4 s so the native DFT resolution is the
    0.25 Hz analysis grid; no zero padding or interpolation is applied.
    """
    epoch = np.atleast_2d(np.asarray(epoch, dtype=np.float64))
    n = epoch.shape[-1]
    if fmax > fs / 2 + 1e-9:
        raise SpectralError(f"fmax {fmax} Hz exceeds the Nyquist frequency {fs / 2} Hz")
    if fmin < 0 or fmin > fmax:
        raise SpectralError(f"invalid frequency range [{fmin}, {fmax}]")
    if abs(n * GRID_STEP - fs) > 1e-9:
        raise SpectralError(
            f"{n} samples at {fs} Hz give a {fs / n:.4f} Hz bin; a 0.25 Hz grid needs exactly "
            f"{int(round(fs / GRID_STEP))} samples (zero padding is not allowed)")
    freqs, psd = multitaper_spectrum(epoch, fs, nw, n_tapers)
    keep = (freqs >= fmin - 1e-9) & (freqs <= fmax + 1e-9)
    if channels is None:
        channels = tuple(f"ch{i}" for i in range(epoch.shape[0]))
    return PsdTable(freqs[keep], psd[:, keep], tuple(channels), n_tapers)


def epoch_psds(epochs: np.ndarray, fs: float, fmin: float = 1.5, fmax: float = 30.0,
               nw: float = 4.0, n_tapers: int = 7) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised multitaper PSD for ``(n_epochs, channels, samples)``.

    Returns ``(freqs, power)`` with power shaped ``(n_epochs, channels, n_freqs)``.
    """
    epochs = np.asarray(epochs, dtype=np.float64)
    if epochs.shape[0] == 0:
        freqs = np.arange(fmin, fmax + 1e-9, GRID_STEP)
        return freqs, np.zeros((0, epochs.shape[1], freqs.size))
    n = epochs.shape[-1]
    if abs(n * GRID_STEP - fs) > 1e-9:
        raise SpectralError(f"epochs of {n} samples at {fs} Hz are not on the 0.25 Hz grid")
    if fmax > fs / 2 + 1e-9:
        raise SpectralError(f"fmax {fmax} Hz exceeds the Nyquist frequency {fs / 2} Hz")
    freqs, psd = multitaper_spectrum(epochs, fs, nw, n_tapers)
    keep = (freqs >= fmin - 1e-9) & (freqs <= fmax + 1e-9)
    return freqs[keep], psd[..., keep]


def _band_slice(freqs: np.ndarray, lo: float, hi: float) -> slice:
    if lo < freqs[0] - 1e-9 or hi > freqs[-1] + 1e-9 or hi < lo:
        raise SpectralError(f"band [{lo}, {hi}] Hz is outside the grid [{freqs[0]}, {freqs[-1]}]")
    i0 = int(np.searchsorted(freqs, lo - 1e-9))
    i1 = int(np.searchsorted(freqs, hi + 1e-9))
    return slice(i0, i1)


def integrate_band(freqs: np.ndarray, power: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Trapezoidal integral over ``[lo, hi]`` along the last axis."""
    sl = _band_slice(freqs, lo, hi)
    p = power[..., sl]
    if p.shape[-1] < 2:
        return np.zeros(p.shape[:-1])
    return np.trapezoid(p, dx=GRID_STEP, axis=-1)


def band_power(psd: PsdTable, lo: float, hi: float, channels: Iterable[str] | None = None) -> float:
    """Band power in µV², summed over ``channels`` (all when omitted)."""
    if channels is None:
        idx = list(range(len(psd.channels)))
    else:
        channels = list(channels)
        if not channels:
            raise SpectralError("channel subset is empty")
        idx = [psd.channels.index(c) for c in channels]
    return float(integrate_band(psd.freqs, psd.power[idx], lo, hi).sum())


def ap_gradient(psd: PsdTable) -> dict[str, float]:
    """Anterior/posterior alpha power ratio in percent for left, right, total."""
    lo, hi = BANDS["alpha"]
    out = {}
    for side in ("left", "right", "total"):
        if side == "total":
            ant = ANTERIOR["left"] + ANTERIOR["right"]
            post = POSTERIOR["left"] + POSTERIOR["right"]
        else:
            ant, post = ANTERIOR[side], POSTERIOR[side]
        p_post = band_power(psd, lo, hi, post)
        if p_post <= 0:
            raise SpectralError(f"degenerate posterior spectrum ({side}): zero alpha power")
        out[side] = 100.0 * band_power(psd, lo, hi, ant) / p_post
    return out


def _groups(montage: MontageMap) -> dict[str, tuple[str, ...]]:
    return {
        "left": montage.left_channels,
        "right": montage.right_channels,
        "total": montage.analysis_channels,
    }


def total_power(psd: PsdTable, montage: MontageMap = STANDARD_MONTAGE) -> dict[str, float]:
    lo, hi = BANDS["total"]
    return {k: band_power(psd, lo, hi, chs) for k, chs in _groups(montage).items()}


def slow_ratio(psd: PsdTable, montage: MontageMap = STANDARD_MONTAGE) -> dict[str, float]:
    """Percent of 1.5-30 Hz power that lies in 1.5-8 Hz, per hemisphere and overall."""
    out = {}
    for k, chs in _groups(montage).items():
        total = band_power(psd, *BANDS["total"], chs)
        out[k] = 0.0 if total <= 0 else 100.0 * band_power(psd, *BANDS["slow"], chs) / total
    return out


def lr_formula(p_left, p_right):
    """``2 (L - R) / (L + R)``; zero where both powers vanish."""
    p_left = np.asarray(p_left, dtype=np.float64)
    p_right = np.asarray(p_right, dtype=np.float64)
    den = p_left + p_right
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, 2.0 * (p_left - p_right) / np.where(den > 0, den, 1.0), 0.0)
    return r


@dataclass(frozen=True)
class LRRatio:
    band: str
    pairs: Mapping[tuple[str, str], float]
    hemispheric: float
    degenerate: frozenset[tuple[str, str]] = frozenset()

    def by_left_electrode(self) -> dict[str, float]:
        return {left: v for (left, _), v in self.pairs.items()}


def lr_band_ratio(psd: PsdTable, band: str, montage: MontageMap = STANDARD_MONTAGE) -> LRRatio:
    """Left-right band power ratio per mirror pair and over whole hemispheres.

    Positive values mean more power on the left.
    """
    lo, hi = BANDS[band]
    pairs, degenerate = {}, set()
    sum_l = sum_r = 0.0
    for left, right in montage.mirror_pairs:
        pl = band_power(psd, lo, hi, [left])
        pr = band_power(psd, lo, hi, [right])
        sum_l += pl
        sum_r += pr
        if pl + pr <= 0:
            degenerate.add((left, right))
        pairs[(left, right)] = float(lr_formula(pl, pr))
    return LRRatio(band, pairs, float(lr_formula(sum_l, sum_r)), frozenset(degenerate))


def band_amplitude(epochs: np.ndarray, fs: float, band: str | tuple[float, float],
                   include_mask: np.ndarray | None = None,
                   entry_mask: np.ndarray | None = None) -> float:
    """Mean peak-to-peak amplitude (µV) in a band, ``2 * sqrt(2 P)``.

    ``P`` is the integrated band power of each epoch-channel; entries flagged
    in ``entry_mask`` (epochs x channels) are left out of the mean.
    """
    lo, hi = BANDS[band] if isinstance(band, str) else band
    epochs = np.asarray(epochs, dtype=np.float64)
    if include_mask is not None:
        keep = np.asarray(include_mask, dtype=bool)
        epochs = epochs[keep]
        if entry_mask is not None:
            entry_mask = np.asarray(entry_mask, dtype=bool)[keep]
    if epochs.shape[0] == 0:
        raise SpectralError("no included epochs for amplitude estimate")
    freqs, psd = epoch_psds(epochs, fs, 0.0, fs / 2)
    p = integrate_band(freqs, psd, lo, hi)
    amp = 2.0 * np.sqrt(2.0 * np.maximum(p, 0.0))
    if entry_mask is not None and (~entry_mask).any():
        return float(amp[~entry_mask].mean())
    return float(amp.mean())


def mean_psd(freqs: np.ndarray, power: np.ndarray, channels: Sequence[str],
             include_mask: np.ndarray | None = None,
             entry_mask: np.ndarray | None = None, n_tapers: int = 7) -> PsdTable:
    """Per-recording PSD: mean of epoch PSDs over usable epochs, per channel.

    Entries still flagged in ``entry_mask`` are skipped for that channel; a
    channel with no clean entries falls back to all included epochs.
    """
    power = np.asarray(power)
    n_ep = power.shape[0]
    inc = np.ones(n_ep, bool) if include_mask is None else np.asarray(include_mask, bool)
    if not inc.any():
        raise SpectralError("no included epochs to average")
    use = np.repeat(inc[:, None], power.shape[1], axis=1)
    if entry_mask is not None:
        clean = use & ~np.asarray(entry_mask, bool)
        empty = ~clean.any(axis=0)
        clean[:, empty] = use[:, empty]
        use = clean
    w = use.astype(np.float64)
    avg = np.einsum("ec,ecf->cf", w, power) / w.sum(axis=0)[:, None]
    return PsdTable(freqs, avg, tuple(channels), n_tapers)


@dataclass
class BackgroundFeatures:
    ap_gradient: dict[str, float]
    total_power: dict[str, float]
    slow_ratio: dict[str, float]
    lr_ratio: dict[str, LRRatio]
    band_amplitude: dict[str, float]
    pdr: dict[str, float] = field(default_factory=dict)
    bad_channels: tuple[str, ...] = ()

    def summary(self) -> dict:
        return {
            "ap_gradient": self.ap_gradient,
            "total_power": self.total_power,
            "slow_ratio": self.slow_ratio,
            "lr_ratio": {
                band: {"hemispheric": r.hemispheric,
                       "pairs": {f"{a}-{b}": v for (a, b), v in r.pairs.items()}}
                for band, r in self.lr_ratio.items()
            },
            "band_amplitude": self.band_amplitude,
            "pdr": self.pdr,
            "bad_channels": list(self.bad_channels),
        }


def background_features(psd: PsdTable, amplitudes: Mapping[str, float] | None = None,
                         montage: MontageMap = STANDARD_MONTAGE) -> BackgroundFeatures:
    """Compute every band-power feature from a recording-level PSD."""
    return BackgroundFeatures(
        ap_gradient=ap_gradient(psd),
        total_power=total_power(psd, montage),
        slow_ratio=slow_ratio(psd, montage),
        lr_ratio={b: lr_band_ratio(psd, b, montage) for b in ("alpha", "beta", "theta", "delta")},
        band_amplitude=dict(amplitudes or {}),
    )
