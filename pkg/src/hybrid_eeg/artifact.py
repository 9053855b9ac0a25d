"""Unsupervised artifact detection with HBOS and neighbour-electrode comparison.

Every (epoch, channel) entry is described by 31 signal features. Within an
epoch the 19 channel vectors form the population for a histogram-based
outlier score; an entry is flagged when it scores far above the recording's
score distribution while its neighbours do not, i.e. the anomaly is local to
one electrode. Flagged entries are replaced by the mean of their clean
neighbours.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .edf import STANDARD_MONTAGE, MontageMap, Recording
from .preprocess import EpochSet, segment_epochs
from .spectral import BANDS, integrate_band, multitaper_spectrum

logger = logging.getLogger(__name__)

FEATURE_NAMES = (
    "mean", "variance", "sd", "skewness", "excess_kurtosis", "min", "max",
    "peak_to_peak", "rms", "median", "mad", "line_length", "zero_crossings",
    "hjorth_activity", "hjorth_mobility", "hjorth_complexity", "diff1_rms",
    "diff2_rms", "lag1_autocorr",
    "abs_delta", "abs_theta", "abs_alpha", "abs_beta", "abs_total",
    "rel_delta", "rel_theta", "rel_alpha", "rel_beta",
    "spectral_entropy", "sef95", "peak_frequency",
)
N_FEATURES = len(FEATURE_NAMES)
ALPHA_INDEX = FEATURE_NAMES.index("abs_alpha")
PEAK_INDEX = FEATURE_NAMES.index("peak_frequency")


@dataclass(frozen=True)
class ArtifactConfig:
    candidate_percentile: float = 95.0
    neighbor_percentile: float = 75.0
    # Tukey far-out fence on the score distribution; keeps the percentile rule
    # from flagging the top 5 % of a recording that has no artifacts at all
    fence_iqr: float = 3.0
    # only entries whose spectral peak lies in the alpha band can be exempt, so
    # broadband artifacts with alpha-band harmonics are still scored
    exempt_requires_alpha_peak: bool = True
    bad_channel_fraction: float = 0.30
    min_epochs: int = 10
    eps: float = 1e-12


@dataclass(frozen=True)
class ArtifactMask:
    mask: np.ndarray            # (n_epochs, channels), True = contaminated
    alpha_excluded: np.ndarray  # (n_epochs, channels), exempt from detection
    channels: tuple[str, ...]
    scores: np.ndarray | None = None
    bad_fraction: float = 0.30
    skipped: bool = False

    @property
    def bad_channels(self) -> tuple[str, ...]:
        return bad_channels_from_mask(self.mask, self.channels, self.bad_fraction)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch_index", "channel", "flag"])
            for e in range(self.mask.shape[0]):
                for c, ch in enumerate(self.channels):
                    w.writerow([e, ch, int(self.mask[e, c])])


def bad_channels_from_mask(mask: np.ndarray, channels, fraction: float = 0.30) -> tuple[str, ...]:
    if mask.shape[0] == 0:
        return ()
    frac = mask.mean(axis=0)
    return tuple(ch for ch, f in zip(channels, frac) if f > fraction)


# ----------------------------------------------------------------- features

def feature_matrix(x: np.ndarray, fs: float) -> np.ndarray:
    """31 features for each row of ``x`` (items x samples)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if not np.isfinite(x).all():
        raise ValueError("input samples must be finite")
    n_items, n = x.shape
    out = np.zeros((n_items, N_FEATURES))

    mean = x.mean(axis=1)
    xc = x - mean[:, None]
    var = (xc ** 2).mean(axis=1)
    sd = np.sqrt(var)
    nz = var > 0
    safe_sd = np.where(nz, sd, 1.0)
    skew = np.where(nz, (xc ** 3).mean(axis=1) / safe_sd ** 3, 0.0)
    kurt = np.where(nz, (xc ** 4).mean(axis=1) / safe_sd ** 4 - 3.0, 0.0)
    med = np.median(x, axis=1)
    mad = np.median(np.abs(x - med[:, None]), axis=1)
    d1 = np.diff(x, axis=1)
    d2 = np.diff(x, n=2, axis=1)
    line_length = np.abs(d1).sum(axis=1)
    signs = np.sign(xc)
    zc = (signs[:, 1:] * signs[:, :-1] < 0).sum(axis=1).astype(np.float64)
    var_d1 = d1.var(axis=1)
    var_d2 = d2.var(axis=1)
    mobility = np.where(nz, np.sqrt(var_d1 / np.where(nz, var, 1.0)), 0.0)
    mob_d1 = np.where(var_d1 > 0, np.sqrt(var_d2 / np.where(var_d1 > 0, var_d1, 1.0)), 0.0)
    complexity = np.where(mobility > 0, mob_d1 / np.where(mobility > 0, mobility, 1.0), 0.0)
    ac1 = np.where(nz, (xc[:, 1:] * xc[:, :-1]).mean(axis=1) / np.where(nz, var, 1.0), 0.0)

    freqs, psd = multitaper_spectrum(x, fs)
    bp = {b: integrate_band(freqs, psd, *BANDS[b]) for b in ("delta", "theta", "alpha", "beta", "total")}
    total = bp["total"]
    tz = total > 0
    safe_total = np.where(tz, total, 1.0)
    rel = {b: np.where(tz, bp[b] / safe_total, 0.0) for b in ("delta", "theta", "alpha", "beta")}

    band = (freqs >= BANDS["total"][0]) & (freqs <= BANDS["total"][1])
    fb = freqs[band]
    pb = psd[:, band]
    psum = pb.sum(axis=1)
    pz = psum > 0
    pn = pb / np.where(pz, psum, 1.0)[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = -np.where(pn > 0, pn * np.log(pn), 0.0).sum(axis=1) / math.log(fb.size)
    ent = np.where(pz, ent, 0.0)
    cum = np.cumsum(pn, axis=1)
    sef = np.where(pz, fb[np.minimum((cum < 0.95).sum(axis=1), fb.size - 1)], 0.0)
    peak = np.where(pz, fb[np.argmax(pb, axis=1)], 0.0)

    cols = [mean, var, sd, skew, kurt, x.min(axis=1), x.max(axis=1), np.ptp(x, axis=1),
            np.sqrt((x ** 2).mean(axis=1)), med, mad, line_length, zc,
            var, mobility, complexity, np.sqrt((d1 ** 2).mean(axis=1)),
            np.sqrt((d2 ** 2).mean(axis=1)), ac1,
            bp["delta"], bp["theta"], bp["alpha"], bp["beta"], total,
            rel["delta"], rel["theta"], rel["alpha"], rel["beta"],
            ent, sef, peak]
    for i, col in enumerate(cols):
        out[:, i] = col
    return out


def extract_features(epoch_channel: np.ndarray, fs: float) -> np.ndarray:
    """31-element feature vector of one epoch of one channel (order in ``FEATURE_NAMES``)."""
    return feature_matrix(np.asarray(epoch_channel)[None, :], fs)[0]


# --------------------------------------------------------------------- HBOS

def hbos_score(features: np.ndarray, n_bins: int | None = None, eps: float = 1e-12) -> np.ndarray:
    """Histogram-based outlier score of each row of ``features``.

    Each dimension gets a static-width histogram with ``ceil(sqrt(n))`` bins
    whose heights are scaled so the tallest bin is 1. An item's score is the
    sum over dimensions of ``-log(height)`` of the bin it falls in. Constant
    dimensions contribute nothing.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError("features must be 2-D (items x dimensions)")
    n = f.shape[0]
    if n < 10:
        raise ValueError(f"HBOS needs at least 10 items, got {n}")
    bins = n_bins or math.ceil(math.sqrt(n))
    lo = f.min(axis=0)
    width = f.max(axis=0) - lo
    active = width > 0
    scores = np.zeros(n)
    if not active.any():
        return scores
    fa = f[:, active]
    lo_a, w_a = lo[active], width[active]
    idx = np.floor((fa - lo_a) / w_a * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    d = fa.shape[1]
    counts = np.zeros((d, bins))
    np.add.at(counts, (np.broadcast_to(np.arange(d), idx.shape), idx), 1.0)
    heights = counts / counts.max(axis=1, keepdims=True)
    h = heights[np.arange(d)[None, :], idx]
    scores = -np.log(np.maximum(h, eps)).sum(axis=1)
    return scores


# ---------------------------------------------------------------- detection

def epoch_features(es: EpochSet) -> np.ndarray:
    """Features shaped ``(n_epochs, channels, 31)``."""
    n_ep, n_ch, n = es.epochs.shape
    return feature_matrix(es.epochs.reshape(-1, n), es.fs).reshape(n_ep, n_ch, N_FEATURES)


def detect(es: EpochSet, montage: MontageMap = STANDARD_MONTAGE,
           config: ArtifactConfig = ArtifactConfig(),
           features: np.ndarray | None = None) -> ArtifactMask:
    """Flag contaminated (epoch, channel) entries among included epochs.

    1. Entries whose alpha power exceeds the midpoint of the mean and median
       alpha power, and whose spectral peak lies in the alpha band, are exempt
       (strong posterior alpha is not an artifact).
    2. Within each epoch, channels are scored with HBOS against the other
       channels of that epoch. Candidates score above the
       ``candidate_percentile`` of all non-exempt scores and above the
       far-out fence ``Q3 + fence_iqr * IQR``.
    3. A candidate is confirmed only if the median score of its neighbours in
       the same epoch is below the ``neighbor_percentile``.
    """
    n_ep, n_ch = es.n_epochs, len(es.channels)
    mask = np.zeros((n_ep, n_ch), bool)
    exempt = np.zeros((n_ep, n_ch), bool)
    inc = np.asarray(es.include_mask, bool)
    if inc.sum() < config.min_epochs or n_ch < 10:
        logger.warning("artifact detection skipped: %d usable epochs, %d channels", inc.sum(), n_ch)
        return ArtifactMask(mask, exempt, es.channels, None, config.bad_channel_fraction, skipped=True)

    if features is None:
        features = epoch_features(es)
    alpha = features[..., ALPHA_INDEX]
    pool = alpha[inc]
    threshold = 0.5 * (pool.mean() + np.median(pool))
    exempt[inc] = alpha[inc] > threshold
    if config.exempt_requires_alpha_peak:
        lo, hi = BANDS["alpha"]
        peak = features[..., PEAK_INDEX]
        exempt &= (peak >= lo) & (peak < hi)

    scores = np.full((n_ep, n_ch), np.nan)
    for e in np.flatnonzero(inc):
        scores[e] = hbos_score(features[e], eps=config.eps)

    usable = inc[:, None] & ~exempt
    pop = scores[usable]
    if pop.size == 0:
        return ArtifactMask(mask, exempt, es.channels, scores, config.bad_channel_fraction)
    q1, q3 = np.percentile(pop, [25, 75])
    cand_cut = max(np.percentile(pop, config.candidate_percentile), q3 + config.fence_iqr * (q3 - q1))
    neigh_cut = np.percentile(pop, config.neighbor_percentile)
    candidate = usable & (scores > cand_cut)

    index = {ch: i for i, ch in enumerate(es.channels)}
    neighbor_idx = [[index[n] for n in sorted(montage.neighbors(ch)) if n in index]
                    for ch in es.channels]
    for e, c in zip(*np.nonzero(candidate)):
        nb = neighbor_idx[c]
        if nb and np.median(scores[e, nb]) < neigh_cut:
            mask[e, c] = True
    return ArtifactMask(mask, exempt, es.channels, scores, config.bad_channel_fraction)


# ------------------------------------------------------------------- repair

def repair_epochs(es: EpochSet, am: ArtifactMask, montage: MontageMap = STANDARD_MONTAGE
                  ) -> tuple[EpochSet, np.ndarray]:
    """Replace flagged entries with the samplewise mean of clean neighbours.

    Returns the repaired epochs and the mask of entries that could not be
    repaired because every neighbour was contaminated too.
    """
    if am.mask.shape != (es.n_epochs, len(es.channels)):
        raise ValueError(f"mask shape {am.mask.shape} does not match epochs "
                         f"{(es.n_epochs, len(es.channels))}")
    out = es.epochs.copy()
    remaining = np.zeros_like(am.mask)
    index = {ch: i for i, ch in enumerate(es.channels)}
    for e, c in zip(*np.nonzero(am.mask)):
        nb = [index[n] for n in sorted(montage.neighbors(es.channels[c])) if n in index]
        clean = [j for j in nb if not am.mask[e, j]]
        if not clean:
            remaining[e, c] = True
            continue
        out[e, c] = es.epochs[e, clean].mean(axis=0)
    return es.with_epochs(out), remaining


def repair(rec: Recording, am: ArtifactMask, montage: MontageMap = STANDARD_MONTAGE,
           epoch_len_s: float = 4.0) -> Recording:
    """Repair a continuous recording epoch by epoch; samples past the last full epoch are untouched."""
    es = segment_epochs(rec, epoch_len_s)
    fixed, _ = repair_epochs(es, am, montage)
    data = rec.data.copy()
    data[:, :fixed.n_epochs * fixed.samples_per_epoch] = fixed.to_continuous()
    return rec.replace(data=data)
