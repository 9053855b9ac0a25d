"""Synthetic 19-channel recordings with known ground truth.

Used by the tests, the demos and the CLI smoke runs: a symmetric 10 Hz
posterior-dominant background, an optional left temporal theta focus, and a
square-pulse artifact generator with its injection mask.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .edf import ANALYSIS_CHANNELS, Recording, write_edf

# Peak alpha amplitude (µV) by electrode; midline and lateral pairs match.
ALPHA_UV = {
    "Fp1": 5.0, "Fp2": 5.0, "F7": 6.0, "F8": 6.0, "F3": 7.0, "F4": 7.0, "Fz": 7.0,
    "T3": 9.0, "T4": 9.0, "C3": 10.0, "C4": 10.0, "Cz": 10.0,
    "T5": 20.0, "T6": 20.0, "P3": 22.0, "P4": 22.0, "Pz": 22.0, "O1": 30.0, "O2": 30.0,
}

# Theta focus (µV at 6 Hz): strongest at T3, spreading to its neighbours.
LEFT_TEMPORAL_THETA_UV = {"T3": 30.0, "T5": 8.0, "F7": 15.0, "C3": 12.0}


def pink_noise(n: int, fs: float, rng: np.random.Generator, rms: float = 1.0) -> np.ndarray:
    """1/f power-law noise scaled to the requested RMS."""
    spec = rng.normal(size=n // 2 + 1) + 1j * rng.normal(size=n // 2 + 1)
    f = np.fft.rfftfreq(n, 1.0 / fs)
    f[0] = f[1]
    x = np.fft.irfft(spec / np.sqrt(f), n)
    x -= x.mean()
    return x * (rms / x.std())


def _rhythm(n: int, fs: float, f0: float, amp: float, rng: np.random.Generator) -> np.ndarray:
    """Waxing and waning sinusoid with a slowly drifting phase."""
    t = np.arange(n) / fs
    drift = np.cumsum(rng.normal(0, 0.02, n))
    envelope = 1.0 + 0.3 * np.sin(2 * np.pi * rng.uniform(0.05, 0.15) * t + rng.uniform(0, 2 * np.pi))
    return amp * envelope / 1.3 * np.sin(2 * np.pi * f0 * t + drift + rng.uniform(0, 2 * np.pi))


def synthetic_recording(kind: str = "normal", duration_s: float = 240.0, fs: float = 125.0,
                        seed: int = 0, pdr_hz: float = 10.0, noise_uv: float = 4.0,
                        eye_events: int = 4) -> Recording:
    """Generate a recording of the requested ``kind``.

    ``"normal"`` is a symmetric posterior alpha background. ``"focal_left_temporal"``
    adds an independent 6 Hz theta rhythm over T3 and its neighbours.
    ``eye_events`` annotations alternating "eye open"/"eye close" are placed
    at evenly spaced onsets.
    """
    if kind not in ("normal", "focal_left_temporal"):
        raise ValueError(f"unknown synthetic kind {kind!r}")
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * fs))
    # shared alpha generator per hemisphere keeps neighbouring channels coherent
    source = {side: _rhythm(n, fs, pdr_hz, 1.0, rng) for side in ("left", "right", "midline")}
    data = np.empty((len(ANALYSIS_CHANNELS), n))
    for i, ch in enumerate(ANALYSIS_CHANNELS):
        side = "midline" if ch.endswith("z") else ("left" if int(ch[-1]) % 2 else "right")
        data[i] = ALPHA_UV[ch] * source[side] + pink_noise(n, fs, rng, noise_uv)
    if kind == "focal_left_temporal":
        for ch, amp in LEFT_TEMPORAL_THETA_UV.items():
            data[ANALYSIS_CHANNELS.index(ch)] += _rhythm(n, fs, 6.0, amp, rng)
    onsets = np.linspace(0, duration_s, eye_events + 2)[1:-1]
    annotations = tuple((float(round(t, 2)), "eye open" if k % 2 == 0 else "eye close")
                        for k, t in enumerate(onsets))
    return Recording(tuple(ANALYSIS_CHANNELS), float(fs), data, annotations)


def inject_square_artifact(rec: Recording, channel: str = "F3", fraction: float = 0.2,
                           amplitude_uv: float = 50.0, epoch_len_s: float = 4.0,
                           pulse_hz: float = 2.0, seed: int = 0) -> tuple[Recording, np.ndarray]:
    """Add a square-pulse train to ``channel`` in a random subset of epochs.

    Returns the contaminated recording and the ground-truth mask shaped
    ``(n_epochs, channels)``.
    """
    rng = np.random.default_rng(seed)
    spe = int(round(epoch_len_s * rec.fs))
    n_ep = rec.n_samples // spe
    hit = np.sort(rng.choice(n_ep, size=int(round(fraction * n_ep)), replace=False))
    c = rec.channels.index(channel)
    t = np.arange(spe) / rec.fs
    pulse = amplitude_uv * np.sign(np.sin(2 * np.pi * pulse_hz * t + 1e-9))
    data = rec.data.copy()
    truth = np.zeros((n_ep, len(rec.channels)), bool)
    for e in hit:
        data[c, e * spe:(e + 1) * spe] += pulse
        truth[e, c] = True
    return rec.replace(data=data), truth


def write_fixture(directory: str | Path, name: str, rec: Recording) -> tuple[Path, Path]:
    """Write ``<name>.edf`` plus its ``<name>.txt`` annotation sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    edf = directory / f"{name}.edf"
    ann = directory / f"{name}.txt"
    write_edf(edf, rec)
    ann.write_text("".join(f"{onset:g}\t{label}\n" for onset, label in rec.annotations),
                   encoding="utf-8")
    return edf, ann
