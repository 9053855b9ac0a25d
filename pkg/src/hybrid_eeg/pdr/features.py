"""PDR feature maps, labelled examples, the spectral-peak baseline and file formats."""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..spectral import GRID_STEP, PsdTable
from .model import LABEL_MAX_HZ, LABEL_MIN_HZ

RIGHT_ORDER = ("T6", "O2", "P4", "T5", "O1", "P3")
LEFT_ORDER = ("T5", "O1", "P3", "T6", "O2", "P4")
MAP_FREQS = 3.0 + GRID_STEP * np.arange(48)  # 3.00 .. 14.75 Hz

MAP_MAGIC = b"PFM1"


@dataclass(frozen=True)
class PdrFeatureMap:
    values: np.ndarray          # (6, 48, 1), max-normalised
    side: str
    electrode_order: tuple[str, ...]

    @property
    def freqs(self) -> np.ndarray:
        return MAP_FREQS


@dataclass(frozen=True)
class LabeledExample:
    features: PdrFeatureMap
    label_hz: float
    group_key: str

    def __post_init__(self):
        if not LABEL_MIN_HZ <= self.label_hz <= LABEL_MAX_HZ:
            raise ValueError(f"label {self.label_hz} Hz outside [4, 12]")
        if not self.group_key:
            raise ValueError("group_key must be non-empty")


def build_feature_map(psd: PsdTable, side: str) -> PdrFeatureMap:
    """Stack the six posterior spectra (3-14.75 Hz) with the target side first."""
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    order = RIGHT_ORDER if side == "right" else LEFT_ORDER
    missing = [e for e in order if e not in psd.channels]
    if missing:
        raise ValueError(f"posterior electrodes missing from PSD: {', '.join(missing)}")
    idx = np.searchsorted(psd.freqs, MAP_FREQS - 1e-9)
    if psd.freqs[0] > MAP_FREQS[0] + 1e-9 or idx[-1] >= psd.freqs.size or \
            not np.allclose(psd.freqs[np.minimum(idx, psd.freqs.size - 1)], MAP_FREQS):
        raise ValueError("PSD grid must cover 3-14.75 Hz at 0.25 Hz")
    rows = np.stack([psd.power[psd.channels.index(e), idx] for e in order])
    peak = rows.max()
    if peak > 0:
        rows = rows / peak
    return PdrFeatureMap(rows[:, :, None].astype(np.float64), side, order)


def spectral_peak_baseline(fmap: PdrFeatureMap | np.ndarray) -> float:
    """PDR estimate from spectral peaks alone.

    Per row, the power-weighted centroid of the argmax bin and its two
    neighbours; rows whose argmax sits on the grid edge use that bin alone.
    Ties go to the lowest frequency. The row mean is clamped to [4, 12] Hz.
    """
    v = np.asarray(getattr(fmap, "values", fmap), dtype=np.float64)
    v = v.reshape(v.shape[0], -1)
    f = MAP_FREQS[: v.shape[1]]
    est = []
    for row in v:
        i = int(np.argmax(row))
        if 0 < i < row.size - 1:
            w = row[i - 1:i + 2]
            est.append(float((w * f[i - 1:i + 2]).sum() / w.sum()) if w.sum() > 0 else f[i])
        else:
            est.append(float(f[i]))
    return float(np.clip(np.mean(est), LABEL_MIN_HZ, LABEL_MAX_HZ))


# ------------------------------------------------------------- file formats

def write_feature_map(path: str | Path, values: np.ndarray) -> None:
    """Binary map: 4-byte magic, three little-endian uint32 dims, float32 data."""
    v = np.asarray(values, dtype="<f4")
    if v.ndim != 3:
        raise ValueError("feature map must be 3-D")
    with open(path, "wb") as fh:
        fh.write(MAP_MAGIC + struct.pack("<III", *v.shape))
        fh.write(v.tobytes())


def read_feature_map(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < 16 or buf[:4] != MAP_MAGIC:
        raise ValueError(f"{path}: not a feature map file")
    shape = struct.unpack("<III", buf[4:16])
    expected = 16 + 4 * int(np.prod(shape))
    if len(buf) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(buf)}")
    return np.frombuffer(buf[16:], dtype="<f4").reshape(shape).astype(np.float64)


MANIFEST_FIELDS = ("file_id", "side", "label_hz", "feature_path")


def write_manifest(path: str | Path, examples: list[LabeledExample], map_dir: str | Path) -> None:
    """Write each map to ``map_dir`` and list it in a CSV manifest."""
    path = Path(path)
    map_dir = Path(map_dir)
    map_dir.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        for ex in examples:
            fp = map_dir / f"{ex.group_key}_{ex.features.side}.pfm"
            write_feature_map(fp, ex.features.values)
            try:
                rel = fp.relative_to(path.parent)
            except ValueError:
                rel = fp
            w.writerow([ex.group_key, ex.features.side, f"{ex.label_hz:g}", str(rel)])


def read_manifest(path: str | Path) -> list[LabeledExample]:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_FIELDS)}")
        for row in reader:
            fp = Path(row["feature_path"])
            if not fp.is_absolute():
                fp = path.parent / fp
            side = row["side"]
            order = RIGHT_ORDER if side == "right" else LEFT_ORDER
            fmap = PdrFeatureMap(read_feature_map(fp), side, order)
            out.append(LabeledExample(fmap, float(row["label_hz"]), row["file_id"]))
    return out


# ----------------------------------------------------------- synthetic data

def synthetic_psd_rows(f0_target: float, f0_other: float, rng: np.random.Generator,
                       noise_dof: int = 60) -> np.ndarray:
    """Six posterior spectra: Gaussian alpha bump + 1/f background + estimator noise.

    Rows 0-2 carry the target side's rhythm, rows 3-5 the other side's.
    """
    rows = []
    for r in range(6):
        f0 = (f0_target if r < 3 else f0_other) + rng.normal(0, 0.05)
        width = rng.uniform(0.4, 0.9)
        height = rng.uniform(2.0, 8.0) * (1.3 if r in (1, 4) else 1.0)
        background = rng.uniform(1.0, 3.0) / MAP_FREQS ** rng.uniform(0.8, 1.5)
        clean = background + height * np.exp(-0.5 * ((MAP_FREQS - f0) / width) ** 2)
        noise = rng.gamma(noise_dof / 2, 2.0 / noise_dof, size=MAP_FREQS.size)
        rows.append(clean * noise)
    return np.array(rows)


def make_synthetic_corpus(n_files: int, seed: int = 0, asymmetry_prob: float = 0.2
                          ) -> list[LabeledExample]:
    """Two examples (right and left map) per synthetic file, labels on the 0.5 Hz grid."""
    rng = np.random.default_rng(seed)
    grid = np.arange(LABEL_MIN_HZ, LABEL_MAX_HZ + 0.25, 0.5)
    out = []
    for i in range(n_files):
        right = float(rng.choice(grid))
        left = right
        if rng.random() < asymmetry_prob:
            left = float(np.clip(right + rng.choice([-1.0, -0.5, 0.5, 1.0]), LABEL_MIN_HZ, LABEL_MAX_HZ))
        key = f"syn{i:05d}"
        rows_r = synthetic_psd_rows(right, left, rng)
        # same spectra seen from the left: swap the row blocks
        rows_l = np.concatenate([rows_r[3:], rows_r[:3]])
        for side, rows, label in (("right", rows_r, right), ("left", rows_l, left)):
            v = rows / rows.max()
            order = RIGHT_ORDER if side == "right" else LEFT_ORDER
            out.append(LabeledExample(PdrFeatureMap(v[:, :, None], side, order), label, key))
    return out
