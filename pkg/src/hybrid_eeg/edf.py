"""EDF ingestion, annotation sidecars and the 10-20 analysis montage.

Only plain EDF (16-bit little-endian samples) is read. EDF+ annotation
signals are skipped; event markers come from a separate text file with one
``onset<TAB>label`` entry per line.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "EdfParseError",
    "EdfCalibrationError",
    "EdfTruncatedError",
    "MontageError",
    "Recording",
    "MontageMap",
    "STANDARD_MONTAGE",
    "canonical_label",
    "load_recording",
    "write_edf",
    "load_annotations",
    "apply_montage",
    "crop",
]


class EdfParseError(ValueError):
    """Raised when an EDF header field cannot be parsed."""


class EdfCalibrationError(ValueError):
    """Raised when a channel has a degenerate digital or physical range."""


class EdfTruncatedError(ValueError):
    """Raised when the data section is shorter than the header promises."""


class MontageError(ValueError):
    """Raised when required analysis channels are missing."""


ANALYSIS_CHANNELS = (
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8",
    "T3", "C3", "Cz", "C4", "T4",
    "T5", "P3", "Pz", "P4", "T6",
    "O1", "O2",
)

# Older and newer 10-20 nomenclature for the temporal row.
CHANNEL_ALIASES = {"T7": "T3", "T8": "T4", "P7": "T5", "P8": "T6"}

MIRROR_PAIRS = (
    ("Fp1", "Fp2"), ("F7", "F8"), ("F3", "F4"), ("T3", "T4"),
    ("C3", "C4"), ("T5", "T6"), ("P3", "P4"), ("O1", "O2"),
)

# Lateral electrodes connect only within their own hemisphere (F3 -> Fp1, F7,
# C3); the midline chain Fz-Cz-Pz hooks onto the frontopolar and occipital
# electrodes so every node has at least two neighbours.
_LEFT_EDGES = (
    ("Fp1", "F7"), ("Fp1", "F3"),
    ("F7", "F3"), ("F7", "T3"),
    ("F3", "C3"),
    ("T3", "C3"), ("T3", "T5"),
    ("C3", "P3"),
    ("T5", "P3"), ("T5", "O1"),
    ("P3", "O1"),
)
_MIDLINE_EDGES = (
    ("Fz", "Cz"), ("Cz", "Pz"),
    ("Fz", "Fp1"), ("Fz", "Fp2"),
    ("Pz", "O1"), ("Pz", "O2"),
)

_NON_EEG = re.compile(r"(ECG|EKG|EMG|EOG|PHOTIC|RESP|SPO2|PULSE|EVENT|STATUS|ANNOTATION)", re.I)


def _mirror(label: str) -> str:
    for left, right in MIRROR_PAIRS:
        if label == left:
            return right
        if label == right:
            return left
    return label


def _build_adjacency() -> dict[str, frozenset[str]]:
    edges = list(_LEFT_EDGES)
    edges += [(_mirror(a), _mirror(b)) for a, b in _LEFT_EDGES]
    edges += list(_MIDLINE_EDGES)
    adj: dict[str, set[str]] = {ch: set() for ch in ANALYSIS_CHANNELS}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    return {ch: frozenset(n) for ch, n in adj.items()}


def _hemisphere(label: str) -> str:
    if label.endswith("z"):
        return "midline"
    return "left" if int(label[-1]) % 2 == 1 else "right"


@dataclass(frozen=True)
class MontageMap:
    """Channel set, neighbour graph and hemisphere labels for analysis."""

    analysis_channels: tuple[str, ...]
    adjacency: Mapping[str, frozenset[str]]
    hemisphere: Mapping[str, str]
    mirror_pairs: tuple[tuple[str, str], ...] = MIRROR_PAIRS

    def neighbors(self, channel: str) -> frozenset[str]:
        return self.adjacency[channel]

    def index(self, channel: str) -> int:
        return self.analysis_channels.index(channel)

    def mirror(self, channel: str) -> str:
        for left, right in self.mirror_pairs:
            if channel == left:
                return right
            if channel == right:
                return left
        return channel

    @property
    def left_channels(self) -> tuple[str, ...]:
        return tuple(c for c in self.analysis_channels if self.hemisphere[c] == "left")

    @property
    def right_channels(self) -> tuple[str, ...]:
        return tuple(c for c in self.analysis_channels if self.hemisphere[c] == "right")


STANDARD_MONTAGE = MontageMap(
    analysis_channels=ANALYSIS_CHANNELS,
    adjacency=_build_adjacency(),
    hemisphere={ch: _hemisphere(ch) for ch in ANALYSIS_CHANNELS},
)


def canonical_label(label: str) -> str:
    """Normalise a raw EDF channel label to 10-20 spelling.

    Strips common vendor decorations (``EEG Fp1-REF``, ``FP1-LE``) and maps
    T7/T8/P7/P8 onto T3/T4/T5/T6. Labels outside the 10-20 set are returned
    stripped but otherwise untouched.
    """
    s = label.strip()
    s = re.sub(r"^EEG\s+", "", s, flags=re.I)
    s = re.sub(r"[-_ ]?(REF|LE|AR|AVG|A1|A2|M1|M2)$", "", s, flags=re.I)
    s = s.strip()
    upper = s.upper()
    for alias, target in CHANNEL_ALIASES.items():
        if upper == alias.upper():
            return target
    for ch in ANALYSIS_CHANNELS + ("Fpz", "Oz", "A1", "A2"):
        if upper == ch.upper():
            return ch
    return s


@dataclass(frozen=True)
class Recording:
    """Multichannel EEG in microvolts.

    ``data`` has shape ``(n_channels, n_samples)``.
    """

    channels: tuple[str, ...]
    fs: float
    data: np.ndarray
    annotations: tuple[tuple[float, str], ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"data must be 2-D (channels x samples), got shape {data.shape}")
        if data.shape[0] != len(self.channels):
            raise ValueError(f"{len(self.channels)} labels for {data.shape[0]} data rows")
        if not self.fs > 0:
            raise ValueError(f"sampling rate must be positive, got {self.fs}")
        canon = [canonical_label(c) for c in self.channels]
        if len(set(canon)) != len(canon):
            raise ValueError(f"duplicate channel labels after canonicalisation: {canon}")
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.fs

    def replace(self, **changes) -> "Recording":
        kw = dict(channels=self.channels, fs=self.fs, data=self.data,
                  annotations=self.annotations, warnings=self.warnings)
        kw.update(changes)
        return Recording(**kw)


# ---------------------------------------------------------------- EDF reader

_HEADER_FIELDS = (
    ("version", 8), ("patient_id", 80), ("recording_id", 80),
    ("start_date", 8), ("start_time", 8), ("header_bytes", 8),
    ("reserved", 44), ("n_records", 8), ("record_duration", 8), ("n_signals", 4),
)
_SIGNAL_FIELDS = (
    ("label", 16), ("transducer", 80), ("physical_dimension", 8),
    ("physical_min", 8), ("physical_max", 8), ("digital_min", 8),
    ("digital_max", 8), ("prefiltering", 80), ("samples_per_record", 8),
    ("reserved", 32),
)
_UNIT_SCALE = {"uv": 1.0, "µv": 1.0, "μv": 1.0, "mv": 1e3, "v": 1e6, "nv": 1e-3}


def _parse_number(raw: bytes, name: str, kind=float):
    text = raw.decode("ascii", errors="replace").strip()
    try:
        return kind(text)
    except ValueError:
        raise EdfParseError(f"header field {name!r} is not a valid {kind.__name__}: {text!r}") from None


def _read_header(buf: bytes) -> dict:
    if len(buf) < 256:
        raise EdfParseError(f"file too short for EDF header: {len(buf)} bytes")
    hdr: dict = {}
    pos = 0
    for name, width in _HEADER_FIELDS:
        hdr[name] = buf[pos:pos + width]
        pos += width
    if hdr["version"].decode("ascii", errors="replace").strip() != "0":
        raise EdfParseError(f"header field 'version' must be '0', got {hdr['version']!r}")
    hdr["header_bytes"] = _parse_number(hdr["header_bytes"], "header_bytes", int)
    hdr["n_records"] = _parse_number(hdr["n_records"], "n_records", int)
    hdr["record_duration"] = _parse_number(hdr["record_duration"], "record_duration")
    ns = hdr["n_signals"] = _parse_number(hdr["n_signals"], "n_signals", int)
    if ns <= 0:
        raise EdfParseError(f"header field 'n_signals' must be positive, got {ns}")
    if hdr["n_records"] < 0:
        raise EdfParseError(
            f"header field 'n_records' is {hdr['n_records']}; unknown record counts are not supported")
    if hdr["record_duration"] <= 0:
        raise EdfParseError(f"header field 'record_duration' must be positive, got {hdr['record_duration']}")
    if hdr["header_bytes"] != 256 * (ns + 1):
        raise EdfParseError(
            f"header field 'header_bytes' is {hdr['header_bytes']}, expected {256 * (ns + 1)} for {ns} signals")
    if len(buf) < 256 * (ns + 1):
        raise EdfParseError(f"file too short for {ns} signal headers")

    signals: dict[str, list] = {}
    for name, width in _SIGNAL_FIELDS:
        vals = []
        for i in range(ns):
            raw = buf[pos + i * width: pos + (i + 1) * width]
            if name in ("physical_min", "physical_max"):
                vals.append(_parse_number(raw, f"{name}[{i}]"))
            elif name in ("digital_min", "digital_max", "samples_per_record"):
                vals.append(_parse_number(raw, f"{name}[{i}]", int))
            else:
                vals.append(raw.decode("latin-1").strip())
        signals[name] = vals
        pos += width * ns
    hdr["signals"] = signals
    return hdr


def load_recording(path: str | Path) -> Recording:
    """Read an EDF file into a :class:`Recording` in microvolts.

    Digital codes are mapped to physical values with each channel's
    calibration, then converted to microvolts from the declared physical
    dimension (unknown units are taken as microvolts). ``EDF Annotations``
    signals are skipped, as are signals whose sampling rate differs from the
    majority rate.
    """
    path = Path(path)
    buf = path.read_bytes()
    hdr = _read_header(buf)
    sig = hdr["signals"]
    ns = hdr["n_signals"]
    spr = np.array(sig["samples_per_record"], dtype=np.int64)
    if np.any(spr <= 0):
        bad = int(np.argmin(spr))
        raise EdfParseError(f"header field 'samples_per_record[{bad}]' must be positive")

    n_records = hdr["n_records"]
    record_bytes = int(spr.sum()) * 2
    expected = hdr["header_bytes"] + n_records * record_bytes
    if len(buf) < expected:
        raise EdfTruncatedError(
            f"data section truncated: expected {expected} bytes, found {len(buf)}")

    raw = np.frombuffer(buf, dtype="<i2", count=n_records * record_bytes // 2,
                        offset=hdr["header_bytes"]).reshape(n_records, -1)

    fs_all = spr / hdr["record_duration"]
    keep = [i for i in range(ns) if sig["label"][i] != "EDF Annotations"]
    rates, counts = np.unique(fs_all[keep], return_counts=True)
    fs = float(rates[np.argmax(counts)])
    notes = []
    channels, rows = [], []
    offsets = np.concatenate([[0], np.cumsum(spr)])
    for i in keep:
        label = sig["label"][i]
        if fs_all[i] != fs:
            logger.info("dropping %s: sampling rate %.3f Hz differs from %.3f Hz", label, fs_all[i], fs)
            notes.append(f"dropped {label}: sampling rate {fs_all[i]:g} Hz")
            continue
        dmin, dmax = sig["digital_min"][i], sig["digital_max"][i]
        pmin, pmax = sig["physical_min"][i], sig["physical_max"][i]
        if pmax == pmin:
            raise EdfCalibrationError(f"channel {label!r} has zero physical range ({pmin})")
        if dmax == dmin:
            raise EdfCalibrationError(f"channel {label!r} has zero digital range ({dmin})")
        codes = raw[:, offsets[i]:offsets[i + 1]].reshape(-1).astype(np.float64)
        gain = (pmax - pmin) / (dmax - dmin)
        values = (codes - dmin) * gain + pmin
        unit = sig["physical_dimension"][i].strip().lower()
        values *= _UNIT_SCALE.get(unit, 1.0)
        channels.append(label)
        rows.append(values)
    if not rows:
        raise EdfParseError("no data signals found")
    return Recording(channels=tuple(channels), fs=fs, data=np.vstack(rows), warnings=tuple(notes))


def _field(value, width: int) -> bytes:
    text = value if isinstance(value, str) else _fmt_number(value)
    raw = text.encode("ascii")
    if len(raw) > width:
        raise ValueError(f"value {text!r} does not fit in {width} bytes")
    return raw.ljust(width, b" ")


def _fmt_number(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x == int(x) and abs(x) < 1e7:
        return str(int(x))
    for digits in range(8, 0, -1):
        text = f"{x:.{digits}g}"
        if len(text) <= 8:
            return text
    raise ValueError(f"cannot format {x!r} in 8 characters")


def write_edf(
    path: str | Path,
    rec: Recording,
    *,
    record_duration: float = 1.0,
    physical_min: Sequence[float] | float | None = None,
    physical_max: Sequence[float] | float | None = None,
    digital_min: int = -32768,
    digital_max: int = 32767,
    physical_dimension: str = "uV",
) -> np.ndarray:
    """Serialise ``rec`` as EDF and return the digital codes written.

    Physical ranges default to the symmetric per-channel absolute maximum.
    The sample count must be a whole number of records.
    """
    n_ch, n = rec.data.shape
    spr = rec.fs * record_duration
    if abs(spr - round(spr)) > 1e-9:
        raise ValueError("fs * record_duration must be an integer")
    spr = int(round(spr))
    if n % spr:
        raise ValueError(f"{n} samples is not a whole number of {spr}-sample records")
    n_records = n // spr

    def _per_channel(v, default):
        if v is None:
            return default
        return np.broadcast_to(np.asarray(v, dtype=np.float64), (n_ch,)).copy()

    peak = np.ceil(np.maximum(np.abs(rec.data).max(axis=1), 1.0))
    pmin = _per_channel(physical_min, -peak)
    pmax = _per_channel(physical_max, peak)
    # header text fields are limited to 8 characters; recompute gains from
    # the values that actually land in the file so reload is exact
    pmin = np.array([float(_fmt_number(v)) for v in pmin])
    pmax = np.array([float(_fmt_number(v)) for v in pmax])
    gain = (pmax - pmin) / (digital_max - digital_min)
    codes = np.round((rec.data - pmin[:, None]) / gain[:, None] + digital_min)
    codes = np.clip(codes, digital_min, digital_max).astype("<i2")

    head = b"".join([
        _field("0", 8), _field("X X X X", 80), _field("Startdate X X X X", 80),
        _field("01.01.00", 8), _field("00.00.00", 8),
        _field(256 * (n_ch + 1), 8), _field("", 44), _field(n_records, 8),
        _field(record_duration, 8), _field(n_ch, 4),
    ])
    sig = b"".join(_field(c, 16) for c in rec.channels)
    sig += b"".join(_field("AgAgCl electrode", 80) for _ in range(n_ch))
    sig += b"".join(_field(physical_dimension, 8) for _ in range(n_ch))
    sig += b"".join(_field(v, 8) for v in pmin)
    sig += b"".join(_field(v, 8) for v in pmax)
    sig += b"".join(_field(digital_min, 8) for _ in range(n_ch))
    sig += b"".join(_field(digital_max, 8) for _ in range(n_ch))
    sig += b"".join(_field("", 80) for _ in range(n_ch))
    sig += b"".join(_field(spr, 8) for _ in range(n_ch))
    sig += b"".join(_field("", 32) for _ in range(n_ch))
    body = codes.reshape(n_ch, n_records, spr).transpose(1, 0, 2).tobytes()
    Path(path).write_bytes(head + sig + body)
    return codes


# -------------------------------------------------------------- annotations

def load_annotations(path: str | Path) -> list[tuple[float, str]]:
    """Parse an ``onset<TAB>label`` sidecar, sorted by onset.

    Blank lines are ignored; labels are kept verbatim.
    """
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            onset_text, _, label = line.partition("\t")
            try:
                onset = float(onset_text)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cannot parse onset {onset_text!r}") from None
            if not np.isfinite(onset):
                raise ValueError(f"{path}:{lineno}: onset must be finite, got {onset_text!r}")
            out.append((onset, label))
    out.sort(key=lambda a: a[0])
    return out


def annotation_warnings(annotations, duration_s: float) -> list[str]:
    """Messages for annotations falling outside ``[0, duration_s]``."""
    return [f"annotation {label!r} at {onset:g} s lies outside [0, {duration_s:g}] s"
            for onset, label in annotations if not 0.0 <= onset <= duration_s]


# ------------------------------------------------------------------ montage

def apply_montage(rec: Recording, montage: MontageMap = STANDARD_MONTAGE) -> Recording:
    """Restrict ``rec`` to the montage channels, in montage order.

    Labels are matched case-insensitively after canonicalisation, so ``T7``
    is accepted for ``T3``. Extra channels (reference, auricular, ECG) are
    dropped with a log entry.
    """
    lookup: dict[str, int] = {}
    for i, label in enumerate(rec.channels):
        lookup[canonical_label(label).upper()] = i
    missing = [ch for ch in montage.analysis_channels if ch.upper() not in lookup]
    if missing:
        raise MontageError(f"recording is missing analysis channels: {', '.join(missing)}")
    idx = [lookup[ch.upper()] for ch in montage.analysis_channels]
    dropped = [rec.channels[i] for i in range(len(rec.channels)) if i not in set(idx)]
    for label in dropped:
        kind = "non-EEG" if _NON_EEG.search(label) else "non-analysis"
        logger.info("dropping %s channel %s", kind, label)
    ann = tuple(rec.annotations)
    notes = tuple(rec.warnings) + tuple(annotation_warnings(ann, rec.duration_s))
    return Recording(channels=montage.analysis_channels, fs=rec.fs, data=rec.data[idx],
                     annotations=ann, warnings=tuple(dict.fromkeys(notes)))


def crop(rec: Recording, seconds: float) -> Recording:
    """Keep only the first ``seconds`` of the recording."""
    n = min(rec.n_samples, int(round(seconds * rec.fs)))
    ann = tuple(a for a in rec.annotations if a[0] < seconds)
    return rec.replace(data=rec.data[:, :n], annotations=ann)
