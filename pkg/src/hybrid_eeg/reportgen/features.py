"""Structured findings handed to the report writer."""
from __future__ import annotations

import json
from typing import Mapping

from ..abnormality import AbnormalityFindings, region_phrase

REPORT_KEYS = ("EEG_quality", "bad_channels", "backgroundFrequency", "bg_active", "bg_amp",
               "bg_amp_sym", "bg_freq", "abnormalFindings")

FOCAL_HEADLINE = "Focal slow wave or asymmetric abnormality detected"
GBS_HEADLINE = "Generalized background slowing detected"


class ReportFeatures(dict):
    """Mapping with exactly the :data:`REPORT_KEYS`, kept in that order."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        keys = set(self)
        if keys != set(REPORT_KEYS):
            missing = sorted(set(REPORT_KEYS) - keys)
            extra = sorted(keys - set(REPORT_KEYS))
            raise ValueError(f"report features key mismatch: missing {missing}, unexpected {extra}")
        if not isinstance(self["abnormalFindings"], list):
            raise ValueError("abnormalFindings must be a list")
        ordered = [(k, self[k]) for k in REPORT_KEYS]
        self.clear()
        self.update(ordered)

    def to_json(self) -> str:
        return json.dumps(self, indent=2, ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "ReportFeatures":
        return cls(json.loads(text))


def eeg_quality(n_included: int, n_epochs: int, min_epochs: int = 10) -> str:
    """Good / Fair / Poor by the share of epochs that survived selection."""
    if n_epochs == 0 or n_included < min_epochs:
        return "Poor"
    share = n_included / n_epochs
    if share >= 0.5:
        return "Good"
    return "Fair" if share >= 0.2 else "Poor"


def amplitude_bucket(alpha_amplitude_uv: float) -> str:
    if alpha_amplitude_uv < 10:
        return "low (<10 uV)"
    if alpha_amplitude_uv <= 50:
        return "medium (10-50 uV)"
    return "high (>50 uV)"


def format_frequency(pdr_right: float, pdr_left: float) -> str:
    return f"Right: {pdr_right:.1f} Hz, Left: {pdr_left:.1f} Hz"


def build_feature_json(findings: AbnormalityFindings, pdr: Mapping[str, float],
                       alpha_amplitude_uv: float, bad_channels=(), quality: str = "Good"
                       ) -> ReportFeatures:
    """Map detector output onto the report feature object.

    ``pdr`` holds ``left`` and ``right`` in Hz. The findings list gets one
    entry per abnormality family; focal entries join their details with ``;``.
    """
    if findings.asymmetry and findings.alpha_low_side:
        amp_sym = f"lower in {findings.alpha_low_side}"
    else:
        amp_sym = "symmetric"
    if findings.asymmetry_reason == "pdr_diff":
        slower = "left" if pdr["left"] < pdr["right"] else "right"
        freq_sym = f"asymmetric, slower in {slower}"
    else:
        freq_sym = "symmetric"

    abnormal = []
    if findings.gbs:
        abnormal.append(GBS_HEADLINE)
    if findings.focal_abnormality:
        parts = [FOCAL_HEADLINE]
        if findings.asymmetry_reason == "pdr_diff":
            parts.append(f"Background frequency asymmetry ({format_frequency(pdr['right'], pdr['left'])})")
        if findings.alpha_low_electrodes:
            parts.append(f"Lower alpha amplitude in {', '.join(findings.alpha_low_electrodes)} channels")
        if findings.focal_slow:
            parts.append(f"Focal slow waves in {', '.join(findings.focal_electrodes)} channels "
                         f"({region_phrase(findings.focal_electrodes)})")
        abnormal.append(";".join(parts))

    return ReportFeatures({
        "EEG_quality": quality,
        "bad_channels": list(bad_channels),
        "backgroundFrequency": format_frequency(pdr["right"], pdr["left"]),
        "bg_active": "Generalized background slowing" if findings.gbs else "Normal background frequency",
        "bg_amp": amplitude_bucket(alpha_amplitude_uv),
        "bg_amp_sym": amp_sym,
        "bg_freq": freq_sym,
        "abnormalFindings": abnormal,
    })
