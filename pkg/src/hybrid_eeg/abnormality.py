"""Rule-based background abnormality classification.

Generalized slowing comes from the PDR and slow-wave ratio. Asymmetry and
focal slowing use left-right band power ratios, scored per side with a
neighbour requirement for focal slowing. All thresholds are strict.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

from .edf import STANDARD_MONTAGE, MontageMap
from .spectral import LRRatio

# Values within this of a threshold count as equal to it, so hand-summed
# scores such as 0.8 + 0.7 + 0.9 do not cross 2.4 through rounding.
_TOL = 1e-9


def _above(x: float, t: float) -> bool:
    return x > t + _TOL


def _below(x: float, t: float) -> bool:
    return x < t - _TOL

# Order in which lateral electrodes are visited: right hemisphere, then left.
LATERAL_ELECTRODES = ("F8", "F4", "C4", "T4", "T6", "P4", "O2",
                      "F7", "F3", "C3", "T3", "T5", "P3", "O1")


@dataclass(frozen=True)
class Thresholds:
    gbs_pdr_hz: float = 7.5
    gbs_pdr_with_slow_hz: float = 8.0
    slow_ratio_pct: float = 50.0
    lr_ratio: float = 0.5
    pdr_difference_hz: float = 1.0
    alpha_score: float = 1.6
    focal_score: float = 2.4

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_THRESHOLDS = Thresholds()


def detect_gbs(pdr_left: float | None, pdr_right: float | None, slow_ratio_total: float,
               thresholds: Thresholds = DEFAULT_THRESHOLDS) -> bool:
    """Generalized background slowing from bilateral PDR and slow ratio."""
    if pdr_left is None or pdr_right is None:
        raise ValueError("both hemispheric PDR values are required")
    t = thresholds
    if _below(pdr_left, t.gbs_pdr_hz) and _below(pdr_right, t.gbs_pdr_hz):
        return True
    return (_below(pdr_left, t.gbs_pdr_with_slow_hz) and _below(pdr_right, t.gbs_pdr_with_slow_hz)
            and _above(slow_ratio_total, t.slow_ratio_pct))


def attribute_pairs(ratio: LRRatio | Mapping[tuple[str, str], float],
                    artifact_channels: Iterable[str] = ()) -> dict[str, float]:
    """Spread mirror-pair ratios over the 14 lateral electrodes.

    Each pair's ratio is given to the member on the stronger side (the left
    electrode when positive, the right when negative) and the partner gets 0,
    so each pair is counted once. Pairs touching an artifact channel get 0 on
    both members.
    """
    pairs = ratio.pairs if isinstance(ratio, LRRatio) else ratio
    bad = set(artifact_channels)
    out = {}
    for (left, right), r in pairs.items():
        if left in bad or right in bad:
            out[left] = out[right] = 0.0
        elif r >= 0:
            out[left], out[right] = float(r), 0.0
        else:
            out[left], out[right] = 0.0, float(r)
    return out


@dataclass(frozen=True)
class AlphaScore:
    score_left: float
    score_right: float
    asymmetric: bool
    contributing: tuple[str, ...] = ()


def alpha_amplitude_score(lr_alpha: Mapping[str, float], artifact_channels: Iterable[str] = (),
                          thresholds: Thresholds = DEFAULT_THRESHOLDS,
                          electrodes: Iterable[str] | None = None) -> AlphaScore:
    """Accumulate ``|R|`` of alpha ratios above 0.5 onto the stronger side."""
    bad = set(artifact_channels)
    left = right = 0.0
    hits = []
    order = list(electrodes) if electrodes is not None else \
        [e for e in LATERAL_ELECTRODES if e in lr_alpha] + [e for e in lr_alpha if e not in LATERAL_ELECTRODES]
    for e in order:
        if e in bad or e not in lr_alpha:
            continue
        r = lr_alpha[e]
        if _above(abs(r), thresholds.lr_ratio):
            hits.append(e)
            if r > 0:
                left += abs(r)
            else:
                right += abs(r)
    asym = _above(left, thresholds.alpha_score) or _above(right, thresholds.alpha_score)
    return AlphaScore(left, right, asym, tuple(hits))


def detect_asymmetry(pdr_left: float, pdr_right: float, alpha: AlphaScore,
                     thresholds: Thresholds = DEFAULT_THRESHOLDS) -> tuple[bool, str | None]:
    if _above(abs(pdr_left - pdr_right), thresholds.pdr_difference_hz):
        return True, "pdr_diff"
    if alpha.asymmetric:
        return True, "amplitude"
    return False, None


@dataclass(frozen=True)
class FocalResult:
    score_left: float
    score_right: float
    abnormal_electrodes: tuple[str, ...]
    focal: bool


def focal_slow(ratios: Mapping[str, tuple[float, float]], artifact_channels: Iterable[str] = (),
               montage: MontageMap = STANDARD_MONTAGE,
               thresholds: Thresholds = DEFAULT_THRESHOLDS) -> FocalResult:
    """Focal slow-wave score from per-electrode (theta, delta) ratios.

    An electrode is abnormal when either ratio exceeds 0.5 in magnitude and
    at least one non-artifact neighbour does too. The ratios of abnormal
    electrodes above 0.5 are summed onto the side given by their sign.
    """
    bad = set(artifact_channels)
    thr = thresholds.lr_ratio

    def hot(e: str) -> bool:
        if e in bad or e not in ratios:
            return False
        theta, delta = ratios[e]
        return _above(abs(theta), thr) or _above(abs(delta), thr)

    order = [e for e in LATERAL_ELECTRODES if e in ratios] + \
        [e for e in ratios if e not in LATERAL_ELECTRODES]
    abnormal = [e for e in order
                if hot(e) and any(hot(j) for j in montage.neighbors(e))]
    left = right = 0.0
    for e in abnormal:
        for r in ratios[e]:
            if _above(abs(r), thr):
                if r > 0:
                    left += abs(r)
                else:
                    right += abs(r)
    focal = _above(left, thresholds.focal_score) or _above(right, thresholds.focal_score)
    return FocalResult(left, right, tuple(abnormal), focal)


# Region phrases for report localisation, keyed by (hemisphere, lobe set).
_LOBE = {
    "Fp1": "frontal", "Fp2": "frontal", "F3": "frontal", "F4": "frontal",
    "F7": "frontotemporal", "F8": "frontotemporal",
    "T3": "temporal", "T4": "temporal", "T5": "temporal", "T6": "temporal",
    "C3": "central", "C4": "central", "P3": "parietal", "P4": "parietal",
    "O1": "occipital", "O2": "occipital",
}
_REGION_JOIN = {
    frozenset({"frontal"}): "frontal",
    frozenset({"frontotemporal"}): "frontotemporal",
    frozenset({"frontal", "frontotemporal"}): "frontotemporal",
    frozenset({"temporal"}): "temporal",
    frozenset({"frontotemporal", "temporal"}): "frontotemporal",
    frozenset({"frontal", "temporal"}): "frontotemporal",
    frozenset({"frontal", "frontotemporal", "temporal"}): "frontotemporal",
    frozenset({"central"}): "central",
    frozenset({"frontal", "central"}): "frontocentral",
    frozenset({"temporal", "central"}): "centrotemporal",
    frozenset({"parietal"}): "parietal",
    frozenset({"central", "parietal"}): "centroparietal",
    frozenset({"temporal", "parietal"}): "temporoparietal",
    frozenset({"occipital"}): "occipital",
    frozenset({"parietal", "occipital"}): "parieto-occipital",
    frozenset({"temporal", "occipital"}): "temporo-occipital",
    frozenset({"temporal", "parietal", "occipital"}): "temporo-parieto-occipital",
}


def region_phrase(electrodes: Iterable[str], montage: MontageMap = STANDARD_MONTAGE) -> str:
    """Describe an electrode set, e.g. {F8, F4} -> "right frontotemporal region"."""
    es = [e for e in electrodes if e in _LOBE]
    if not es:
        return "unspecified region"
    sides = {montage.hemisphere[e] for e in es}
    side = sides.pop() if len(sides) == 1 else "bilateral"
    lobes = frozenset(_LOBE[e] for e in es)
    region = _REGION_JOIN.get(lobes) if len(lobes) <= 2 else None
    if region is None:
        # wider spread: name the lobe holding most of the electrodes
        counts = Counter(_LOBE[e] for e in es).most_common()
        if len(counts) == 1 or counts[0][1] > counts[1][1]:
            region = counts[0][0]
        else:
            region = _REGION_JOIN.get(lobes, "hemispheric")
    return f"{side} {region} region"


@dataclass
class AbnormalityFindings:
    gbs: bool
    asymmetry: bool
    asymmetry_reason: str | None
    focal_slow: bool
    focal_electrodes: tuple[str, ...]
    alpha_low_electrodes: tuple[str, ...]
    alpha_low_side: str | None
    scores: dict = field(default_factory=dict)
    thresholds_used: dict = field(default_factory=dict)

    @property
    def focal_abnormality(self) -> bool:
        """Focal indicator as used for verification: asymmetry or focal slowing."""
        return self.asymmetry or self.focal_slow

    def to_dict(self) -> dict:
        d = asdict(self)
        d["focal_electrodes"] = list(self.focal_electrodes)
        d["alpha_low_electrodes"] = list(self.alpha_low_electrodes)
        return d


def assemble_findings(gbs: bool, asymmetry: tuple[bool, str | None], alpha: AlphaScore,
                      focal: FocalResult, montage: MontageMap = STANDARD_MONTAGE,
                      thresholds: Thresholds = DEFAULT_THRESHOLDS) -> AbnormalityFindings:
    """Bundle detector outputs.

    With amplitude asymmetry, the reduced-alpha electrodes are the mirror
    partners, on the weaker side, of the electrodes that drove the score.
    """
    low_side = None
    low = ()
    if alpha.asymmetric:
        low_side = "right" if alpha.score_left >= alpha.score_right else "left"
        strong = "left" if low_side == "right" else "right"
        weak = {montage.mirror(e) for e in alpha.contributing if montage.hemisphere[e] == strong}
        low = tuple(e for e in LATERAL_ELECTRODES if e in weak)
    return AbnormalityFindings(
        gbs=bool(gbs),
        asymmetry=bool(asymmetry[0]),
        asymmetry_reason=asymmetry[1],
        focal_slow=bool(focal.focal),
        focal_electrodes=tuple(focal.abnormal_electrodes) if focal.focal else (),
        alpha_low_electrodes=low,
        alpha_low_side=low_side,
        scores={"alpha_left": alpha.score_left, "alpha_right": alpha.score_right,
                "focal_left": focal.score_left, "focal_right": focal.score_right},
        thresholds_used=thresholds.as_dict(),
    )


def classify(pdr_left: float, pdr_right: float, slow_ratio_total: float,
             lr: Mapping[str, LRRatio], artifact_channels: Iterable[str] = (),
             montage: MontageMap = STANDARD_MONTAGE,
             thresholds: Thresholds = DEFAULT_THRESHOLDS) -> AbnormalityFindings:
    """Run all three detectors from recording-level features."""
    bad = tuple(artifact_channels)
    gbs = detect_gbs(pdr_left, pdr_right, slow_ratio_total, thresholds)
    alpha = alpha_amplitude_score(attribute_pairs(lr["alpha"], bad), bad, thresholds)
    asym = detect_asymmetry(pdr_left, pdr_right, alpha, thresholds)
    theta = attribute_pairs(lr["theta"], bad)
    delta = attribute_pairs(lr["delta"], bad)
    per_electrode = {e: (theta[e], delta[e]) for e in theta}
    focal = focal_slow(per_electrode, bad, montage, thresholds)
    return assemble_findings(gbs, asym, alpha, focal, montage, thresholds)
