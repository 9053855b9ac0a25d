import itertools

import pytest
from hypothesis import given, strategies as st

from hybrid_eeg.abnormality import (LATERAL_ELECTRODES, Thresholds, alpha_amplitude_score,
                                    assemble_findings, attribute_pairs, classify, detect_asymmetry,
                                    detect_gbs, focal_slow, region_phrase)
from hybrid_eeg.edf import MIRROR_PAIRS
from hybrid_eeg.spectral import LRRatio

# PDR value realising each (below 7.5, below 8) pair; (True, False) cannot occur
PDR_FOR = {(True, True): 7.0, (False, True): 7.8, (False, False): 9.0}


def gbs_oracle(below75, below8, slow_high):
    return below75 or (below8 and slow_high)


@pytest.mark.parametrize("below75,below8,slow_high", list(itertools.product([True, False], repeat=3)))
def test_gbs_truth_table(below75, below8, slow_high):
    if below75 and not below8:
        # a PDR under 7.5 Hz is always under 8 Hz; confirm no value realises the row
        assert not any(p < 7.5 and not p < 8.0 for p in (7.0, 7.49, 7.5, 7.99, 8.0))
        return
    pdr = PDR_FOR[(below75, below8)]
    slow = 55.0 if slow_high else 40.0
    assert detect_gbs(pdr, pdr, slow) is gbs_oracle(below75, below8, slow_high)


@pytest.mark.parametrize("left,right,slow,expected", [
    (7.0, 7.2, 40.0, True),
    (7.8, 7.9, 55.0, True),
    (9.5, 9.4, 45.0, False),
    (7.0, 9.0, 80.0, False),
    (7.5, 7.5, 40.0, False),
    (7.9, 7.9, 50.0, False),
    (8.0, 7.0, 90.0, False),
])
def test_gbs_cases(left, right, slow, expected):
    assert detect_gbs(left, right, slow) is expected


def test_gbs_requires_both_pdrs():
    with pytest.raises(ValueError, match="PDR"):
        detect_gbs(None, 9.0, 30.0)


@given(st.floats(4, 12), st.floats(4, 12), st.floats(0, 100), st.floats(0, 2), st.floats(0, 20))
def test_gbs_monotone(l, r, s, dl, ds):
    if detect_gbs(l, r, s):
        assert detect_gbs(l - dl, r, s + ds)


def test_alpha_score_hand_traces():
    a = alpha_amplitude_score({"F3": 0.6, "C3": -0.7, "P3": 0.4})
    assert (a.score_left, a.score_right, a.asymmetric) == pytest.approx((0.6, 0.7, False))
    a = alpha_amplitude_score({"F3": 0.9, "C3": 0.8})
    assert a.score_left == pytest.approx(1.7) and a.asymmetric
    a = alpha_amplitude_score({e: 0.0 for e in LATERAL_ELECTRODES})
    assert (a.score_left, a.score_right, a.asymmetric) == (0.0, 0.0, False)
    a = alpha_amplitude_score({"F3": 0.9, "C3": 0.8}, artifact_channels=("F3", "C3"))
    assert (a.score_left, a.score_right) == (0.0, 0.0)


def test_alpha_threshold_is_strict():
    assert alpha_amplitude_score({"F3": 0.5}).score_left == 0.0
    assert not alpha_amplitude_score({"F3": 0.8, "C3": 0.8}).asymmetric


def test_pair_attribution_counts_each_pair_once():
    out = attribute_pairs({("F3", "F4"): 0.9, ("C3", "C4"): -0.8, ("O1", "O2"): 0.7}, ("O2",))
    assert out == {"F3": 0.9, "F4": 0.0, "C3": 0.0, "C4": -0.8, "O1": 0.0, "O2": 0.0}


@pytest.mark.parametrize("l,r,score_r,expected", [
    (9.5, 8.3, 0.0, (True, "pdr_diff")),
    (9.0, 9.0, 1.7, (True, "amplitude")),
    (9.0, 9.0, 1.6, (False, None)),
    (9.0, 8.0, 0.0, (False, None)),
    (9.5, 8.3, 1.7, (True, "pdr_diff")),
])
def test_asymmetry(l, r, score_r, expected):
    alpha = alpha_amplitude_score({"C4": -score_r})
    assert detect_asymmetry(l, r, alpha) == expected


def test_focal_boundary_hand_trace():
    ratios = {e: (0.0, 0.0) for e in LATERAL_ELECTRODES}
    ratios.update({"T3": (0.8, 0.0), "T5": (0.7, 0.0), "C3": (0.0, 0.9)})
    r = focal_slow(ratios)
    assert set(r.abnormal_electrodes) == {"T3", "T5", "C3"}
    assert r.score_left == pytest.approx(2.4) and not r.focal
    ratios["F7"] = (0.6, 0.0)
    r = focal_slow(ratios)
    assert r.score_left == pytest.approx(3.0) and r.focal
    assert set(r.abnormal_electrodes) == {"T3", "T5", "C3", "F7"}


def test_focal_needs_neighbour_support():
    ratios = {e: (0.0, 0.0) for e in LATERAL_ELECTRODES}
    ratios["O1"] = (1.5, 0.0)
    r = focal_slow(ratios)
    assert r.abnormal_electrodes == () and not r.focal
    assert focal_slow({e: (0.0, 0.0) for e in LATERAL_ELECTRODES}).score_left == 0.0


def test_artifact_neighbour_gives_no_support():
    ratios = {e: (0.0, 0.0) for e in LATERAL_ELECTRODES}
    ratios.update({"T3": (0.8, 0.0), "T5": (0.9, 0.0)})
    assert set(focal_slow(ratios).abnormal_electrodes) == {"T3", "T5"}
    assert focal_slow(ratios, artifact_channels=("T5",)).abnormal_electrodes == ()


ratio_vals = st.floats(-2, 2, allow_nan=False)
ratio_maps = st.fixed_dictionaries({e: st.tuples(ratio_vals, ratio_vals) for e in LATERAL_ELECTRODES})
MIRROR = {**{l: r for l, r in MIRROR_PAIRS}, **{r: l for l, r in MIRROR_PAIRS}}


@given(ratio_maps)
def test_mirror_symmetry(ratios):
    mirrored = {MIRROR[e]: (-t, -d) for e, (t, d) in ratios.items()}
    a, b = focal_slow(ratios), focal_slow(mirrored)
    assert (a.score_left, a.score_right) == pytest.approx((b.score_right, b.score_left))
    alpha = {e: t for e, (t, _) in ratios.items()}
    neg = {e: -v for e, v in alpha.items()}
    x, y = alpha_amplitude_score(alpha), alpha_amplitude_score(neg)
    assert (x.score_left, x.score_right) == pytest.approx((y.score_right, y.score_left))


@given(ratio_maps, st.sampled_from(LATERAL_ELECTRODES))
def test_artifacts_never_raise_scores(ratios, extra):
    a, b = focal_slow(ratios), focal_slow(ratios, (extra,))
    assert b.score_left <= a.score_left + 1e-12 and b.score_right <= a.score_right + 1e-12
    alpha = {e: t for e, (t, _) in ratios.items()}
    x, y = alpha_amplitude_score(alpha), alpha_amplitude_score(alpha, (extra,))
    assert y.score_left <= x.score_left + 1e-12 and y.score_right <= x.score_right + 1e-12


def test_invariants_hold_on_findings():
    ratios = {e: (0.0, 0.0) for e in LATERAL_ELECTRODES}
    ratios.update({"T3": (0.9, 0.9), "T5": (0.8, 0.0), "F7": (0.7, 0.0)})
    alpha = alpha_amplitude_score({"O1": 0.9, "P3": 0.9})
    f = assemble_findings(False, detect_asymmetry(9, 9, alpha), alpha, focal_slow(ratios),
                          thresholds=Thresholds(alpha_score=1.5))
    assert f.focal_slow and f.focal_electrodes
    assert max(f.scores["focal_left"], f.scores["focal_right"]) > 2.4
    assert f.asymmetry_reason == "amplitude" and f.alpha_low_side == "right"
    assert set(f.alpha_low_electrodes) == {"O2", "P4"}
    assert f.thresholds_used == Thresholds(alpha_score=1.5).as_dict()


def test_all_false_findings():
    alpha = alpha_amplitude_score({})
    f = assemble_findings(False, (False, None), alpha, focal_slow({}))
    assert not (f.gbs or f.asymmetry or f.focal_slow or f.focal_abnormality)
    assert f.focal_electrodes == ()


@pytest.mark.parametrize("electrodes,phrase", [
    ({"F8", "F4"}, "right frontotemporal region"),
    ({"T3", "T5"}, "left temporal region"),
    ({"F7", "C3", "T3", "T5"}, "left temporal region"),
    ({"O2"}, "right occipital region"),
])
def test_region_phrase(electrodes, phrase):
    assert region_phrase(electrodes) == phrase


def _lr(band, pairs):
    full = {p: pairs.get(p[0], 0.0) for p in MIRROR_PAIRS}
    return LRRatio(band, full, 0.0)


def test_classify_left_temporal_focus():
    lr = {"alpha": _lr("alpha", {}),
          "theta": _lr("theta", {"T3": 1.2, "T5": 0.8, "F7": 0.7, "C3": 0.6}),
          "delta": _lr("delta", {})}
    f = classify(10.0, 10.0, 30.0, lr)
    assert f.focal_slow and not f.gbs and not f.asymmetry
    assert set(f.focal_electrodes) == {"T3", "T5", "F7", "C3"}
    assert region_phrase(f.focal_electrodes) == "left temporal region"


def test_thresholds_survive_float_rounding():
    assert 8.3 - 7.3 > 1.0
    assert detect_asymmetry(8.3, 7.3, alpha_amplitude_score({})) == (False, None)
    assert 0.9 + 0.8 + 0.7 > 2.4
