import numpy as np
import pytest

from hybrid_eeg.edf import Recording
from hybrid_eeg.preprocess import (band_ratios, rereference, segment_epochs, select_wake_epochs)
from hybrid_eeg.spectral import epoch_psds

FS = 125.0


def _rec(rng, seconds=40, n_ch=3, annotations=()):
    return Recording(tuple(f"c{i}" for i in range(n_ch)), FS,
                     rng.normal(0, 5, (n_ch, int(seconds * FS))), annotations)


def test_average_reference_zero_mean(rng):
    out = rereference(_rec(rng), "average")
    np.testing.assert_allclose(out.data.sum(axis=0), 0.0, atol=1e-9)


def test_rest_applies_matrix_and_validates_shape(rng, tmp_path):
    rec = _rec(rng)
    g = rng.normal(size=(3, 3))
    np.testing.assert_allclose(rereference(rec, "rest", g).data, g @ rec.data)
    p = tmp_path / "g.txt"
    np.savetxt(p, g)
    np.testing.assert_allclose(rereference(rec, "rest", p).data, g @ rec.data)
    with pytest.raises(ValueError, match="expected"):
        rereference(rec, "rest", np.eye(2))
    with pytest.raises(ValueError, match="transfer matrix"):
        rereference(rec, "rest")
    with pytest.raises(ValueError, match="unknown"):
        rereference(rec, "linked-ears")
    assert rereference(rec, "none") is rec


def test_epoching_drops_partial_tail(rng):
    rec = _rec(rng, seconds=10.5)
    es = segment_epochs(rec, 4.0)
    assert es.n_epochs == 2 and es.samples_per_epoch == 500
    np.testing.assert_array_equal(es.epochs[1, 2], rec.data[2, 500:1000])
    np.testing.assert_array_equal(es.to_continuous(), rec.data[:, :1000])
    np.testing.assert_array_equal(es.source_offsets_s, [0.0, 4.0])


def test_epoching_short_recording(rng):
    assert segment_epochs(_rec(rng, seconds=3), 4.0).n_epochs == 0


def test_epoch_length_must_be_whole_samples(rng):
    with pytest.raises(ValueError, match="whole number"):
        segment_epochs(_rec(rng), 4.003)


def _select(es, annotations=(), **kw):
    return select_wake_epochs(es, annotations, epoch_psds(es.epochs, es.fs), **kw)


def test_eye_annotation_excludes_containing_epoch_only(rng):
    es = segment_epochs(_rec(rng), 4.0)
    sel = _select(es, [(8.0, "Eyes Open"), (13.9, "EC"), (21.0, "photic 5 Hz"), (99.0, "eye close")])
    assert np.flatnonzero(sel.eye_event).tolist() == [2, 3]


def test_amplitude_rule_is_strict(rng):
    rec = _rec(rng)
    data = rec.data.copy()
    data[0, 10] = 150.0
    data[1, 700] = -150.0001
    es = segment_epochs(rec.replace(data=data), 4.0)
    sel = _select(es)
    assert not sel.high_amplitude[0] and sel.high_amplitude[1]


def test_spectral_outlier_rule_oracle(rng):
    rec = _rec(rng, seconds=80)
    data = rec.data.copy()
    t = np.arange(500) / FS
    data[:, 5 * 500:6 * 500] += 40 * np.sin(2 * np.pi * 2.0 * t)
    es = segment_epochs(rec.replace(data=data), 4.0)
    freqs, power = epoch_psds(es.epochs, FS)
    beta, delta = band_ratios(freqs, power)
    limit = delta.mean() + 2.2 * delta.std()
    sel = select_wake_epochs(es, (), (freqs, power))
    assert sel.thresholds["delta_ratio_limit"] == pytest.approx(limit)
    assert sel.spectral_outlier[5]
    np.testing.assert_array_equal(sel.spectral_outlier, (delta > limit)
                                  | (beta > beta.mean() + 2.2 * beta.std()))
    assert sel.n_included == es.n_epochs - sel.spectral_outlier.sum()


def test_spectral_statistics_ignore_earlier_exclusions(rng):
    rec = _rec(rng, seconds=80)
    data = rec.data.copy()
    data[0, 100] = 1000.0
    es = segment_epochs(rec.replace(data=data), 4.0)
    sel = _select(es)
    base = ~sel.high_amplitude
    mu, sd = sel.delta_ratio[base].mean(), sel.delta_ratio[base].std()
    assert sel.thresholds["delta_ratio_limit"] == pytest.approx(mu + 2.2 * sd)


def test_selection_computes_psd_when_omitted(rng):
    es = segment_epochs(_rec(rng), 4.0)
    a = select_wake_epochs(es)
    b = _select(es)
    np.testing.assert_array_equal(a.include_mask, b.include_mask)
