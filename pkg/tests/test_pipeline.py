import json

import httpx
import numpy as np
import pytest

from hybrid_eeg.cli import main
from hybrid_eeg.edf import Recording
from hybrid_eeg.pdr import make_synthetic_corpus, write_manifest
from hybrid_eeg.pipeline import PipelineError, analyze_recording
from hybrid_eeg.reportgen import REPORT_KEYS, mock_clients, structure_problems
from hybrid_eeg.synthetic import synthetic_recording, write_fixture


@pytest.fixture(scope="module")
def fixtures(tmp_path_factory):
    d = tmp_path_factory.mktemp("edf")
    normal, _ = write_fixture(d, "normal", synthetic_recording("normal", seed=1))
    focal, _ = write_fixture(d, "focal", synthetic_recording("focal_left_temporal", seed=2))
    return normal, focal


@pytest.fixture
def no_network(monkeypatch):
    def refuse(*a, **k):
        raise AssertionError("network access attempted")
    monkeypatch.setattr(httpx.Client, "send", refuse)


def test_normal_recording_end_to_end(normal_rec):
    gen, vers = mock_clients()
    res = analyze_recording(normal_rec, recording_id="n", generator=gen, verifiers=vers)
    assert res.report_features["abnormalFindings"] == []
    assert res.pdr_method == "spectral_peak"
    assert all(abs(res.features.pdr[s] - 10.0) < 0.5 for s in ("left", "right"))
    assert structure_problems(res.report.text) == []
    assert res.verification.majority == [0, 0]
    json.dumps(res.summary())


def test_focal_recording_localised(focal_rec):
    res = analyze_recording(focal_rec, recording_id="f")
    assert res.findings.focal_slow and not res.findings.gbs
    assert set(res.findings.focal_electrodes) <= {"F7", "C3", "T3", "T5", "P3", "O1", "F3"}
    assert "T3" in res.findings.focal_electrodes
    assert res.report is None and res.verification is None


def test_short_recording_is_pipeline_error():
    rec = synthetic_recording("normal", duration_s=3.0, seed=0)
    with pytest.raises(PipelineError) as err:
        analyze_recording(rec)
    assert err.value.stage == "epoch"


def test_all_epochs_rejected_is_pipeline_error(normal_rec):
    loud = Recording(normal_rec.channels, normal_rec.fs, normal_rec.data * 100, normal_rec.annotations)
    with pytest.raises(PipelineError) as err:
        analyze_recording(loud)
    assert err.value.stage == "select"


# -------------------------------------------------------------------- CLI

def test_cli_mock_llm_is_reproducible(fixtures, tmp_path, no_network, monkeypatch, capsys):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    normal, _ = fixtures
    out = tmp_path / "o"
    outs = []
    for _ in range(2):
        # the second run rewrites into the same place; any differing byte would be refused
        assert main(["analyze", str(normal), "--mock-llm", "--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1]
    assert sorted(outs[0]) == ["normal.features.json", "normal.provenance.json",
                               "normal.report.txt", "normal.verify.json"]
    feats = json.loads(outs[0]["normal.features.json"])
    assert list(feats) == list(REPORT_KEYS)


def test_cli_no_llm_and_exports(fixtures, tmp_path, no_network):
    _, focal = fixtures
    out = tmp_path / "o"
    code = main(["analyze", str(focal), "--no-llm", "--out", str(out),
                 "--export-psd", str(tmp_path / "psd.csv"), "--export-mask", str(tmp_path / "mask.csv")])
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ["focal.features.json", "focal.provenance.json"]
    feats = json.loads((out / "focal.features.json").read_text())
    assert any("Focal" in f for f in feats["abnormalFindings"])
    assert (tmp_path / "psd.csv").read_text().startswith("channel,freq_hz,power")
    assert (tmp_path / "mask.csv").read_text().startswith("epoch_index,channel,flag")


def test_cli_results_are_append_only(fixtures, tmp_path, no_network, capsys):
    normal, _ = fixtures
    out = str(tmp_path / "o")
    assert main(["analyze", str(normal), "--no-llm", "--out", out]) == 0
    assert main(["analyze", str(normal), "--no-llm", "--out", out]) == 0
    # a different analysis under the same id must not silently replace the result
    assert main(["analyze", str(normal), "--no-llm", "--out", out, "--crop-seconds", "120"]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["stage"] == "output"
    assert main(["analyze", str(normal), "--no-llm", "--out", out, "--crop-seconds", "120",
                 "--force"]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.edf"), "--no-llm", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.edf"
    bad.write_bytes(b"0" * 100)
    assert main(["analyze", str(bad), "--no-llm", "--out", str(tmp_path)]) == 1
    short, _ = write_fixture(tmp_path, "short", synthetic_recording("normal", duration_s=3, seed=0))
    assert main(["analyze", str(short), "--no-llm", "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2 and err["stage"] == "epoch"


def test_cli_unconfigured_llm_is_input_error(fixtures, tmp_path, capsys):
    normal, _ = fixtures
    assert main(["analyze", str(normal), "--out", str(tmp_path)]) == 1
    assert "not configured" in capsys.readouterr().err


def test_cli_eval_table(capsys):
    assert main(["eval", "--table", "163,17,15,81"]) == 0
    out = capsys.readouterr().out
    for v in ("0.835", "0.827", "0.844", "0.884"):
        assert v in out
    assert main(["eval"]) == 1


def test_cli_eval_predictions(tmp_path, capsys):
    p = tmp_path / "p.csv"
    p.write_text("truth,pred,compare\n1,1,0\n1,1,0\n0,0,0\n0,1,1\n")
    assert main(["eval", "--predictions", str(p), "--json", str(tmp_path / "m.json")]) == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["mcnemar"]["b"] == 2 and doc["mcnemar"]["c"] == 0


def test_cli_report_and_verify_commands(tmp_path, no_network, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    feats = tmp_path / "x.features.json"
    feats.write_text(json.dumps({"EEG_quality": "Good", "bad_channels": [],
                                 "backgroundFrequency": "Right: 7.0 Hz, Left: 7.0 Hz",
                                 "bg_active": "Generalized background slowing",
                                 "bg_amp": "medium (10-50 uV)", "bg_amp_sym": "symmetric",
                                 "bg_freq": "symmetric",
                                 "abnormalFindings": ["Generalized background slowing detected"]}))
    rep = tmp_path / "x.report.txt"
    assert main(["report", str(feats), "--mock-llm", "-o", str(rep)]) == 0
    ver = tmp_path / "x.verify.json"
    assert main(["verify", str(rep), "--mock-llm", "-o", str(ver)]) == 0
    assert json.loads(ver.read_text())["majority"] == [1, 0]


def test_cli_train_pdr(tmp_path, capsys):
    manifest = tmp_path / "manifest.csv"
    write_manifest(manifest, make_synthetic_corpus(12, seed=0), tmp_path / "maps")
    runs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main(["train-pdr", "--manifest", str(manifest), "--out", str(out),
                     "--epochs", "1", "--batch-size", "8", "--seeds", "0", "1", "2"]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["ensemble.json", "metrics.json",
                                                         "pdr_seed0.pdrm", "pdr_seed1.pdrm",
                                                         "pdr_seed2.pdrm"]
        runs.append((out / "metrics.json").read_text())
    assert runs[0] == runs[1]
    ens = json.loads((tmp_path / "r1" / "ensemble.json").read_text())
    assert ens == {"combine": "mean", "models": ["pdr_seed0.pdrm", "pdr_seed1.pdrm", "pdr_seed2.pdrm"]}
    empty = tmp_path / "empty.csv"
    empty.write_text("file_id,side,label_hz,feature_path\n")
    assert main(["train-pdr", "--manifest", str(empty), "--out", str(tmp_path / "e")]) == 1


def test_cli_eval_pdr_baseline(tmp_path, capsys):
    manifest = tmp_path / "manifest.csv"
    write_manifest(manifest, make_synthetic_corpus(6, seed=1), tmp_path / "maps")
    assert main(["eval-pdr", "--manifest", str(manifest)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n"] == 12 and np.isfinite(doc["spectral_peak_baseline"]["MAE"])
