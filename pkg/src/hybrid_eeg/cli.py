"""Command-line entry point.

Exit codes: 0 success, 1 input or configuration error, 2 pipeline failure.
Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, PipelineConfig, load_config
from .edf import EdfCalibrationError, EdfParseError, EdfTruncatedError, MontageError, load_annotations, load_recording
from .pdr import (PdrModel, TrainConfig, cross_validate, ensemble_predict_many, pdr_metrics,
                  predict_many, read_manifest, spectral_peak_baseline, split_grouped, train)
from .pipeline import AnalysisResult, PipelineError, analyze_recording, load_models
from .reportgen import (ConfigurationError, ReportFeatures, ResultExistsError, atomic_write,
                        batch_agreement, generate_report, mock_clients, result_paths, verify_report)
from .reportgen.llm import client_from_config
from .reportgen.store import dump_json
from .stats import (ConfusionMatrix, classification_metrics, mcnemar_from_predictions,
                    metrics_json, metrics_table)

logger = logging.getLogger("hybrid_eeg")

INPUT_ERRORS = (FileNotFoundError, IsADirectoryError, EdfParseError, EdfCalibrationError,
                EdfTruncatedError, MontageError, ConfigError, ConfigurationError, ResultExistsError)


class InputError(Exception):
    pass


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fail(exc: BaseException, code: int, stage: str | None = None) -> int:
    err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if stage:
        err["stage"] = stage
    print(json.dumps(err), file=sys.stderr)
    return code


def _config(args) -> PipelineConfig:
    cfg = load_config(getattr(args, "config", None))
    changes = {}
    if getattr(args, "no_repair", False):
        changes["repair"] = False
    if getattr(args, "crop_seconds", None) is not None:
        changes["crop_seconds"] = args.crop_seconds
    if getattr(args, "out", None):
        changes["output_dir"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    return replace(cfg, **changes).validate() if changes else cfg


def _clients(args, cfg: PipelineConfig):
    if getattr(args, "no_llm", False):
        return None, None
    if args.mock_llm:
        return mock_clients()
    if cfg.llm.generator is None or len(cfg.llm.verifiers) != 3:
        raise ConfigurationError("LLM providers are not configured (need llm.generator and three "
                                 "llm.verifiers); use --no-llm or --mock-llm")
    gen = client_from_config(cfg.llm.generator)
    return gen, [client_from_config(v) for v in cfg.llm.verifiers]


# ------------------------------------------------------------------ analyze

def _annotation_path(edf: Path, explicit: str | None) -> Path | None:
    if explicit:
        return Path(explicit)
    side = edf.with_suffix(".txt")
    return side if side.exists() else None


def run_one(edf_path: str | Path, cfg: PipelineConfig, args, annotations_path: str | None = None) -> int:
    edf = Path(edf_path)
    rec_id = getattr(args, "id", None) or edf.stem
    try:
        rec = load_recording(edf)
        ann_path = _annotation_path(edf, annotations_path)
        annotations = load_annotations(ann_path) if ann_path else []
        models = load_models(cfg.pdr_models)
        gen, vers = _clients(args, cfg)
    except INPUT_ERRORS as exc:
        return _fail(exc, 1, "input")
    except ValueError as exc:
        return _fail(exc, 1, "input")
    try:
        res = analyze_recording(rec, annotations, cfg, recording_id=rec_id, models=models,
                                generator=gen, verifiers=vers)
    except PipelineError as exc:
        code = 1 if isinstance(exc.__cause__, MontageError) else 2
        return _fail(exc, code, exc.stage)
    inputs = {edf.name: _sha256(edf)}
    if ann_path:
        inputs[ann_path.name] = _sha256(ann_path)
    for p in cfg.pdr_models:
        inputs[Path(p).name] = _sha256(p)
    try:
        write_outputs(res, cfg, inputs, force=getattr(args, "force", False))
        if getattr(args, "export_psd", None):
            res.psd.to_csv(args.export_psd)
        if getattr(args, "export_mask", None):
            res.artifacts.to_csv(args.export_mask)
    except (ResultExistsError, OSError) as exc:
        return _fail(exc, 1, "output")
    logger.info("%s: findings %s", rec_id, res.report_features["abnormalFindings"])
    return 0


def write_outputs(res: AnalysisResult, cfg: PipelineConfig, inputs: dict, force: bool = False) -> dict:
    paths = result_paths(cfg.output_dir, res.recording_id)
    atomic_write(paths["features"], res.report_features.to_json() + "\n", force=force)
    prov = {"package_version": __version__, "recording_id": res.recording_id,
            "inputs_sha256": inputs, "config": cfg.as_dict(), "analysis": res.summary()}
    if res.report is not None:
        atomic_write(paths["report"], res.report.text, force=force)
        prov["report"] = res.report.provenance()
    if res.verification is not None:
        verify = res.verification.as_dict()
        verify["report_sha256"] = hashlib.sha256(res.report.text.encode("utf-8")).hexdigest()
        atomic_write(paths["verify"], dump_json(verify), force=force)
    atomic_write(paths["provenance"], dump_json(prov), force=force)
    return paths


def cmd_analyze(args) -> int:
    try:
        cfg = _config(args)
    except (ConfigError, OSError) as exc:
        return _fail(exc, 1, "config")
    return run_one(args.edf, cfg, args, args.annotations)


def cmd_batch(args) -> int:
    try:
        cfg = _config(args)
    except (ConfigError, OSError) as exc:
        return _fail(exc, 1, "config")
    files: list[Path] = []
    for item in args.inputs:
        p = Path(item)
        files.extend(sorted(p.glob("*.edf")) if p.is_dir() else [p])
    if not files:
        return _fail(FileNotFoundError("no EDF files found"), 1, "input")
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        codes = list(pool.map(lambda f: run_one(f, cfg, args), files))
    summary = {"n": len(files), "ok": codes.count(0), "failed": [str(f) for f, c in zip(files, codes) if c]}
    print(json.dumps(summary))
    return max(codes)


# ------------------------------------------------------------------ PDR

def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=seed)


def cmd_train_pdr(args) -> int:
    try:
        data = read_manifest(args.manifest)
    except (OSError, ValueError) as exc:
        return _fail(exc, 1, "input")
    if not data:
        return _fail(ValueError(f"{args.manifest}: manifest is empty"), 1, "input")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_set, val_set = split_grouped(data, 1.0 - args.val_frac, seed=args.split_seed)
    per_seed, model_files, models = [], [], []
    for seed in args.seeds:
        res = train(train_set, _train_config(args, seed), validation=val_set)
        path = out / f"pdr_seed{seed}.pdrm"
        res.model.save(path)
        m = pdr_metrics(predict_many(res.model, val_set), [e.label_hz for e in val_set])
        per_seed.append({"seed": seed, "model": path.name, "best_epoch": res.best_epoch,
                         "final_train_mse": res.history[-1], "validation": m})
        model_files.append(path.name)
        models.append(res.model)
    ens = pdr_metrics(ensemble_predict_many(models, val_set), [e.label_hz for e in val_set])
    metrics = {"n_train": len(train_set), "n_validation": len(val_set), "per_seed": per_seed,
               "ensemble_validation": ens}
    (out / "metrics.json").write_text(dump_json(metrics), encoding="utf-8")
    (out / "ensemble.json").write_text(dump_json({"combine": "mean", "models": model_files}),
                                       encoding="utf-8")
    print(json.dumps({"ensemble_validation": ens}))
    return 0


def cmd_eval_pdr(args) -> int:
    try:
        data = read_manifest(args.manifest)
        if not data:
            raise ValueError(f"{args.manifest}: manifest is empty")
        labels = [e.label_hz for e in data]
        result = {"n": len(data),
                  "spectral_peak_baseline": pdr_metrics([spectral_peak_baseline(e.features) for e in data],
                                                        labels)}
        if args.models:
            models = [PdrModel.load(p) for p in args.models]
            result["ensemble"] = pdr_metrics(ensemble_predict_many(models, data), labels)
        if args.kfold:
            folds = cross_validate(data, args.kfold, _train_config(args, args.seeds[0]))
            result["kfold"] = folds
            result["kfold_mean"] = {k: float(np.mean([f[k] for f in folds]))
                                    for k in ("MAE", "RMSE", "R2", "ACC06", "ACC12")}
    except (OSError, ValueError) as exc:
        return _fail(exc, 1, "input")
    text = dump_json(result)
    if args.json:
        Path(args.json).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


# ------------------------------------------------------------------ eval

def _read_predictions(path: str):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "truth" not in rows[0] or "pred" not in rows[0]:
        raise ValueError(f"{path}: need columns truth,pred (optional: compare)")
    col = lambda k: [int(r[k]) for r in rows]
    return col("truth"), col("pred"), (col("compare") if "compare" in rows[0] else None)


def cmd_eval(args) -> int:
    try:
        rows, extra = {}, {}
        if args.table:
            vals = [int(v) for v in args.table.split(",")]
            if len(vals) != 4:
                raise ValueError("--table takes TN,FP,FN,TP")
            rows["table"] = classification_metrics(ConfusionMatrix.from_table([vals[:2], vals[2:]]))
        if args.predictions:
            truth, pred, compare = _read_predictions(args.predictions)
            rows["pred"] = classification_metrics(ConfusionMatrix.from_labels(truth, pred))
            if compare is not None:
                rows["compare"] = classification_metrics(ConfusionMatrix.from_labels(truth, compare))
                b, c, p = mcnemar_from_predictions(truth, pred, compare)
                extra["mcnemar"] = {"b": b, "c": c, "p_value": p}
        if args.verify_files:
            from .reportgen.verify import VerificationResult
            results = []
            for f in args.verify_files:
                d = json.loads(Path(f).read_text(encoding="utf-8"))
                votes = [tuple(v) if v is not None else None for v in d["votes"]]
                results.append(VerificationResult(votes, d["majority"], d["unresolved"], [], []))
            extra["ac1"] = {k: {"ac1": r.ac1, "ci95": list(r.ci95)}
                            for k, r in batch_agreement(results).items()}
        if not rows and not extra:
            raise ValueError("nothing to evaluate: give --table, --predictions or --verify-files")
    except (OSError, ValueError, KeyError) as exc:
        return _fail(exc, 1, "input")
    if rows:
        print(metrics_table(rows))
    if extra:
        print(json.dumps(extra, indent=2))
    if args.json:
        doc = json.loads(metrics_json(rows)) if rows else {}
        doc.update(extra)
        Path(args.json).write_text(dump_json(doc), encoding="utf-8")
    return 0


# ------------------------------------------------------------------ report / verify

def cmd_report(args) -> int:
    try:
        cfg = _config(args)
        rf = ReportFeatures.from_json(Path(args.features).read_text(encoding="utf-8"))
        gen, _ = _clients(args, cfg)
    except (*INPUT_ERRORS, ValueError) as exc:
        return _fail(exc, 1, "input")
    try:
        rep = generate_report(gen, rf, temperature=cfg.llm.temperature, max_tokens=cfg.llm.max_tokens)
    except Exception as exc:  # transport or structure failure
        return _fail(exc, 2, "report")
    if args.output:
        atomic_write(args.output, rep.text, force=args.force)
    else:
        sys.stdout.write(rep.text)
    return 0


def cmd_verify(args) -> int:
    try:
        cfg = _config(args)
        text = Path(args.report).read_text(encoding="utf-8")
        _, vers = _clients(args, cfg)
    except (*INPUT_ERRORS, ValueError) as exc:
        return _fail(exc, 1, "input")
    try:
        res = verify_report(text, vers, temperature=cfg.llm.temperature, max_in_flight=cfg.llm.max_in_flight)
    except Exception as exc:
        return _fail(exc, 2, "verify")
    out = dump_json(res.as_dict())
    if args.output:
        atomic_write(args.output, out, force=args.force)
    else:
        sys.stdout.write(out)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hybrid-eeg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def pipeline_flags(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--no-llm", action="store_true", help="stop after features.json")
        p.add_argument("--mock-llm", action="store_true", help="offline template writer and keyword verifiers")
        p.add_argument("--no-repair", action="store_true", help="detect artifacts but do not repair them")
        p.add_argument("--crop-seconds", type=float, help="analyse only the first N seconds")
        p.add_argument("--force", action="store_true", help="overwrite differing existing results")

    p = sub.add_parser("analyze", help="analyse one EDF recording")
    p.add_argument("edf")
    p.add_argument("--annotations", help="annotation sidecar (default: <edf stem>.txt if present)")
    p.add_argument("--id", help="recording id used for output names (default: EDF stem)")
    p.add_argument("--export-psd", help="write the recording PSD as CSV")
    p.add_argument("--export-mask", help="write the artifact mask as CSV")
    pipeline_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("batch", help="analyse many recordings")
    p.add_argument("inputs", nargs="+", help="EDF files or directories")
    p.add_argument("--workers", type=int, help="parallel recordings")
    pipeline_flags(p)
    p.set_defaults(func=cmd_batch)

    def train_flags(p):
        p.add_argument("--manifest", required=True, help="CSV file_id,side,label_hz,feature_path")
        p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
        p.add_argument("--epochs", type=int, default=200)
        p.add_argument("--batch-size", type=int, default=16)
        p.add_argument("--lr", type=float, default=1e-3)

    p = sub.add_parser("train-pdr", help="train the PDR ensemble")
    train_flags(p)
    p.add_argument("--out", required=True, help="directory for model files and metrics")
    p.add_argument("--val-frac", type=float, default=0.2, help="grouped validation share")
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_train_pdr)

    p = sub.add_parser("eval-pdr", help="score PDR models or run grouped k-fold")
    train_flags(p)
    p.add_argument("--models", nargs="*", default=[])
    p.add_argument("--kfold", type=int, help="grouped k-fold cross-validation")
    p.add_argument("--json", help="also write metrics JSON here")
    p.set_defaults(func=cmd_eval_pdr)

    p = sub.add_parser("eval", help="classification metrics, McNemar and AC1")
    p.add_argument("--table", help="confusion matrix as TN,FP,FN,TP")
    p.add_argument("--predictions", help="CSV with truth,pred[,compare] columns of 0/1")
    p.add_argument("--verify-files", nargs="*", help="verify.json files for AC1")
    p.add_argument("--json", help="also write metrics JSON here")
    p.set_defaults(func=cmd_eval)

    for name, func, src in (("report", cmd_report, "features"), ("verify", cmd_verify, "report")):
        p = sub.add_parser(name, help=f"{name} from an existing {src} file")
        p.add_argument(src)
        p.add_argument("--config")
        p.add_argument("--mock-llm", action="store_true")
        p.add_argument("-o", "--output")
        p.add_argument("--force", action="store_true")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
