"""End-to-end analysis of one recording.

Stages run in a fixed order: montage, re-reference, epoching, epoch PSDs,
wake epoch selection, artifact detection and repair, background features,
PDR, abnormality rules, then (optionally) report generation and verification.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import artifact as art
from .abnormality import AbnormalityFindings, classify
from .config import PipelineConfig
from .edf import STANDARD_MONTAGE, MontageMap, Recording, apply_montage, crop
from .pdr import PdrModel, build_feature_map, ensemble_predict, spectral_peak_baseline
from .preprocess import EpochSet, SelectionReport, rereference, segment_epochs, select_wake_epochs
from .reportgen import (GeneratedReport, LlmClient, ReportFeatures, VerificationResult,
                        build_feature_json, eeg_quality, generate_report, verify_report)
from .spectral import (BackgroundFeatures, PsdTable, background_features, band_amplitude,
                       epoch_psds, mean_psd)

logger = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class AnalysisResult:
    recording_id: str
    epochs: EpochSet
    selection: SelectionReport
    artifacts: art.ArtifactMask
    unrepaired: np.ndarray
    psd: PsdTable
    features: BackgroundFeatures
    pdr_method: str
    findings: AbnormalityFindings
    report_features: ReportFeatures
    report: GeneratedReport | None = None
    verification: VerificationResult | None = None
    warnings: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        """Quantitative side-car for the features file."""
        return {
            "recording_id": self.recording_id,
            "n_epochs": self.epochs.n_epochs,
            "n_included": self.selection.n_included,
            "excluded": {"eye_event": int(self.selection.eye_event.sum()),
                         "high_amplitude": int(self.selection.high_amplitude.sum()),
                         "spectral_outlier": int(self.selection.spectral_outlier.sum())},
            "artifact_entries": int(self.artifacts.mask.sum()),
            "artifact_skipped": self.artifacts.skipped,
            "unrepaired_entries": int(self.unrepaired.sum()),
            "pdr_method": self.pdr_method,
            "background": _rounded(self.features.summary()),
            "findings": _rounded(self.findings.to_dict()),
            "warnings": self.warnings,
        }


def _rounded(obj, digits: int = 6):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v, digits) for v in obj]
    return obj


def estimate_pdr(psd: PsdTable, models: Sequence[PdrModel] = ()) -> tuple[dict[str, float], str]:
    """PDR per hemisphere from the CNN ensemble, else from spectral peaks.

    The fallback uses only the three rows of the side being estimated so the
    two hemispheres stay distinguishable.
    """
    pdr = {}
    for side in ("left", "right"):
        fmap = build_feature_map(psd, side)
        if models:
            pdr[side] = ensemble_predict(list(models), fmap)
        else:
            pdr[side] = spectral_peak_baseline(fmap.values[:3])
    return pdr, ("cnn_ensemble" if models else "spectral_peak")


def analyze_recording(rec: Recording, annotations=None, config: PipelineConfig = PipelineConfig(),
                      *, recording_id: str = "recording", models: Sequence[PdrModel] = (),
                      generator: LlmClient | None = None, verifiers: Sequence[LlmClient] | None = None,
                      montage: MontageMap = STANDARD_MONTAGE) -> AnalysisResult:
    """Run the pipeline on an in-memory recording.

    With no ``generator`` the run stops after the feature JSON; verification
    runs only when a report was produced and three verifiers are given.
    """
    warnings = list(rec.warnings)
    annotations = list(rec.annotations if annotations is None else annotations)
    stage = "montage"
    try:
        if config.crop_seconds:
            rec = crop(rec, config.crop_seconds)
        rec = apply_montage(rec, montage)
        stage = "rereference"
        rec = rereference(rec, config.rereference, config.transfer_matrix)
        stage = "epoch"
        es = segment_epochs(rec, config.epoch_len_s)
        if es.n_epochs == 0:
            raise PipelineError(stage, f"recording shorter than one {config.epoch_len_s:g} s epoch")
        stage = "psd"
        freqs, power = epoch_psds(es.epochs, es.fs, 1.5, 30.0)
        stage = "select"
        sel = select_wake_epochs(es, annotations, (freqs, power), eye_patterns=config.eye_patterns,
                                 max_abs_uv=config.max_abs_uv, sd_factor=config.sd_factor)
        es = es.with_mask(sel.include_mask)
        if sel.n_included == 0:
            raise PipelineError(stage, "no epochs survived wake epoch selection")
        if sel.n_included < config.min_epochs:
            warnings.append(f"only {sel.n_included} epochs survived selection")
        stage = "artifact"
        am = art.detect(es, montage, config.artifact)
        if am.skipped:
            warnings.append("artifact detection skipped: too few usable epochs")
        if config.repair:
            es_used, unrepaired = art.repair_epochs(es, am, montage)
            if am.mask.any():
                freqs, power = epoch_psds(es_used.epochs, es.fs, 1.5, 30.0)
        else:
            es_used, unrepaired = es, am.mask.copy()
        stage = "features"
        psd = mean_psd(freqs, power, es.channels, sel.include_mask, unrepaired)
        amps = {b: band_amplitude(es_used.epochs, es.fs, b, sel.include_mask, unrepaired)
                for b in ("alpha", "theta", "delta", "beta")}
        feats = background_features(psd, amps, montage)
        feats.bad_channels = am.bad_channels
        stage = "pdr"
        feats.pdr, pdr_method = estimate_pdr(psd, models)
        stage = "abnormality"
        findings = classify(feats.pdr["left"], feats.pdr["right"], feats.slow_ratio["total"],
                            feats.lr_ratio, feats.bad_channels, montage, config.thresholds)
        quality = eeg_quality(sel.n_included, es.n_epochs, config.min_epochs)
        rf = build_feature_json(findings, feats.pdr, amps["alpha"], feats.bad_channels, quality)
        result = AnalysisResult(recording_id, es, sel, am, unrepaired, psd, feats, pdr_method,
                                findings, rf, warnings=warnings)
        if generator is not None:
            stage = "report"
            llm = config.llm
            result.report = generate_report(generator, rf, temperature=llm.temperature,
                                            max_tokens=llm.max_tokens)
            if verifiers:
                stage = "verify"
                result.verification = verify_report(result.report.text, list(verifiers),
                                                    temperature=llm.temperature,
                                                    max_in_flight=llm.max_in_flight)
        return result
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(stage, str(exc)) from exc


def load_models(paths: Sequence[str | Path]) -> list[PdrModel]:
    return [PdrModel.load(p) for p in paths]
