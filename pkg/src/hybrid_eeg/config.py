"""Pipeline configuration: a YAML document layered over built-in defaults.

String values may reference environment variables as ``${NAME}`` or
``${NAME:-fallback}``. Credentials are never stored in the file itself;
provider entries name the variable that holds the key.
"""
from __future__ import annotations

import copy
import os
import re
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .abnormality import Thresholds
from .artifact import ArtifactConfig
from .preprocess import DEFAULT_EYE_PATTERNS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProviderConfig:
    name: str
    base_url: str
    model: str
    api_key_env: str
    timeout_s: float = 60.0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class LlmConfig:
    generator: ProviderConfig | None = None
    verifiers: tuple[ProviderConfig, ...] = ()
    temperature: float = 0.0
    max_tokens: int = 2048
    max_in_flight: int = 4


@dataclass(frozen=True)
class PipelineConfig:
    rereference: str = "average"
    transfer_matrix: str | None = None
    epoch_len_s: float = 4.0
    max_abs_uv: float = 150.0
    sd_factor: float = 2.2
    eye_patterns: tuple[str, ...] = DEFAULT_EYE_PATTERNS
    min_epochs: int = 10
    artifact: ArtifactConfig = ArtifactConfig()
    repair: bool = True
    thresholds: Thresholds = Thresholds()
    pdr_models: tuple[str, ...] = ()
    llm: LlmConfig = LlmConfig()
    output_dir: str = "results"
    crop_seconds: float | None = None
    workers: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def validate(self) -> "PipelineConfig":
        if self.rereference not in ("average", "rest", "none"):
            raise ConfigError(f"rereference must be average, rest or none, got {self.rereference!r}")
        if self.rereference == "rest" and not self.transfer_matrix:
            raise ConfigError("rereference 'rest' needs transfer_matrix")
        positive = {"epoch_len_s": self.epoch_len_s, "max_abs_uv": self.max_abs_uv,
                    "sd_factor": self.sd_factor, "workers": self.workers}
        positive.update({f"thresholds.{k}": v for k, v in self.thresholds.as_dict().items()})
        a = self.artifact
        positive.update({"artifact.candidate_percentile": a.candidate_percentile,
                         "artifact.neighbor_percentile": a.neighbor_percentile,
                         "artifact.bad_channel_fraction": a.bad_channel_fraction})
        for name, v in positive.items():
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if not 0 < a.candidate_percentile <= 100 or not 0 < a.neighbor_percentile <= 100:
            raise ConfigError("artifact percentiles must lie in (0, 100]")
        if self.crop_seconds is not None and self.crop_seconds <= 0:
            raise ConfigError("crop_seconds must be positive")
        return self

    def as_dict(self) -> dict:
        """Plain-data echo written next to every result."""
        llm = self.llm
        return {
            "rereference": self.rereference,
            "transfer_matrix": self.transfer_matrix,
            "epoch_len_s": self.epoch_len_s,
            "selection": {"max_abs_uv": self.max_abs_uv, "sd_factor": self.sd_factor,
                          "eye_patterns": list(self.eye_patterns), "min_epochs": self.min_epochs},
            "artifact": {f.name: getattr(self.artifact, f.name) for f in fields(self.artifact)},
            "repair": self.repair,
            "thresholds": self.thresholds.as_dict(),
            "pdr_models": list(self.pdr_models),
            "llm": {
                "generator": llm.generator.as_dict() if llm.generator else None,
                "verifiers": [v.as_dict() for v in llm.verifiers],
                "temperature": llm.temperature, "max_tokens": llm.max_tokens,
                "max_in_flight": llm.max_in_flight,
            },
            "output_dir": self.output_dir,
            "crop_seconds": self.crop_seconds,
            "workers": self.workers,
        }


_ENV = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def interpolate(value, environ=None):
    """Expand ``${VAR}`` references in every string of a nested structure."""
    env = os.environ if environ is None else environ
    if isinstance(value, str):
        def sub(m):
            name, default = m.group(1), m.group(2)
            if name in env:
                return env[name]
            if default is not None:
                return default
            raise ConfigError(f"environment variable {name} is not set")
        return _ENV.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate(v, env) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate(v, env) for v in value]
    return value


def _take(d: dict, cls, section: str):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section}: {', '.join(sorted(unknown))}")
    return cls(**d)


def _provider(d: dict, section: str) -> ProviderConfig:
    missing = {"name", "base_url", "model", "api_key_env"} - set(d)
    if missing:
        raise ConfigError(f"{section} is missing {', '.join(sorted(missing))}")
    return _take(d, ProviderConfig, section)


def from_mapping(doc: dict | None, environ=None) -> PipelineConfig:
    doc = interpolate(copy.deepcopy(doc or {}), environ)
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a mapping")
    kw: dict = {}
    sel = doc.pop("selection", {}) or {}
    for key in ("max_abs_uv", "sd_factor", "min_epochs"):
        if key in sel:
            kw[key] = sel.pop(key)
    if "eye_patterns" in sel:
        kw["eye_patterns"] = tuple(sel.pop("eye_patterns"))
    if sel:
        raise ConfigError(f"unknown keys in selection: {', '.join(sorted(sel))}")
    if "artifact" in doc:
        kw["artifact"] = _take(doc.pop("artifact") or {}, ArtifactConfig, "artifact")
    if "thresholds" in doc:
        kw["thresholds"] = _take(doc.pop("thresholds") or {}, Thresholds, "thresholds")
    if "llm" in doc:
        llm = dict(doc.pop("llm") or {})
        gen = llm.pop("generator", None)
        ver = llm.pop("verifiers", []) or []
        kw["llm"] = LlmConfig(
            generator=_provider(gen, "llm.generator") if gen else None,
            verifiers=tuple(_provider(v, f"llm.verifiers[{i}]") for i, v in enumerate(ver)),
            **llm,
        )
    if "pdr_models" in doc:
        kw["pdr_models"] = tuple(doc.pop("pdr_models") or ())
    simple = {"rereference", "transfer_matrix", "epoch_len_s", "repair", "output_dir",
              "crop_seconds", "workers"}
    for key in list(doc):
        if key in simple:
            kw[key] = doc.pop(key)
    if doc:
        raise ConfigError(f"unknown configuration keys: {', '.join(sorted(doc))}")
    try:
        return PipelineConfig(**kw).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None = None, environ=None) -> PipelineConfig:
    """Read a YAML configuration; ``None`` gives the defaults."""
    if path is None:
        return PipelineConfig().validate()
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return from_mapping(doc, environ)
