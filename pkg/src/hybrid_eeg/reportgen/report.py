"""Prompt construction and narrative report generation."""
from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Callable

from .features import FOCAL_HEADLINE, GBS_HEADLINE, ReportFeatures
from .llm import LlmClient

SECTIONS = ("=== EEG Findings ===", "=== Conclusion ===", "=== Clinical Correlation ===",
            "=== Advanced Strategies ===")
PROMPT_VERSION = "v1"
REPAIR_INSTRUCTION = (
    "\n\nYour previous answer did not follow the required structure. Rewrite the full report "
    "using exactly these four headers, once each and in this order:\n" + "\n".join(SECTIONS) + "\n"
)


class ReportStructureError(ValueError):
    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


def load_resource(name: str) -> str:
    return resources.files(__package__).joinpath("resources", name).read_text(encoding="utf-8")


def build_prompt(rf: ReportFeatures, version: str = PROMPT_VERSION) -> str:
    template = Template(load_resource(f"generation_prompt_{version}.txt"))
    return template.substitute(features_json=ReportFeatures(rf).to_json())


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def utc_timestamp() -> str:
    """Current UTC time, or ``SOURCE_DATE_EPOCH`` when set (reproducible runs)."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = (_dt.datetime.fromtimestamp(int(epoch), _dt.timezone.utc) if epoch
            else _dt.datetime.now(_dt.timezone.utc))
    return when.replace(microsecond=0).isoformat().replace("+00:00", "Z")


def structure_problems(text: str) -> list[str]:
    """Empty when each header appears exactly once and in order."""
    problems = []
    positions = []
    for header in SECTIONS:
        count = len(re.findall(rf"^\s*{re.escape(header)}\s*$", text, flags=re.M))
        if count != 1:
            problems.append(f"{header!r} appears {count} times")
        else:
            positions.append(text.index(header))
    if not problems and positions != sorted(positions):
        problems.append("sections are out of order")
    return problems


def split_sections(text: str) -> dict[str, str]:
    """Section header -> body text (stripped)."""
    out = {}
    bounds = [(text.index(h), h) for h in SECTIONS if h in text]
    bounds.sort()
    for i, (pos, header) in enumerate(bounds):
        end = bounds[i + 1][0] if i + 1 < len(bounds) else len(text)
        out[header] = text[pos + len(header):end].strip()
    return out


@dataclass(frozen=True)
class GeneratedReport:
    text: str
    model_id: str
    prompt_sha256: str
    timestamp: str
    attempts: int = 1
    sections: dict = field(default_factory=dict, compare=False)

    def provenance(self) -> dict:
        return {"model": self.model_id, "prompt_sha256": self.prompt_sha256,
                "timestamp": self.timestamp, "attempts": self.attempts,
                "prompt_version": PROMPT_VERSION}


def generate_report(client: LlmClient, rf: ReportFeatures, *, temperature: float = 0.0,
                    max_tokens: int = 2048, clock: Callable[[], str] = utc_timestamp
                    ) -> GeneratedReport:
    """Ask the model for a report; one repair round if the structure is off."""
    prompt = build_prompt(rf)
    text = client.send(prompt, temperature=temperature, max_tokens=max_tokens)
    attempts = 1
    problems = structure_problems(text)
    if problems:
        text = client.send(prompt + REPAIR_INSTRUCTION, temperature=temperature, max_tokens=max_tokens)
        attempts = 2
        problems = structure_problems(text)
        if problems:
            raise ReportStructureError("report structure invalid after repair: " + "; ".join(problems), text)
    return GeneratedReport(text, client.model_id, prompt_hash(prompt), clock(), attempts,
                           split_sections(text))


# ---------------------------------------------------------- offline writer

_JSON_BLOCK = re.compile(r"EEG features \(JSON\):\n(\{.*?\n\})", re.S)


def features_from_prompt(prompt: str) -> ReportFeatures:
    m = _JSON_BLOCK.search(prompt)
    if not m:
        raise ValueError("no feature JSON found in prompt")
    return ReportFeatures(json.loads(m.group(1)))


def template_report(rf: ReportFeatures) -> str:
    """Deterministic report text in the required four-section layout."""
    right, left = re.findall(r"([\d.]+) Hz", rf["backgroundFrequency"])
    activity = "Normal frequency" if rf["bg_active"].startswith("Normal") else "Generalized background slowing"
    findings = [
        f"- Recording quality: {rf['EEG_quality'].lower()}.",
        f"- Background activity: {activity} and {rf['bg_amp']} amplitude.",
        f"- Background frequency: {right} Hz (right), {left} Hz (left), {rf['bg_freq']}.",
        "- Background amplitude: " + ("Symmetric." if rf["bg_amp_sym"] == "symmetric"
                                      else f"Lower in the {rf['bg_amp_sym'].split()[-1]} hemisphere."),
    ]
    if rf["bad_channels"]:
        findings.append(f"- Channels with persistent artifact: {', '.join(rf['bad_channels'])}.")
    focal = [f for f in rf["abnormalFindings"] if f.startswith(FOCAL_HEADLINE)]
    gbs = any(f.startswith(GBS_HEADLINE) for f in rf["abnormalFindings"])
    for f in focal:
        details = f.split(";")[1:]
        findings.append("- Focal slowing and/or asymmetric abnormality: " + "; ".join(details) + ".")
    if gbs and focal:
        conclusion = ("Abnormal EEG: generalized background slowing together with a focal slow "
                      "wave or asymmetric abnormality.")
    elif gbs:
        conclusion = "Abnormal EEG: generalized background slowing."
    elif focal:
        conclusion = "Abnormal EEG: focal slow wave or asymmetric abnormality."
    else:
        conclusion = "This is a normal awake EEG."
    correlation = []
    if gbs:
        correlation.append("Generalized slowing can reflect diffuse cerebral dysfunction such as an encephalopathy.")
    if focal:
        correlation.append("Focal slowing points to a possible structural lesion in the region named above.")
    if not correlation:
        correlation.append("There is no electrographic evidence of cerebral dysfunction.")
    strategies = ["- Interpret alongside the history and the neurological examination."]
    if focal:
        strategies.append("- Brain imaging (MRI, or CT if MRI is unavailable) to look for a structural cause.")
    if gbs:
        strategies.append("- Consider metabolic and toxic causes; a follow-up EEG may help track the course.")
    return "\n".join([SECTIONS[0], *findings, SECTIONS[1], conclusion, SECTIONS[2], *correlation,
                      SECTIONS[3], *strategies]) + "\n"


def template_report_responder(prompt: str) -> str:
    """Mock responder: writes the template report for the features in the prompt."""
    return template_report(features_from_prompt(prompt))
