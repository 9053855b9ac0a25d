"""Cross-checking generated reports with independent classifier models."""
from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from string import Template

import numpy as np

from ..stats import AC1Result, gwet_ac1
from .llm import LlmClient, TransportError
from .report import SECTIONS, load_resource, split_sections

INDICATORS = ("gbs", "focal")
REASK = "\n\nReply with the array only, for example [0, 1]."
_VOTE = re.compile(r"\[\s*([01])\s*,\s*([01])\s*\]")


def build_verification_prompt(report_text: str, version: str = "v1") -> str:
    return Template(load_resource(f"verification_prompt_{version}.txt")).substitute(report=report_text.strip())


def parse_vote(text: str) -> tuple[int, int] | None:
    """First ``[x, y]`` array of 0/1 values in a reply, else ``None``."""
    m = _VOTE.search(text or "")
    return (int(m.group(1)), int(m.group(2))) if m else None


def majority(votes) -> tuple[list[int | None], list[str]]:
    """Per-indicator value held by at least two voters; ``None`` marks unresolved.

    ``votes`` holds one ``(gbs, focal)`` pair per verifier, ``None`` for an
    abstention. Returns the majority and the names of unresolved indicators.
    """
    cast = [v for v in votes if v is not None]
    out: list[int | None] = []
    unresolved = []
    for i, name in enumerate(INDICATORS):
        ones = sum(v[i] for v in cast)
        zeros = len(cast) - ones
        if ones >= 2 and ones > zeros:
            out.append(1)
        elif zeros >= 2 and zeros > ones:
            out.append(0)
        else:
            out.append(None)
            unresolved.append(name)
    return out, unresolved


@dataclass
class VerificationResult:
    votes: list[tuple[int, int] | None]
    majority: list[int | None]
    unresolved: list[str]
    raw_responses: list[list[str]]
    verifier_models: list[str]
    errors: list[str | None] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "votes": [list(v) if v is not None else None for v in self.votes],
            "majority": self.majority,
            "unresolved": self.unresolved,
            "verifier_models": self.verifier_models,
            "raw_responses": self.raw_responses,
            "errors": self.errors,
        }


def _ask(client: LlmClient, prompt: str, temperature: float, max_tokens: int):
    raw = []
    try:
        for p in (prompt, prompt + REASK):
            text = client.send(p, temperature=temperature, max_tokens=max_tokens)
            raw.append(text)
            vote = parse_vote(text)
            if vote is not None:
                return vote, raw, None
    except TransportError as exc:
        return None, raw, str(exc)
    return None, raw, "unparseable reply after re-ask"


def verify_report(report_text: str, verifiers: list[LlmClient], *, temperature: float = 0.0,
                  max_tokens: int = 64, max_in_flight: int = 4) -> VerificationResult:
    """Classify a report with each verifier and take the 2-of-3 majority."""
    if len(verifiers) != 3:
        raise ValueError(f"exactly three verifiers are required, got {len(verifiers)}")
    if len({id(v) for v in verifiers}) != 3:
        raise ValueError("verifiers must be distinct clients")
    prompt = build_verification_prompt(report_text)
    with ThreadPoolExecutor(max_workers=max(1, min(max_in_flight, 3))) as pool:
        results = list(pool.map(lambda c: _ask(c, prompt, temperature, max_tokens), verifiers))
    votes = [r[0] for r in results]
    maj, unresolved = majority(votes)
    return VerificationResult(votes, maj, unresolved, [r[1] for r in results],
                              [v.model_id for v in verifiers], [r[2] for r in results])


def batch_agreement(results: list[VerificationResult]) -> dict[str, AC1Result]:
    """Gwet's AC1 per indicator across a batch; abstentions count as missing."""
    out = {}
    for i, name in enumerate(INDICATORS):
        ratings = np.array([[np.nan if v is None else v[i] for v in r.votes] for r in results],
                           dtype=np.float64)
        out[name] = gwet_ac1(ratings)
    return out


# ---------------------------------------------------------- offline voter

def keyword_verifier_responder(prompt: str) -> str:
    """Mock verifier reading the conclusion of the report being checked."""
    report = prompt.rsplit("Now classify this report.", 1)[-1]
    conclusion = split_sections(report).get(SECTIONS[1], report).lower()
    negated = re.search(r"\bno (focal|generalized)\b", conclusion) is not None
    gbs = int("generalized background slowing" in conclusion and not negated)
    focal = int(bool(re.search(r"focal slow|asymmetric", conclusion)) and not negated)
    return f"[{gbs}, {focal}]"
