"""Evaluation statistics: classification metrics, McNemar, two-proportion z-test, Gwet's AC1."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as sps


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion matrix counts must be non-negative")

    @classmethod
    def from_table(cls, table) -> "ConfusionMatrix":
        """Build from ``[[TN, FP], [FN, TP]]``: rows are truth (negative, positive),
        columns are predictions (negative, positive).
        """
        (tn, fp), (fn, tp) = np.asarray(table, dtype=int).tolist()
        return cls(tp=tp, fp=fp, fn=fn, tn=tn)

    @classmethod
    def from_labels(cls, y_true, y_pred) -> "ConfusionMatrix":
        t = np.asarray(y_true).astype(bool)
        p = np.asarray(y_pred).astype(bool)
        if t.shape != p.shape:
            raise ValueError(f"length mismatch: {t.size} labels vs {p.size} predictions")
        if t.size == 0:
            raise ValueError("no labels")
        return cls(tp=int((t & p).sum()), fp=int((~t & p).sum()),
                   fn=int((t & ~p).sum()), tn=int((~t & ~p).sum()))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def as_table(self) -> list[list[int]]:
        return [[self.tn, self.fp], [self.fn, self.tp]]


@dataclass(frozen=True)
class ClassificationMetrics:
    f1: float
    precision: float
    recall: float
    accuracy: float
    degenerate: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        d = asdict(self)
        d["degenerate"] = list(self.degenerate)
        return d


def _ratio(num: float, den: float, name: str, flags: list) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def classification_metrics(cm: ConfusionMatrix) -> ClassificationMetrics:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    flags: list[str] = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", flags)
    f1 = _ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn, "f1", flags)
    accuracy = (cm.tp + cm.tn) / cm.total
    return ClassificationMetrics(f1, precision, recall, accuracy, tuple(flags))


def mcnemar(b: int, c: int, exact_below: int = 25) -> float:
    """Two-sided McNemar p-value from the discordant counts ``b`` and ``c``.

    Exact binomial test when ``b + c < exact_below``, otherwise chi-square
    with continuity correction.
    """
    if b < 0 or c < 0:
        raise ValueError("discordant counts must be non-negative")
    n = b + c
    if n == 0:
        return 1.0
    if n < exact_below:
        return float(min(1.0, 2.0 * sps.binom.cdf(min(b, c), n, 0.5)))
    stat = (abs(b - c) - 1) ** 2 / n
    return float(sps.chi2.sf(stat, 1))


def mcnemar_from_predictions(y_true, pred_a, pred_b) -> tuple[int, int, float]:
    """Discordant counts (a right & b wrong, a wrong & b right) and the p-value."""
    t = np.asarray(y_true).astype(bool)
    a = np.asarray(pred_a).astype(bool) == t
    bb = np.asarray(pred_b).astype(bool) == t
    b_count = int((a & ~bb).sum())
    c_count = int((~a & bb).sum())
    return b_count, c_count, mcnemar(b_count, c_count)


def two_proportion_ztest(k1: int, n1: int, k2: int, n2: int) -> float:
    """Pooled two-sided z-test for equal proportions ``k1/n1`` and ``k2/n2``."""
    if n1 <= 0 or n2 <= 0:
        raise ValueError("sample sizes must be positive")
    p1, p2 = k1 / n1, k2 / n2
    pooled = (k1 + k2) / (n1 + n2)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n2))
    if se == 0:
        return 1.0
    z = (p1 - p2) / se
    return float(2 * sps.norm.sf(abs(z)))


@dataclass(frozen=True)
class AC1Result:
    ac1: float
    ci95: tuple[float, float]
    pa: float
    pe: float
    n_items: int


def gwet_ac1(ratings) -> AC1Result:
    """Gwet's AC1 for binary ratings shaped ``(items, raters)``.

    Missing ratings may be given as NaN; each item needs at least two. The
    95 % interval uses Gwet's item-level linearised variance with a normal
    approximation, clipped to [-1, 1].
    """
    r = np.asarray(ratings, dtype=np.float64)
    if r.ndim != 2 or r.shape[0] == 0:
        raise ValueError("ratings must be a non-empty (items x raters) matrix")
    valid = ~np.isnan(r)
    if np.any(r[valid] != np.round(r[valid])) or not np.isin(r[valid], (0, 1)).all():
        raise ValueError("ratings must be 0/1 (or NaN for missing)")
    n_rated = valid.sum(axis=1)
    if np.any(n_rated < 2):
        raise ValueError(f"item {int(np.argmax(n_rated < 2))} has fewer than two ratings")
    ones = np.where(valid, r, 0).sum(axis=1)
    zeros = n_rated - ones
    pa_i = (ones * (ones - 1) + zeros * (zeros - 1)) / (n_rated * (n_rated - 1))
    pa = pa_i.mean()
    pi1 = (ones / n_rated).mean()
    pi = np.array([1 - pi1, pi1])
    pe = float((pi * (1 - pi)).sum())  # q - 1 = 1 for two categories
    n = r.shape[0]
    if pe >= 1.0:
        return AC1Result(1.0, (1.0, 1.0), float(pa), pe, n)
    ac1 = (pa - pe) / (1 - pe)
    share = np.stack([zeros / n_rated, ones / n_rated], axis=1)
    pe_i = (share * (1 - pi)).sum(axis=1)
    g_i = (pa_i - pe) / (1 - pe)
    g_star = g_i - 2 * (1 - ac1) * (pe_i - pe) / (1 - pe)
    var = ((g_star - ac1) ** 2).sum() / (n * (n - 1)) if n > 1 else 0.0
    half = 1.959963984540054 * math.sqrt(var)
    ci = (max(-1.0, ac1 - half), min(1.0, ac1 + half))
    return AC1Result(float(ac1), (float(ci[0]), float(ci[1])), float(pa), pe, n)


def metrics_table(rows: dict[str, ClassificationMetrics]) -> str:
    """Aligned plain-text table, one row per named metrics set."""
    head = f"{'':<16}{'F1':>8}{'Precision':>11}{'Recall':>9}{'Accuracy':>10}"
    lines = [head]
    for name, m in rows.items():
        lines.append(f"{name:<16}{m.f1:>8.3f}{m.precision:>11.3f}{m.recall:>9.3f}{m.accuracy:>10.3f}")
    return "\n".join(lines)


def metrics_json(rows: dict[str, ClassificationMetrics]) -> str:
    return json.dumps({k: v.as_dict() for k, v in rows.items()}, indent=2, sort_keys=True)
