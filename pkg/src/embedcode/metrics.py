"""Agreement metrics between predicted and human codes.

Confusion matrices are laid out rows = human (truth), columns = predicted.
Degenerate denominators resolve to 0 by convention (per-class F1 and MCC),
matching the dominant ecosystem behaviour; Cohen's kappa returns 1.0 in the
all-mass-on-one-diagonal-cell case where expected agreement is also 1.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ConfusionMatrix:
    categories: list[str]
    counts: np.ndarray  # K x K non-negative ints, rows = truth

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_json(self) -> dict:
        return {
            "categories": list(self.categories),
            "counts": self.counts.tolist(),
        }


@dataclass(frozen=True)
class MetricsReport:
    f1_micro: float
    f1_macro: float
    f1_weighted: float
    kappa: float
    mcc: float
    per_class_f1: dict[str, float]
    n_scored: int
    confusion: ConfusionMatrix
    resampling: dict | None = None

    def to_json(self) -> dict:
        doc = {
            "n_scored": self.n_scored,
            "f1_micro": self.f1_micro,
            "f1_macro": self.f1_macro,
            "f1_weighted": self.f1_weighted,
            "kappa": self.kappa,
            "mcc": self.mcc,
            "per_class_f1": dict(self.per_class_f1),
            "confusion": self.confusion.to_json(),
        }
        if self.resampling is not None:
            doc["resampling"] = self.resampling
        return doc


def report_json(report: MetricsReport) -> str:
    """Canonical serialization shared by the CLI and the HTTP service so both
    produce byte-identical artifacts."""
    return json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"


def confusion(
    truth: Sequence[str],
    predicted: Sequence[str],
    categories: Sequence[str],
) -> ConfusionMatrix:
    """Count matrix over the given ordered categories."""
    if len(truth) != len(predicted):
        raise ValidationError(
            f"length mismatch: {len(truth)} truth labels vs {len(predicted)} predicted"
        )
    cats = list(categories)
    if len(set(cats)) != len(cats):
        raise ValidationError("categories must be unique")
    index = {c: i for i, c in enumerate(cats)}
    counts = np.zeros((len(cats), len(cats)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if t not in index:
            raise ValidationError(f"unknown truth label {t!r}")
        if p not in index:
            raise ValidationError(f"unknown predicted label {p!r}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(categories=cats, counts=counts)


def _require_nonempty(cm: ConfusionMatrix) -> np.ndarray:
    counts = np.asarray(cm.counts, dtype=np.float64)
    if counts.sum() <= 0:
        raise ValidationError("metrics undefined on an empty confusion matrix")
    return counts


def cohens_kappa(cm: ConfusionMatrix) -> float:
    """Chance-corrected agreement (p_o - p_e) / (1 - p_e)."""
    counts = _require_nonempty(cm)
    total = counts.sum()
    p_o = np.trace(counts) / total
    rows = counts.sum(axis=1) / total
    cols = counts.sum(axis=0) / total
    p_e = float(np.dot(rows, cols))
    if p_e >= 1.0:
        # both marginals concentrated on the same category, hence p_o == 1
        return 1.0
    return float((p_o - p_e) / (1.0 - p_e))


def multiclass_mcc(cm: ConfusionMatrix) -> float:
    """Multiclass Matthews correlation (the R_K statistic); 0 when the
    denominator vanishes (e.g. a constant predictor)."""
    counts = _require_nonempty(cm)
    s = counts.sum()
    c = np.trace(counts)
    t = counts.sum(axis=1)  # truth marginals
    p = counts.sum(axis=0)  # prediction marginals
    numer = c * s - float(np.dot(p, t))
    denom_sq = (s * s - float(np.dot(p, p))) * (s * s - float(np.dot(t, t)))
    if denom_sq <= 0.0:
        return 0.0
    return float(numer / np.sqrt(denom_sq))


def f1_scores(cm: ConfusionMatrix) -> tuple[dict[str, float], float, float, float]:
    """Per-class, micro, macro, and support-weighted F1.

    Per-class F1 is 0 when precision + recall is 0. Micro-F1 equals accuracy
    for single-label multiclass. Weighted F1 weights by truth support, so
    zero-support classes drop out.
    """
    counts = _require_nonempty(cm)
    total = counts.sum()
    diag = np.diag(counts)
    col_sums = counts.sum(axis=0)
    row_sums = counts.sum(axis=1)

    per_class: dict[str, float] = {}
    f1_vals = np.zeros(len(cm.categories))
    for k, cat in enumerate(cm.categories):
        precision = diag[k] / col_sums[k] if col_sums[k] > 0 else 0.0
        recall = diag[k] / row_sums[k] if row_sums[k] > 0 else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[cat] = float(f1)
        f1_vals[k] = f1

    micro = float(diag.sum() / total)
    macro = float(f1_vals.mean())
    weighted = float(np.dot(f1_vals, row_sums) / total)
    return per_class, micro, macro, weighted


def score(
    truth: Sequence[str],
    predicted: Sequence[str],
    categories: Sequence[str],
    resampling: Mapping | None = None,
) -> MetricsReport:
    """Full agreement report for one labeling pair."""
    cm = confusion(truth, predicted, categories)
    per_class, micro, macro, weighted = f1_scores(cm)
    return MetricsReport(
        f1_micro=micro,
        f1_macro=macro,
        f1_weighted=weighted,
        kappa=cohens_kappa(cm),
        mcc=multiclass_mcc(cm),
        per_class_f1=per_class,
        n_scored=cm.total,
        confusion=cm,
        resampling=dict(resampling) if resampling is not None else None,
    )
