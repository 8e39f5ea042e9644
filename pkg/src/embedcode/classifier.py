"""Category centroids from exemplars and nearest-centroid assignment.

Selective mode keeps every category as a candidate; exhaustive mode removes
the residual is_other category from the candidate set (the scenario where
every response must receive a primary code). Ties break by codebook order so
runs are auditable and bit-reproducible.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import metrics as metrics_mod
from . import vecmath
from .corpus import Codebook, Project
from .embedder import EmbeddedSet
from .errors import ComparabilityError, ConfigurationError, ShapeError, ValidationError


@dataclass(frozen=True)
class CategoryCentroids:
    model_id: str
    categories: list[str]  # codebook order; tie-break order
    other_id: str | None
    centroids: dict[str, np.ndarray]  # category id -> float64 vector (not renormalized)
    exemplar_manifest: dict[str, list[tuple[str, str]]]  # category -> [(response id, hash)]

    @property
    def dim(self) -> int:
        first = next(iter(self.centroids.values()))
        return int(first.shape[0])

    def candidate_ids(self, mode: str) -> list[str]:
        if mode == "exhaustive" and self.other_id is not None:
            return [c for c in self.categories if c != self.other_id]
        return list(self.categories)


@dataclass(frozen=True)
class Assignment:
    response_id: str
    category_id: str
    similarity_by_category: dict[str, float]
    confidence_by_category: dict[str, float]

    def to_json(self) -> dict:
        return {
            "response_id": self.response_id,
            "category_id": self.category_id,
            "similarity": dict(self.similarity_by_category),
            "confidence": dict(self.confidence_by_category),
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Assignment":
        return cls(
            response_id=doc["response_id"],
            category_id=doc["category_id"],
            similarity_by_category=dict(doc.get("similarity", {})),
            confidence_by_category=dict(doc.get("confidence", {})),
        )


def _check_mode(mode: str) -> None:
    if mode not in ("selective", "exhaustive"):
        raise ValidationError(f"unknown mode {mode!r} (expected selective or exhaustive)")


def build_centroids(
    codebook: Codebook,
    embeddings: Mapping[str, np.ndarray],
    model_id: str,
    hashes: Mapping[str, str] | None = None,
) -> CategoryCentroids:
    """Average each category's exemplar vectors into its centroid.

    The exemplar manifest records which responses (and which cached content
    hashes, when known) produced each centroid, for reproducibility.
    """
    if codebook.model_binding and codebook.model_binding != model_id:
        raise ComparabilityError(
            f"codebook is bound to model {codebook.model_binding!r}, got {model_id!r}"
        )
    centroids: dict[str, np.ndarray] = {}
    manifest: dict[str, list[tuple[str, str]]] = {}
    for cat in codebook.categories:
        if not cat.exemplar_ids:
            raise ConfigurationError(f"category {cat.id!r} has no exemplars")
        missing = [rid for rid in cat.exemplar_ids if rid not in embeddings]
        if missing:
            raise ConfigurationError(
                f"category {cat.id!r} exemplars lack embeddings: {missing}"
            )
        rows = [np.asarray(embeddings[rid], dtype=np.float64) for rid in cat.exemplar_ids]
        centroids[cat.id] = vecmath.centroid(rows)
        manifest[cat.id] = [
            (rid, hashes.get(rid, "") if hashes else "") for rid in cat.exemplar_ids
        ]
    return CategoryCentroids(
        model_id=model_id,
        categories=codebook.category_ids,
        other_id=codebook.other_id,
        centroids=centroids,
        exemplar_manifest=manifest,
    )


def _candidate_matrix(centroids: CategoryCentroids, mode: str) -> tuple[list[str], np.ndarray]:
    cand = centroids.candidate_ids(mode)
    if not cand:
        raise ConfigurationError("no candidate categories to classify into")
    matrix = np.stack([centroids.centroids[c] for c in cand])
    return cand, vecmath.unit_rows(matrix)


def classify(
    centroids: CategoryCentroids,
    response_vec: np.ndarray,
    mode: str = "selective",
    temperature: float = 1.0,
    response_id: str = "",
) -> Assignment:
    """Assign the category whose centroid is most cosine-similar to the
    response vector; confidences are a softmax over candidate similarities."""
    _check_mode(mode)
    cand, cmat = _candidate_matrix(centroids, mode)
    vec = np.asarray(response_vec, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != cmat.shape[1]:
        raise ShapeError(
            f"response vector has shape {vec.shape}, centroids have dim {cmat.shape[1]}"
        )
    unit = vecmath.l2_normalize(vec)
    sims = np.clip(vecmath.pair_similarity_block(unit[None, :], cmat)[0], -1.0, 1.0)
    winner = cand[int(np.argmax(sims))]  # argmax returns the first max: codebook order
    conf = vecmath.softmax(sims, temperature)
    return Assignment(
        response_id=response_id,
        category_id=winner,
        similarity_by_category={c: float(s) for c, s in zip(cand, sims)},
        confidence_by_category={c: float(p) for c, p in zip(cand, conf)},
    )


def classify_all(
    centroids: CategoryCentroids,
    project: Project,
    embedded: EmbeddedSet,
    mode: str = "selective",
    temperature: float = 1.0,
) -> list[Assignment]:
    """One assignment per project response, in project order."""
    _check_mode(mode)
    embedded.require_same_model(centroids.model_id)
    vector_of = embedded.as_mapping()
    missing = [r.id for r in project.responses if r.id not in vector_of]
    if missing:
        raise ValidationError(f"responses without embeddings: {missing[:20]}")
    if not project.responses:
        return []

    cand, cmat = _candidate_matrix(centroids, mode)
    rows = vecmath.unit_rows(
        np.stack([vector_of[r.id] for r in project.responses]).astype(np.float64)
    )
    if rows.shape[1] != cmat.shape[1]:
        raise ShapeError(f"vector dim {rows.shape[1]} != centroid dim {cmat.shape[1]}")
    sims = np.clip(vecmath.pair_similarity_block(rows, cmat), -1.0, 1.0)

    assignments: list[Assignment] = []
    for i, resp in enumerate(project.responses):
        conf = vecmath.softmax(sims[i], temperature)
        winner = cand[int(np.argmax(sims[i]))]
        assignments.append(
            Assignment(
                response_id=resp.id,
                category_id=winner,
                similarity_by_category={c: float(s) for c, s in zip(cand, sims[i])},
                confidence_by_category={c: float(p) for c, p in zip(cand, conf)},
            )
        )
    return assignments


def evaluate_assignments(
    project: Project,
    drop_categories: set[str] | None = None,
    resampling: Mapping | None = None,
) -> metrics_mod.MetricsReport:
    """Score stored assignments against human codes.

    Responses without a human code are not scorable and are skipped; coded
    responses missing an assignment are an inconsistent state and raise.
    """
    codebook = project.require_codebook()
    drop = set(drop_categories or ())
    unknown = drop - set(codebook.category_ids)
    if unknown:
        raise ValidationError(f"unknown category ids in drop set: {sorted(unknown)}")
    categories = [c for c in codebook.category_ids if c not in drop]

    truth: list[str] = []
    predicted: list[str] = []
    missing: list[str] = []
    for r in project.responses:
        if r.human_code is None or r.human_code in drop:
            continue
        a = project.assignments.get(r.id)
        if a is None:
            missing.append(r.id)
            continue
        truth.append(r.human_code)
        predicted.append(a.category_id)
    if missing:
        raise ValidationError(f"coded responses without assignments: {missing[:20]}")
    if not truth:
        raise ValidationError("no scorable responses (human codes plus assignments required)")
    return metrics_mod.score(truth, predicted, categories, resampling=resampling)


@dataclass(frozen=True)
class ResamplingEvaluation:
    runs: list[metrics_mod.MetricsReport]
    mean: dict[str, float]
    std: dict[str, float]
    k_per_category: dict[str, int]
    n_runs: int
    seed: int
    mode: str

    def to_json(self) -> dict:
        return {
            "n_runs": self.n_runs,
            "seed": self.seed,
            "mode": self.mode,
            "k_per_category": dict(self.k_per_category),
            "mean": dict(self.mean),
            "std": dict(self.std),
            "runs": [r.to_json() for r in self.runs],
        }


_RESAMPLED_METRICS = ("f1_micro", "f1_macro", "f1_weighted", "kappa", "mcc")


def resample_evaluate(
    project: Project,
    embedded: EmbeddedSet,
    k_per_category: Mapping[str, int],
    n_runs: int,
    seed: int = 0,
    mode: str = "selective",
    temperature: float = 1.0,
) -> ResamplingEvaluation:
    """Repeatedly rebuild centroids from k sampled exemplars per category and
    score the rest of the coded corpus; reports per-metric mean and std.

    The exemplars sampled for a run are excluded from that run's scored set.
    In exhaustive mode, responses human-coded into the is_other category are
    excluded from scoring (they have no candidate to match).
    """
    _check_mode(mode)
    codebook = project.require_codebook()
    if n_runs < 1:
        raise ValidationError(f"n_runs must be >= 1, got {n_runs}")
    pools: dict[str, list[str]] = {}
    for cat in codebook.categories:
        k = k_per_category.get(cat.id)
        if k is None:
            raise ValidationError(f"k_per_category missing category {cat.id!r}")
        if k < 1 or k > len(cat.exemplar_ids):
            raise ValidationError(
                f"k={k} out of range for category {cat.id!r} "
                f"(pool size {len(cat.exemplar_ids)})"
            )
        pools[cat.id] = list(cat.exemplar_ids)

    vector_of = embedded.as_mapping()
    candidate_ids = [
        c.id for c in codebook.categories if not (mode == "exhaustive" and c.is_other)
    ]
    rng = np.random.default_rng(seed)
    runs: list[metrics_mod.MetricsReport] = []
    for _ in range(n_runs):
        sampled: dict[str, list[str]] = {}
        for cat in codebook.categories:
            pool = pools[cat.id]
            picks = sorted(rng.choice(len(pool), size=k_per_category[cat.id], replace=False))
            sampled[cat.id] = [pool[i] for i in picks]  # pool order: order-canonical centroid

        run_codebook = Codebook(
            categories=[
                type(cat)(
                    id=cat.id,
                    name=cat.name,
                    definition=cat.definition,
                    exemplar_ids=sampled[cat.id],
                    is_other=cat.is_other,
                )
                for cat in codebook.categories
            ],
            model_binding=codebook.model_binding,
        )
        centroids = build_centroids(run_codebook, vector_of, embedded.model_id)
        used = {rid for ids in sampled.values() for rid in ids}

        truth: list[str] = []
        predicted: list[str] = []
        for r in project.responses:
            if r.human_code is None or r.id in used:
                continue
            if r.human_code not in candidate_ids:
                if mode == "exhaustive" and r.human_code == codebook.other_id:
                    continue
                raise ValidationError(
                    f"response {r.id!r} carries unknown human code {r.human_code!r}"
                )
            a = classify(centroids, vector_of[r.id], mode, temperature, response_id=r.id)
            truth.append(r.human_code)
            predicted.append(a.category_id)
        if not truth:
            raise ValidationError("resampling run has no scorable responses")
        runs.append(metrics_mod.score(truth, predicted, candidate_ids))

    mean = {
        name: float(np.mean([getattr(r, name) for r in runs])) for name in _RESAMPLED_METRICS
    }
    std = {
        name: float(np.std([getattr(r, name) for r in runs])) for name in _RESAMPLED_METRICS
    }
    return ResamplingEvaluation(
        runs=runs,
        mean=mean,
        std=std,
        k_per_category={c: int(k_per_category[c]) for c in codebook.category_ids},
        n_runs=n_runs,
        seed=seed,
        mode=mode,
    )


def assignments_csv(project: Project) -> str:
    """Assignments as CSV: response id, category, one confidence column per
    codebook category."""
    codebook = project.require_codebook()
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["response_id", "category"] + [f"conf_{c}" for c in codebook.category_ids])
    for r in project.responses:
        a = project.assignments.get(r.id)
        if a is None:
            continue
        cells = []
        for c in codebook.category_ids:
            conf = a.confidence_by_category.get(c)
            cells.append(f"{conf:.10g}" if conf is not None else "")
        writer.writerow([r.id, a.category_id] + cells)
    return buf.getvalue()


def assignments_jsonl(project: Project) -> str:
    lines = [
        json.dumps(project.assignments[r.id].to_json(), sort_keys=True)
        for r in project.responses
        if r.id in project.assignments
    ]
    return "\n".join(lines) + ("\n" if lines else "")
