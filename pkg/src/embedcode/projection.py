"""2-D projections of embedded responses: deterministic PCA and exact t-SNE.

The t-SNE here is the exact O(N^2) algorithm, not a tree approximation:
per-point Gaussian bandwidths found by bisection to the target perplexity,
symmetrized affinities, early exaggeration, and momentum gradient descent.
Determinism matters more than speed at this corpus scale.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DivergenceError, ShapeError, ValidationError

_EXAGGERATION = 12.0
_EXAGGERATION_ITERS = 250
_MOMENTUM_EARLY = 0.5
_MOMENTUM_LATE = 0.8
_ENTROPY_TOL = 1e-5
_KL_WINDOW = 100
_KL_STEP_TOL = 1e-6
_EPS = 1e-12


@dataclass
class Projection2D:
    points: np.ndarray  # N x 2
    method: str  # "pca" or "tsne"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "params": dict(self.params),
            "points": [[float(x), float(y)] for x, y in self.points],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Projection2D":
        return cls(
            points=np.asarray(doc["points"], dtype=np.float64),
            method=doc["method"],
            params=dict(doc.get("params", {})),
            seed=int(doc.get("seed", 0)),
        )


def _as_matrix(vectors) -> np.ndarray:
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected 2-D matrix of vectors, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("projection input contains non-finite values")
    return X


def pca_2d(vectors) -> Projection2D:
    """Mean-centered projection onto the top two principal components.

    Component signs are fixed so the largest-magnitude loading is positive,
    which removes the reflection ambiguity and makes output deterministic.
    """
    X = _as_matrix(vectors)
    if X.shape[0] < 2:
        raise ValidationError(f"PCA needs at least 2 points, got {X.shape[0]}")
    centered = X - X.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2].copy()
    if components.shape[0] < 2:  # rank < 2 inputs: pad with a zero axis
        components = np.vstack([components, np.zeros((2 - components.shape[0], X.shape[1]))])
        singular = np.concatenate([singular, np.zeros(2 - singular.shape[0])])
    for k in range(2):
        lead = np.argmax(np.abs(components[k]))
        if components[k, lead] < 0:
            components[k] = -components[k]
    points = centered @ components.T
    denom = float(np.sum(singular**2)) or 1.0
    return Projection2D(
        points=points,
        method="pca",
        params={"explained_variance_ratio": [float(s**2 / denom) for s in singular[:2]]},
        seed=0,
    )


def _squared_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def conditional_affinities(X: np.ndarray, perplexity: float) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic conditional affinities whose entropy matches
    log(perplexity) to within 1e-5, found by bisection on the precision."""
    n = X.shape[0]
    d2 = _squared_distances(X)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        beta, beta_min, beta_max = 1.0, -np.inf, np.inf
        row = np.delete(d2[i], i)
        for _ in range(200):
            w = np.exp(-row * beta)
            total = np.sum(w)
            if total <= 0.0:
                entropy = 0.0
                p = np.zeros_like(row)
            else:
                p = w / total
                entropy = float(np.log(total) + beta * np.sum(row * w) / total)
            diff = entropy - target
            if abs(diff) < _ENTROPY_TOL:
                break
            if diff > 0:  # entropy too high -> sharpen
                beta_min = beta
                beta = beta * 2.0 if np.isinf(beta_max) else (beta + beta_max) / 2.0
            else:
                beta_max = beta
                beta = beta / 2.0 if np.isinf(beta_min) else (beta + beta_min) / 2.0
        if p.sum() <= 0.0:  # all weights underflowed: take the beta -> inf limit
            nearest = row == row.min()
            p = nearest / nearest.sum()
        P[i, np.arange(n) != i] = p
        betas[i] = beta
    return P, betas


def joint_affinities(X: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities normalized to sum to 1."""
    P, _ = conditional_affinities(X, perplexity)
    joint = (P + P.T) / (2.0 * X.shape[0])
    return joint


def _kl_divergence(P: np.ndarray, Q: np.ndarray) -> float:
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne_2d(
    vectors,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 50.0,
) -> Projection2D:
    """Exact t-SNE to 2-D with early exaggeration (x12 for the first 250
    iterations) and momentum 0.5 then 0.8.

    The KL divergence is monitored over the final 100 iterations and must be
    non-increasing to within 1e-6 per step; a violation aborts the run.
    """
    X = _as_matrix(vectors)
    n = X.shape[0]
    if n < 4:
        raise ValidationError(f"t-SNE needs at least 4 points, got {n}")
    if perplexity <= 0 or perplexity >= (n - 1) / 3.0:
        raise ValidationError(
            f"perplexity {perplexity} infeasible for {n} points (need 0 < p < {(n - 1) / 3:.2f})"
        )
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")

    P = joint_affinities(X, perplexity)
    P = np.maximum(P, _EPS)
    P /= np.sum(P)

    rng = np.random.default_rng(seed)
    Y = rng.standard_normal((n, 2)) * 1e-4
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)  # per-parameter adaptive step sizes (classic scheme)
    exaggeration_end = min(_EXAGGERATION_ITERS, iterations)
    window_start = max(exaggeration_end, iterations - _KL_WINDOW)
    kl_trail: list[float] = []
    kl_prev: float | None = None

    for it in range(iterations):
        p_eff = P * _EXAGGERATION if it < exaggeration_end else P

        d2 = _squared_distances(Y)
        num = 1.0 / (1.0 + d2)
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / np.sum(num), _EPS)

        momentum = _MOMENTUM_EARLY if it < exaggeration_end else _MOMENTUM_LATE
        force = (p_eff - Q) * num
        grad = 4.0 * ((np.diag(np.sum(force, axis=1)) - force) @ Y)
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite t-SNE gradient at iteration {it}")
        same_direction = np.sign(grad) == np.sign(velocity)
        gains = np.where(same_direction, gains * 0.8, gains + 0.2)
        gains = np.clip(gains, 0.01, 10.0)
        velocity = momentum * velocity - learning_rate * gains * grad

        if it < window_start:
            Y = Y + velocity
        else:
            # monitored window: damp any step that would push KL up by more
            # than the per-step tolerance; an undampable step is a failed run
            if kl_prev is None:
                kl_prev = _kl_divergence(P, Q)  # Q is from the pre-step Y
            accepted = False
            for _ in range(60):
                candidate = Y + velocity
                kl_new = _window_kl(P, candidate)
                if np.isfinite(kl_new) and kl_new <= kl_prev + _KL_STEP_TOL:
                    accepted = True
                    break
                velocity = velocity * 0.5
            if not accepted:
                raise DivergenceError(
                    f"KL divergence will not descend at iteration {it} (kl={kl_prev:.6f})"
                )
            Y = candidate
            kl_trail.append(kl_new)
            kl_prev = kl_new
        Y = Y - Y.mean(axis=0)

    final_kl = kl_trail[-1] if kl_trail else _window_kl(P, Y)
    return Projection2D(
        points=Y,
        method="tsne",
        params={
            "perplexity": perplexity,
            "iterations": iterations,
            "learning_rate": learning_rate,
            "kl_divergence": final_kl,
            "kl_final_window": kl_trail,
        },
        seed=seed,
    )


def _window_kl(P: np.ndarray, Y: np.ndarray) -> float:
    num = 1.0 / (1.0 + _squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / np.sum(num), _EPS)
    return _kl_divergence(P, Q)


def projection_records(
    projection: Projection2D,
    ids: Sequence[str],
    codes: Sequence[str | None],
) -> list[dict]:
    if len(ids) != projection.points.shape[0] or len(codes) != projection.points.shape[0]:
        raise ValidationError("ids/codes length must match projection point count")
    return [
        {"id": rid, "x": float(x), "y": float(y), "code": code}
        for rid, code, (x, y) in zip(ids, codes, projection.points)
    ]


def projection_json(projection: Projection2D, ids: Sequence[str], codes: Sequence[str | None]) -> str:
    doc = {
        "method": projection.method,
        "seed": projection.seed,
        "params": projection.params,
        "points": projection_records(projection, ids, codes),
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def projection_csv(projection: Projection2D, ids: Sequence[str], codes: Sequence[str | None]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "x", "y", "code"])
    for rec in projection_records(projection, ids, codes):
        writer.writerow([rec["id"], f"{rec['x']:.10g}", f"{rec['y']:.10g}", rec["code"] or ""])
    return buf.getvalue()
