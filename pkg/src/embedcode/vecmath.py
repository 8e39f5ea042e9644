"""Core numeric kernels: cosine similarity, centroids, softmax, blocked pairwise sweeps.

All kernels accumulate in float64 regardless of input dtype, and every
function is pure. Pairwise products go through ``np.einsum``, whose per-element
accumulation is independent of block shape, so a blocked sweep reproduces a
naive per-pair loop bit for bit.
"""
from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from .errors import DegenerateVectorError, ShapeError, ValidationError


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise ShapeError(f"expected non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("vector contains non-finite entries")
    return arr


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between a and b, clamped to [-1, 1]."""
    av, bv = _as_vector(a), _as_vector(b)
    if av.shape != bv.shape:
        raise ShapeError(f"dim mismatch: {av.shape[0]} vs {bv.shape[0]}")
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine undefined for zero-norm vector")
    return float(np.clip(np.dot(av, bv) / (na * nb), -1.0, 1.0))


def cosine_distance(a, b) -> float:
    """1 - cosine_similarity; ranges over [0, 2]."""
    return 1.0 - cosine_similarity(a, b)


def l2_normalize(v) -> np.ndarray:
    """v / ||v||, computed in float64."""
    av = _as_vector(v)
    n = float(np.linalg.norm(av))
    if n == 0.0:
        raise DegenerateVectorError("cannot normalize zero-norm vector")
    return av / n


def centroid(vectors: Iterable) -> np.ndarray:
    """Component-wise mean of the vectors. Deliberately not renormalized:
    cosine classification downstream is invariant to the scale."""
    rows = [_as_vector(v) for v in vectors]
    if not rows:
        raise ValidationError("centroid of an empty set is undefined")
    dim = rows[0].shape[0]
    for r in rows[1:]:
        if r.shape[0] != dim:
            raise ShapeError(f"dim mismatch in centroid inputs: {dim} vs {r.shape[0]}")
    return np.mean(np.stack(rows), axis=0)


def softmax(scores, temperature: float = 1.0) -> np.ndarray:
    """Stable softmax of scores / temperature.

    Subtracts the max before exponentiation; preserves argmax for any
    temperature > 0.
    """
    if temperature <= 0.0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise ValidationError("softmax requires a non-empty 1-D score list")
    if not np.all(np.isfinite(s)):
        raise ValidationError("softmax scores must be finite")
    z = s / temperature
    e = np.exp(z - np.max(z))
    return e / np.sum(e)


def unit_rows(matrix) -> np.ndarray:
    """Row-normalize a matrix in float64; rejects zero rows."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected 2-D matrix, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        bad = int(np.nonzero(norms == 0.0)[0][0])
        raise DegenerateVectorError(f"zero-norm row at index {bad}")
    return m / norms[:, None]


def pair_similarity_block(a_rows: np.ndarray, b_rows: np.ndarray) -> np.ndarray:
    """Dot products between two blocks of unit rows via einsum.

    einsum's accumulation order per output element does not depend on the
    block shapes, which is what makes blocked sweeps exactly reproducible
    against a per-pair oracle.
    """
    return np.einsum("id,jd->ij", a_rows, b_rows)


def pair_similarity(a_row: np.ndarray, b_row: np.ndarray) -> float:
    """Single-pair dot product with the same accumulation as the blocked kernel."""
    return float(np.einsum("d,d->", a_row, b_row))


def near_pairs(
    vectors: np.ndarray,
    max_distance: float,
    block_size: int = 256,
) -> Iterator[tuple[int, int, float]]:
    """Yield (i, j, cosine_distance) for all unordered pairs i < j within
    max_distance, sweeping the O(N^2) upper triangle in blocks.

    Rows are normalized once up front; distances are 1 - dot. The boundary is
    inclusive (distance == max_distance is a hit).
    """
    if block_size < 1:
        raise ValidationError(f"block_size must be >= 1, got {block_size}")
    u = unit_rows(vectors)
    n = u.shape[0]
    for i0 in range(0, n, block_size):
        i1 = min(i0 + block_size, n)
        # only blocks at or right of the diagonal
        for j0 in range(i0, n, block_size):
            j1 = min(j0 + block_size, n)
            sims = pair_similarity_block(u[i0:i1], u[j0:j1])
            dists = 1.0 - sims
            hit_i, hit_j = np.nonzero(dists <= max_distance)
            for bi, bj in zip(hit_i.tolist(), hit_j.tolist()):
                i, j = i0 + bi, j0 + bj
                if i < j:
                    yield i, j, float(dists[bi, bj])
