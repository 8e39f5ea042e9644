"""Contrastive adaptation of the embedding space via a trained linear map.

Training data is every ordered pair of labeled texts (self-pairs included, so
n texts yield n^2 pairs), labeled 1 when both share a category and 0
otherwise. The map W starts at the identity and descends a cosine-contrastive
objective on the renormalized adapted vectors:

    label 1 -> (1 - cos)^2        label 0 -> max(0, cos - margin)^2

plus an l2 penalty anchoring W to the identity. Everything runs in float64
and is bit-reproducible from the seed.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, IntegrityError, ShapeError, ValidationError

_MATRIX_MAGIC = b"EMBM"
_MATRIX_VERSION = 1


@dataclass(frozen=True)
class TrainingPair:
    i: int
    j: int
    label: int  # 1 same category, 0 different


@dataclass(frozen=True)
class AdapterHyperparams:
    learning_rate: float = 1e-2
    epochs: int = 50
    batch_size: int = 256
    margin: float = 0.2
    seed: int = 42
    l2_anchor: float = 1e-3

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ConfigurationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (-1.0 <= self.margin < 1.0):
            raise ConfigurationError(f"margin must lie in [-1, 1), got {self.margin}")
        if self.l2_anchor < 0:
            raise ConfigurationError(f"l2_anchor must be >= 0, got {self.l2_anchor}")

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "margin": self.margin,
            "seed": self.seed,
            "l2_anchor": self.l2_anchor,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "AdapterHyperparams":
        return cls(**{k: doc[k] for k in cls().to_json() if k in doc})


@dataclass
class LinearAdapter:
    W: np.ndarray  # dim x dim float64
    model_id: str
    training_manifest: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(self.W.shape[0])


def generate_pairs(labeled: Sequence[tuple[int, str]]) -> list[TrainingPair]:
    """All ordered pairs (row-major, self-pairs included) over the labeled
    texts; n inputs give exactly n^2 pairs."""
    if not labeled:
        raise ValidationError("cannot generate pairs from an empty labeled list")
    pairs: list[TrainingPair] = []
    for i, cat_i in labeled:
        for j, cat_j in labeled:
            pairs.append(TrainingPair(i=i, j=j, label=1 if cat_i == cat_j else 0))
    return pairs


def pair_loss(a: np.ndarray, b: np.ndarray, label: int, margin: float = 0.2) -> float:
    """Contrastive loss for one pair of unit vectors."""
    c = float(np.dot(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)))
    if label == 1:
        return (1.0 - c) ** 2
    return max(0.0, c - margin) ** 2


def _pair_arrays(pairs: Sequence[TrainingPair], n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    idx_i = np.fromiter((p.i for p in pairs), dtype=np.int64, count=len(pairs))
    idx_j = np.fromiter((p.j for p in pairs), dtype=np.int64, count=len(pairs))
    labels = np.fromiter((p.label for p in pairs), dtype=np.int64, count=len(pairs))
    if len(pairs) and (idx_i.min() < 0 or idx_i.max() >= n or idx_j.min() < 0 or idx_j.max() >= n):
        raise ValidationError(f"pair indices out of range for {n} vectors")
    return idx_i, idx_j, labels


def loss_and_grad(
    W: np.ndarray,
    X: np.ndarray,
    idx_i: np.ndarray,
    idx_j: np.ndarray,
    labels: np.ndarray,
    margin: float,
    l2_anchor: float,
) -> tuple[float, np.ndarray]:
    """Mean pair loss over adapted, renormalized vectors plus the identity
    anchor, with its analytic gradient in W."""
    Xi = X[idx_i]
    Xj = X[idx_j]
    U = Xi @ W.T
    V = Xj @ W.T
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    if np.any(nu == 0.0) or np.any(nv == 0.0):
        raise DivergenceError("adapter collapsed a vector to zero norm")
    A = U / nu[:, None]
    B = V / nv[:, None]
    c = np.sum(A * B, axis=1)

    pos = labels == 1
    losses = np.where(pos, (1.0 - c) ** 2, np.maximum(0.0, c - margin) ** 2)
    dldc = np.where(pos, -2.0 * (1.0 - c), 2.0 * np.maximum(0.0, c - margin))

    m = len(losses)
    g = dldc / m
    dU = (g[:, None] * (B - c[:, None] * A)) / nu[:, None]
    dV = (g[:, None] * (A - c[:, None] * B)) / nv[:, None]
    grad = dU.T @ Xi + dV.T @ Xj

    eye = np.eye(W.shape[0])
    loss = float(np.mean(losses)) + l2_anchor * float(np.sum((W - eye) ** 2))
    grad = grad + 2.0 * l2_anchor * (W - eye)
    return loss, grad


def train(
    vectors: np.ndarray,
    pairs: Sequence[TrainingPair],
    hyperparams: AdapterHyperparams | None = None,
    model_id: str = "",
) -> LinearAdapter:
    """Mini-batch gradient descent from W = identity; the manifest records the
    per-epoch loss curve and every hyperparameter for reproducibility."""
    hp = hyperparams or AdapterHyperparams()
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"expected 2-D vector matrix, got shape {X.shape}")
    n, dim = X.shape
    idx_i, idx_j, labels = _pair_arrays(pairs, n)

    W = np.eye(dim)
    rng = np.random.default_rng(hp.seed)
    loss_curve: list[float] = []
    for epoch in range(hp.epochs):
        order = rng.permutation(len(pairs))
        epoch_loss = 0.0
        for start in range(0, len(pairs), hp.batch_size):
            batch = order[start : start + hp.batch_size]
            loss, grad = loss_and_grad(
                W, X, idx_i[batch], idx_j[batch], labels[batch], hp.margin, hp.l2_anchor
            )
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise DivergenceError(
                    f"non-finite loss/gradient at epoch {epoch} "
                    f"(learning_rate {hp.learning_rate})"
                )
            W = W - hp.learning_rate * grad
            epoch_loss += loss * len(batch)
        loss_curve.append(epoch_loss / len(pairs))

    final_loss, _ = loss_and_grad(W, X, idx_i, idx_j, labels, hp.margin, hp.l2_anchor)
    positives = int(np.sum(labels == 1))
    return LinearAdapter(
        W=W,
        model_id=model_id,
        training_manifest={
            "pair_count": len(pairs),
            "positive_pairs": positives,
            "hyperparams": hp.to_json(),
            "loss_curve": loss_curve,
            "final_loss": final_loss,
        },
    )


def apply_adapter(adapter: LinearAdapter, vectors: np.ndarray) -> np.ndarray:
    """x -> normalize(Wx) for each row; output is unit-norm float32 in the
    same canonical form the embedder produces."""
    X = np.asarray(vectors, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != adapter.dim:
        raise ShapeError(f"vector dim {X.shape[1]} != adapter dim {adapter.dim}")
    Y = X @ adapter.W.T
    norms = np.linalg.norm(Y, axis=1)
    if np.any(norms == 0.0):
        raise DivergenceError("adapter maps a vector to zero norm")
    out = (Y / norms[:, None]).astype("<f4")
    return out[0] if single else out


def gradient_check(
    vectors: np.ndarray,
    pairs: Sequence[TrainingPair],
    hyperparams: AdapterHyperparams | None = None,
    probe_count: int = 50,
    W: np.ndarray | None = None,
    step: float = 1e-5,
    seed: int = 0,
) -> float:
    """Max relative error between the analytic gradient and central finite
    differences at probe_count random entries of W."""
    if probe_count < 1:
        raise ValidationError(f"probe_count must be >= 1, got {probe_count}")
    hp = hyperparams or AdapterHyperparams()
    X = np.asarray(vectors, dtype=np.float64)
    n, dim = X.shape
    idx_i, idx_j, labels = _pair_arrays(pairs, n)
    Wm = np.eye(dim) if W is None else np.asarray(W, dtype=np.float64).copy()

    _, grad = loss_and_grad(Wm, X, idx_i, idx_j, labels, hp.margin, hp.l2_anchor)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probe_count):
        p = int(rng.integers(dim))
        q = int(rng.integers(dim))
        Wp = Wm.copy()
        Wp[p, q] += step
        lp, _ = loss_and_grad(Wp, X, idx_i, idx_j, labels, hp.margin, hp.l2_anchor)
        Wn = Wm.copy()
        Wn[p, q] -= step
        ln, _ = loss_and_grad(Wn, X, idx_i, idx_j, labels, hp.margin, hp.l2_anchor)
        numeric = (lp - ln) / (2.0 * step)
        analytic = grad[p, q]
        denom = max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, abs(analytic - numeric) / denom)
    return worst


# ---------------------------------------------------------------------------
# Serialization: binary matrix + JSON manifest

_MATRIX_HEADER = "<4sHH"  # magic, version, model_id byte length
_MATRIX_SHAPE = "<II"


def save_adapter(adapter: LinearAdapter, path: str | Path) -> None:
    """Write <path>.bin (float64 matrix) and <path>.json (manifest)."""
    base = Path(path)
    mid = adapter.model_id.encode("utf-8")
    blob = struct.pack(_MATRIX_HEADER, _MATRIX_MAGIC, _MATRIX_VERSION, len(mid))
    blob += mid
    blob += struct.pack(_MATRIX_SHAPE, adapter.W.shape[0], adapter.W.shape[1])
    blob += np.asarray(adapter.W, dtype="<f8").tobytes()
    base.with_suffix(".bin").write_bytes(blob)
    base.with_suffix(".json").write_text(
        json.dumps(
            {"model_id": adapter.model_id, "training_manifest": adapter.training_manifest},
            sort_keys=True,
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )


def load_adapter(path: str | Path) -> LinearAdapter:
    base = Path(path)
    raw = base.with_suffix(".bin").read_bytes()
    head = struct.calcsize(_MATRIX_HEADER)
    magic, version, mid_len = struct.unpack_from(_MATRIX_HEADER, raw, 0)
    if magic != _MATRIX_MAGIC or version != _MATRIX_VERSION:
        raise IntegrityError(f"not a valid adapter matrix file: {base.with_suffix('.bin')}")
    offset = head
    model_id = raw[offset : offset + mid_len].decode("utf-8")
    offset += mid_len
    rows, cols = struct.unpack_from(_MATRIX_SHAPE, raw, offset)
    offset += struct.calcsize(_MATRIX_SHAPE)
    expected = rows * cols * 8
    if len(raw) - offset != expected:
        raise IntegrityError(
            f"adapter matrix payload is {len(raw) - offset} bytes, expected {expected}"
        )
    W = np.frombuffer(raw, dtype="<f8", count=rows * cols, offset=offset).reshape(rows, cols).copy()
    manifest: dict = {}
    manifest_path = base.with_suffix(".json")
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8")).get(
            "training_manifest", {}
        )
    return LinearAdapter(W=W, model_id=model_id, training_manifest=manifest)
