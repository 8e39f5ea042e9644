"""Independent brute-force oracles kept deliberately separate from the
implementations they check."""
from __future__ import annotations

import math

import numpy as np


def naive_metrics(truth: list[str], predicted: list[str], categories: list[str]) -> dict:
    """Plain-Python agreement metrics from first principles."""
    index = {c: k for k, c in enumerate(categories)}
    k = len(categories)
    cm = [[0] * k for _ in range(k)]
    for t, p in zip(truth, predicted):
        cm[index[t]][index[p]] += 1
    return naive_metrics_from_matrix(cm, categories)


def naive_metrics_from_matrix(cm: list[list[int]], categories: list[str]) -> dict:
    k = len(categories)
    total = sum(sum(row) for row in cm)
    diag = sum(cm[i][i] for i in range(k))
    row_sums = [sum(cm[i][j] for j in range(k)) for i in range(k)]
    col_sums = [sum(cm[i][j] for i in range(k)) for j in range(k)]

    p_o = diag / total
    p_e = sum(row_sums[i] * col_sums[i] for i in range(k)) / (total * total)
    kappa = 1.0 if p_e >= 1.0 else (p_o - p_e) / (1.0 - p_e)

    numer = diag * total - sum(col_sums[i] * row_sums[i] for i in range(k))
    den_a = total * total - sum(c * c for c in col_sums)
    den_b = total * total - sum(t * t for t in row_sums)
    mcc = 0.0 if den_a <= 0 or den_b <= 0 else numer / math.sqrt(den_a * den_b)

    per_class = {}
    f1_list = []
    for i, cat in enumerate(categories):
        precision = cm[i][i] / col_sums[i] if col_sums[i] else 0.0
        recall = cm[i][i] / row_sums[i] if row_sums[i] else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[cat] = f1
        f1_list.append(f1)

    return {
        "kappa": kappa,
        "mcc": mcc,
        "f1_micro": diag / total,
        "f1_macro": sum(f1_list) / k,
        "f1_weighted": sum(f1 * s for f1, s in zip(f1_list, row_sums)) / total,
        "per_class_f1": per_class,
    }


def naive_conflict_pairs(
    vectors: np.ndarray, codes: list[str], threshold: float
) -> list[tuple[int, int, float]]:
    """Literal double loop over all unordered pairs; similarity uses the same
    einsum accumulation primitive so exact equality is meaningful."""
    v = np.asarray(vectors, dtype=np.float64)
    v = v / np.linalg.norm(v, axis=1)[:, None]
    out = []
    n = v.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            dist = 1.0 - float(np.einsum("d,d->", v[i], v[j]))
            if dist <= threshold and codes[i] != codes[j]:
                out.append((i, j, dist))
    return out


def naive_near_pairs(vectors: np.ndarray, threshold: float) -> list[tuple[int, int, float]]:
    v = np.asarray(vectors, dtype=np.float64)
    v = v / np.linalg.norm(v, axis=1)[:, None]
    out = []
    n = v.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            dist = 1.0 - float(np.einsum("d,d->", v[i], v[j]))
            if dist <= threshold:
                out.append((i, j, dist))
    return out


def top2_reconstruction_error_eigh(X: np.ndarray) -> float:
    """PCA oracle via dense eigendecomposition of the covariance matrix."""
    Xc = X - X.mean(axis=0)
    cov = (Xc.T @ Xc) / Xc.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    comps = eigvecs[:, np.argsort(eigvals)[::-1][:2]]
    recon = (Xc @ comps) @ comps.T
    return float(np.sum((Xc - recon) ** 2))
