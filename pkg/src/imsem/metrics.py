"""Similarity of IMSCs and agreement between clusterings (FMI, NVI)."""

from __future__ import annotations

import numpy as np

from .core import Clustering, ContractError, Imsc


class UndefinedSimilarityError(ContractError):
    pass


def _matrix(m) -> np.ndarray:
    return m.values if isinstance(m, Imsc) else np.asarray(m, dtype=np.float64)


def cosine_similarity(m, n) -> float:
    """Cosine of the angle between two IMSCs read as flat vectors."""
    a, b = _matrix(m), _matrix(n)
    if a.shape != b.shape:
        raise ContractError(f"dimension mismatch: {a.shape} vs {b.shape}")
    sa = np.abs(a).max(initial=0.0)
    sb = np.abs(b).max(initial=0.0)
    if sa == 0 or sb == 0:
        raise UndefinedSimilarityError("cosine similarity is undefined for an all-zero matrix")
    # scale first so that huge intensities cannot overflow the norms or the dot product
    a, b = a / sa, b / sb
    value = float(np.sum((a / np.linalg.norm(a)) * (b / np.linalg.norm(b))))
    return min(1.0, max(-1.0, value))


def _labels(x) -> np.ndarray:
    if isinstance(x, Clustering):
        return x.assignments
    return np.asarray(x)


def contingency_table(truth, predicted) -> np.ndarray:
    """Counts ``a[i, j]`` of points in true block ``i`` assigned to cluster ``j``."""
    p, c = _labels(truth), _labels(predicted)
    if p.shape != c.shape or p.ndim != 1:
        raise ContractError(f"partitions cover different point sets: {p.shape} vs {c.shape}")
    _, pi = np.unique(p, return_inverse=True)
    _, ci = np.unique(c, return_inverse=True)
    table = np.zeros((pi.max(initial=-1) + 1, ci.max(initial=-1) + 1), dtype=np.int64)
    np.add.at(table, (pi, ci), 1)
    return table


def _pairs(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    return k * (k - 1) // 2


def pair_counts(truth, predicted) -> tuple[int, int, int]:
    """(TP, FP, FN) over unordered pairs of points."""
    a = contingency_table(truth, predicted)
    tp = int(_pairs(a).sum())
    clustered = int(_pairs(a.sum(axis=0)).sum())
    connected = int(_pairs(a.sum(axis=1)).sum())
    return tp, clustered - tp, connected - tp


def fmi(truth, predicted) -> float:
    """Fowlkes-Mallows index; 0 when precision or recall is 0/0."""
    tp, fp, fn = pair_counts(truth, predicted)
    if tp == 0:
        return 0.0
    return float(np.sqrt(tp / (tp + fp) * tp / (tp + fn)))


def _entropy(counts: np.ndarray, n: int) -> float:
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def entropies(truth, predicted) -> dict[str, float]:
    """H(P), H(C), H(P|C), H(C|P) with natural logarithms."""
    a = contingency_table(truth, predicted).astype(np.float64)
    n = int(a.sum())
    rows = a.sum(axis=1)
    cols = a.sum(axis=0)
    nz = a > 0
    i, j = np.nonzero(nz)
    cell = a[i, j]
    h_p_given_c = float(-np.sum(cell / n * np.log(cell / cols[j])))
    h_c_given_p = float(-np.sum(cell / n * np.log(cell / rows[i])))
    return {
        "H(P)": _entropy(rows, n),
        "H(C)": _entropy(cols, n),
        "H(P|C)": h_p_given_c,
        "H(C|P)": h_c_given_p,
    }


def nvi(truth, predicted) -> float:
    """Normalized variation of information; 0 for a perfect clustering."""
    h = entropies(truth, predicted)
    if h["H(P)"] != 0:
        return (h["H(P|C)"] + h["H(C|P)"]) / h["H(P)"]
    return h["H(C)"]
