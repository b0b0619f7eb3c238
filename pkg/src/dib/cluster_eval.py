"""Label fusion and clustering metrics (ACC, NMI, purity)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InvalidInputError


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    acc: float | None = None
    nmi: float | None = None
    pur: float | None = None

    def metrics(self) -> dict:
        return {"acc": self.acc, "nmi": self.nmi, "pur": self.pur}


def fuse_labels(S) -> np.ndarray:
    """Argmax of the view-averaged soft labels; ``np.argmax`` breaks ties to the lowest index."""
    S = [np.asarray(s, dtype=float) for s in S]
    if not S:
        raise InvalidInputError("no label matrices to fuse")
    if len({s.shape for s in S}) != 1:
        raise InvalidInputError(f"label matrices disagree in shape: {[s.shape for s in S]}")
    mean = sum(S) / len(S)
    return np.argmax(mean, axis=1)


def hungarian(cost) -> np.ndarray:
    """Permutation ``perm`` minimizing ``sum(cost[i, perm[i]])``."""
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise InvalidInputError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InvalidInputError("cost matrix has non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def _check_pair(truth, pred):
    truth, pred = np.asarray(truth).ravel(), np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise InvalidInputError(f"label vectors differ in length: {truth.size} vs {pred.size}")
    if truth.size == 0:
        raise InvalidInputError("empty label vectors")
    return truth, pred


def contingency(truth, pred) -> np.ndarray:
    """Counts with predicted clusters as rows and true classes as columns."""
    truth, pred = _check_pair(truth, pred)
    _, t = np.unique(truth, return_inverse=True)
    _, p = np.unique(pred, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy(truth, pred) -> float:
    table = contingency(truth, pred)
    k = max(table.shape)
    padded = np.zeros((k, k), dtype=np.int64)
    padded[:table.shape[0], :table.shape[1]] = table
    perm = hungarian(-padded)
    return float(padded[np.arange(k), perm].sum() / table.sum())


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(truth, pred, average: str = "geometric") -> float:
    """Normalized mutual information; ``average`` is "geometric" or "arithmetic"."""
    table = contingency(truth, pred).astype(float)
    n = table.sum()
    pij = table / n
    pi, pj = pij.sum(axis=1), pij.sum(axis=0)
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / np.outer(pi, pj)[nz])))
    h_pred, h_true = _entropy(table.sum(axis=1)), _entropy(table.sum(axis=0))
    if average == "geometric":
        denom = np.sqrt(h_pred * h_true)
    elif average == "arithmetic":
        denom = 0.5 * (h_pred + h_true)
    else:
        raise InvalidInputError(f"unknown NMI normalization {average!r}")
    if denom == 0:
        return 0.0
    return float(min(max(mi / denom, 0.0), 1.0))


def purity(truth, pred) -> float:
    table = contingency(truth, pred)
    return float(table.max(axis=1).sum() / table.sum())


def evaluate(truth, pred) -> ClusteringResult:
    return ClusteringResult(np.asarray(pred), accuracy(truth, pred), nmi(truth, pred),
                            purity(truth, pred))
