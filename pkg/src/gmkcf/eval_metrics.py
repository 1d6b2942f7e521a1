"""External clustering metrics: accuracy under the best one-to-one label
mapping, normalized mutual information and purity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class MetricReport:
    acc: float
    nmi: float
    purity: float

    def as_dict(self):
        return {"acc": self.acc, "nmi": self.nmi, "purity": self.purity}


def _pair(truth, pred):
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise ValueError(f"label lengths differ: {truth.size} vs {pred.size}")
    if truth.size == 0:
        raise ValueError("empty labeling")
    return truth, pred


def contingency(truth, pred) -> np.ndarray:
    """Counts table; rows are true classes, columns predicted clusters."""
    truth, pred = _pair(truth, pred)
    _, t = np.unique(truth, return_inverse=True)
    _, p = np.unique(pred, return_inverse=True)
    table = np.zeros((t.max() + 1, p.max() + 1), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    return table


def hungarian(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment; rectangular input is zero-padded."""
    cost = np.asarray(cost, dtype=float)
    r, c = cost.shape
    size = max(r, c)
    padded = np.zeros((size, size))
    padded[:r, :c] = cost
    rows, cols = linear_sum_assignment(padded)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if i < r and j < c]


def accuracy(truth, pred) -> float:
    table = contingency(truth, pred)
    matched = sum(table[i, j] for i, j in hungarian(-table))
    return float(matched) / table.sum()


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(truth, pred) -> float:
    """Mutual information over the larger of the two partition entropies.

    When both partitions are trivial (zero entropy) the score is 1 if they
    coincide as set partitions and 0 otherwise.
    """
    table = contingency(truth, pred)
    n = table.sum()
    h_true = _entropy(table.sum(axis=1), n)
    h_pred = _entropy(table.sum(axis=0), n)
    denom = max(h_true, h_pred)
    if denom == 0:
        return 1.0 if table.shape == (1, 1) else 0.0
    pij = table / n
    outer = np.outer(table.sum(axis=1), table.sum(axis=0)) / n**2
    nz = pij > 0
    mi = float(np.sum(pij[nz] * np.log(pij[nz] / outer[nz])))
    return min(max(mi / denom, 0.0), 1.0)


def purity(truth, pred) -> float:
    table = contingency(truth, pred)
    return float(table.max(axis=0).sum()) / table.sum()


def evaluate(truth, pred) -> MetricReport:
    return MetricReport(accuracy(truth, pred), nmi(truth, pred), purity(truth, pred))
