"""Clustering agreement: adjusted Rand index and misclassification rate."""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (k_a, k_b)
    labels_a: np.ndarray
    labels_b: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def row_sums(self):
        return self.counts.sum(axis=1)

    @property
    def col_sums(self):
        return self.counts.sum(axis=0)


def contingency(labels_a, labels_b):
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"label vectors differ in length: {a.size} vs {b.size}")
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    counts = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(counts, (ia, ib), 1)
    return ContingencyTable(counts, ua, ub)


def _pairs(x):
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def adjusted_rand_index(labels_a, labels_b):
    """Adjusted Rand index, evaluated in exact rational arithmetic."""
    tab = contingency(labels_a, labels_b)
    if tab.n < 2:
        raise ValueError("ARI needs at least two observations")
    index = _pairs(tab.counts)
    sa, sb = _pairs(tab.row_sums), _pairs(tab.col_sums)
    expected = Fraction(sa * sb, tab.n * (tab.n - 1) // 2)
    max_index = Fraction(sa + sb, 2)
    if max_index == expected:
        # both partitions trivial (all singletons or one cluster each side)
        return 1.0
    return float((index - expected) / (max_index - expected))


def misclassification_rate(labels_true, labels_pred):
    """Share of points off the best one-to-one matching of predicted to true labels."""
    tab = contingency(labels_true, labels_pred)
    rows, cols = linear_sum_assignment(tab.counts, maximize=True)
    matched = int(tab.counts[rows, cols].sum())
    return float((tab.n - matched) / tab.n)
