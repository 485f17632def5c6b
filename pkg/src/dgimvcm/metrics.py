"""Clustering metrics: ACC (optimal matching), NMI (geometric mean), ARI."""
import numpy as np
from scipy.optimize import linear_sum_assignment


def contingency(pred, truth):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise ValueError(f"label vectors must be 1-d and equal length, got {pred.shape} and {truth.shape}")
    if pred.size == 0:
        raise ValueError("label vectors are empty")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy(pred, truth):
    table = contingency(pred, truth)
    size = max(table.shape)
    padded = np.zeros((size, size), dtype=np.int64)
    padded[: table.shape[0], : table.shape[1]] = table
    rows, cols = linear_sum_assignment(-padded)
    return float(padded[rows, cols].sum() / table.sum())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def nmi(pred, truth):
    table = contingency(pred, truth)
    n = table.sum()
    h_pred = _entropy(table.sum(axis=1), n)
    h_truth = _entropy(table.sum(axis=0), n)
    if h_pred == 0.0 and h_truth == 0.0:
        return 1.0
    if h_pred == 0.0 or h_truth == 0.0:
        return 0.0
    nz = table > 0
    outer = np.outer(table.sum(axis=1), table.sum(axis=0))
    mi = float(np.sum(table[nz] / n * np.log(table[nz] * n / outer[nz])))
    return max(0.0, min(1.0, mi / np.sqrt(h_pred * h_truth)))


def _pairs(counts):
    return sum(int(c) * (int(c) - 1) // 2 for c in np.ravel(counts))


def ari(pred, truth):
    """Closed-form ARI, evaluated in exact integer arithmetic until the final division."""
    table = contingency(pred, truth)
    total = _pairs([table.sum()])
    cells = _pairs(table)
    a = _pairs(table.sum(axis=1))
    b = _pairs(table.sum(axis=0))
    # multiply through by 2 * C(n, 2) so every term is an integer
    num = 2 * (cells * total - a * b)
    den = (a + b) * total - 2 * a * b
    if den == 0:
        # both partitions trivial (all singletons or a single cluster)
        return 1.0
    return num / den


def evaluate(pred, truth):
    return accuracy(pred, truth), nmi(pred, truth), ari(pred, truth)
