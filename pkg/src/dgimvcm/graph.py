"""Graph construction: RBF similarities, pruning, top-K graphs, normalization.

Graphs are dense float64 0/1 matrices and are kept row-wise (not symmetrized).
"""
import numpy as np

from . import _kernels
from .errors import DimensionError


def rbf_similarity(X, t):
    """``S_ij = exp(-||x_i - x_j||^2 / t)``."""
    if t <= 0:
        raise ValueError("rbf scale t must be positive")
    X = np.asarray(X, dtype=np.float64)
    return np.exp(-_kernels.sqdist(X) / t)


def prune_missing(S, mask_col):
    """Zero the rows and columns of samples absent from this view."""
    keep = np.asarray(mask_col, dtype=np.float64)
    return S * keep[:, None] * keep[None, :]


def top_k_binarize(W, K):
    """Set the K largest entries of every row to 1, everything else to 0.

    Ties go to the lowest column index; all-zero rows stay all-zero.
    """
    W = np.asarray(W, dtype=np.float64)
    if not 1 <= K <= W.shape[1]:
        raise ValueError(f"K={K} must lie in [1, {W.shape[1]}]")
    return _kernels.topk_rows(W, K, False)


def fused_similarity(views, mask, t):
    mask = np.asarray(mask, dtype=np.float64)
    n = mask.shape[0]
    total = np.zeros((n, n))
    for v, X in enumerate(views):
        if X.shape[0] != n:
            raise DimensionError(f"view {v} has {X.shape[0]} rows, mask has {n}")
        total += prune_missing(rbf_similarity(X, t), mask[:, v])
    return total


def fuse_global_graph(views, mask, t, K):
    """Global kNN graph from the sum of pruned per-view similarities."""
    return top_k_binarize(fused_similarity(views, mask, t), K)


def normalize_adjacency(A):
    """``D^-1/2 A D^-1/2`` with row-sum degrees; zero-degree rows stay zero."""
    A = np.asarray(A, dtype=np.float64)
    deg = A.sum(axis=1)
    inv = np.zeros_like(deg)
    pos = deg > 0
    inv[pos] = 1.0 / np.sqrt(deg[pos])
    return inv[:, None] * A * inv[None, :]


def refine_view_graph(A_v, A_global, mask_col):
    """Replace the rows of absent samples by the matching global-graph rows."""
    missing = np.asarray(mask_col) == 0
    out = np.array(A_v, dtype=np.float64, copy=True)
    out[missing] = A_global[missing]
    return out


def edge_list(A):
    """``(i, j)`` pairs of every edge, row-major."""
    rows, cols = np.nonzero(A)
    return np.stack([rows, cols], axis=1)


def save_edge_list(A, path):
    np.savetxt(path, edge_list(A), fmt="%d", delimiter=",", header="i,j", comments="")
