"""Self-supervised clustering head: fusion, k-means, Student-t soft labels."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError


@dataclass
class ClusterState:
    centers: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    Q_views: list
    widths: tuple

    @property
    def center_blocks(self):
        return split_centers(self.centers, self.widths)


def fuse_features(H_views):
    """Concatenate per-view features column-wise in view order."""
    n = H_views[0].shape[0]
    for v, H in enumerate(H_views):
        if H.shape[0] != n:
            raise DimensionError(f"view {v} has {H.shape[0]} rows, view 0 has {n}")
    return np.concatenate(H_views, axis=1)


def split_centers(U, widths):
    offsets = np.cumsum((0,) + tuple(widths))
    return [U[:, a:b] for a, b in zip(offsets[:-1], offsets[1:])]


def _kmeans_pp(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centers[c] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[c]) ** 2, axis=1))
    return centers


def wcss(X, centers):
    _, d = _kernels.assign(X, centers)
    return float(d.sum())


def kmeans_update(H, n_clusters, warm_start=None, max_iter=50, seed=0, return_history=False):
    """Lloyd's algorithm; k-means++ start unless ``warm_start`` centers are given.

    An empty cluster is re-seeded at the point farthest from its assigned center.
    """
    X = np.asarray(H, dtype=np.float64)
    n = X.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters={n_clusters} must lie in [1, {n}]")
    if warm_start is None:
        centers = _kmeans_pp(X, n_clusters, np.random.default_rng(seed))
    else:
        centers = np.array(warm_start, dtype=np.float64, copy=True)
        if centers.shape != (n_clusters, X.shape[1]):
            raise DimensionError(f"warm_start shape {centers.shape} != ({n_clusters}, {X.shape[1]})")
    history = []
    labels, dist = _kernels.assign(X, centers)
    history.append(float(dist.sum()))
    for _ in range(max_iter):
        new = np.zeros_like(centers)
        counts = np.bincount(labels, minlength=n_clusters)
        np.add.at(new, labels, X)
        taken = set()
        for c in range(n_clusters):
            if counts[c] > 0:
                new[c] /= counts[c]
            else:
                order = np.argsort(-dist, kind="stable")
                far = next(int(i) for i in order if int(i) not in taken)
                taken.add(far)
                new[c] = X[far]
        new_labels, dist = _kernels.assign(X, new)
        obj = float(dist.sum())
        converged = np.array_equal(new_labels, labels) and np.array_equal(new, centers)
        centers, labels = new, new_labels
        history.append(obj)
        if converged:
            break
    if return_history:
        return centers, history
    return centers


def student_t(H, U, return_kernel=False):
    """Row-normalized ``(1 + ||h_i - u_j||^2)^-1``."""
    kern = 1.0 / (1.0 + _kernels.sqdist(H, U))
    Q = kern / kern.sum(axis=1, keepdims=True)
    if return_kernel:
        return Q, kern
    return Q


def soft_labels(H, U):
    if H.shape[1] != U.shape[1]:
        raise DimensionError(f"features have {H.shape[1]} columns, centers {U.shape[1]}")
    return student_t(H, U)


def sharpen(Q):
    """Square-and-renormalize each soft-label row."""
    Q = np.asarray(Q, dtype=np.float64)
    rows = Q.sum(axis=1, keepdims=True)
    if np.any(rows <= 0):
        raise ContractError("sharpen: all-zero soft-label row")
    Qn = Q / rows
    sq = Qn * Qn
    return sq / sq.sum(axis=1, keepdims=True)


def view_soft_labels(H_views, U, widths=None):
    """Per-view soft labels of h^v_i against the matching block U^v of the centers."""
    if widths is None:
        widths = [H.shape[1] for H in H_views]
    return [soft_labels(H, Uv) for H, Uv in zip(H_views, split_centers(U, widths))]


def final_assignment(Q_views):
    """argmax over clusters of the view-summed soft labels (ties -> lowest index)."""
    return np.argmax(np.sum(Q_views, axis=0), axis=1)


def cluster_state(H_views, centers):
    widths = tuple(H.shape[1] for H in H_views)
    Q = soft_labels(fuse_features(H_views), centers)
    return ClusterState(centers, Q, sharpen(Q), view_soft_labels(H_views, centers, widths), widths)
