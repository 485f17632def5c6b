"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``DGIMVCM_DISABLE_NUMBA`` is unset or ``0``. Both paths are always
importable (``nb_*`` / ``np_*``) so they can be checked against each other.
"""
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = HAS_NUMBA and os.environ.get("DGIMVCM_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# pairwise squared distances
# ---------------------------------------------------------------------------

def np_sqdist(X, Y=None):
    """Squared Euclidean distances between rows of X and rows of Y."""
    symmetric = Y is None
    if symmetric:
        Y = X
    xx = np.einsum("ij,ij->i", X, X)
    yy = xx if symmetric else np.einsum("ij,ij->i", Y, Y)
    D = xx[:, None] + yy[None, :] - 2.0 * (X @ Y.T)
    np.maximum(D, 0.0, out=D)
    if symmetric:
        # exact zeros on the diagonal and exact symmetry
        D = 0.5 * (D + D.T)
        np.fill_diagonal(D, 0.0)
    return D


@njit(cache=True)
def _nb_sqdist_sym(X):
    n, d = X.shape
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for f in range(d):
                diff = X[i, f] - X[j, f]
                s += diff * diff
            D[i, j] = s
            D[j, i] = s
    return D


@njit(cache=True)
def _nb_sqdist_cross(X, Y):
    n, d = X.shape
    m = Y.shape[0]
    D = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for f in range(d):
                diff = X[i, f] - Y[j, f]
                s += diff * diff
            D[i, j] = s
    return D


def nb_sqdist(X, Y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if Y is None:
        return _nb_sqdist_sym(X)
    return _nb_sqdist_cross(X, np.ascontiguousarray(Y, dtype=np.float64))


# ---------------------------------------------------------------------------
# per-row top-k selection (ties -> lowest column index)
# ---------------------------------------------------------------------------

def np_topk_rows(W, k, positive_only=False):
    n, m = W.shape
    out = np.zeros((n, m))
    if k == 0 or n == 0:
        return out
    order = np.argsort(-W, axis=1, kind="stable")[:, :k]
    rows = np.repeat(np.arange(n), k)
    cols = order.ravel()
    keep = np.ones(rows.shape[0], dtype=bool)
    if positive_only:
        keep &= W[rows, cols] > 0
    else:
        nonzero_row = np.any(W != 0, axis=1)
        keep &= nonzero_row[rows]
    out[rows[keep], cols[keep]] = 1.0
    return out


@njit(cache=True)
def _nb_topk_rows(W, k, positive_only):
    n, m = W.shape
    out = np.zeros((n, m))
    vals = np.empty(k)
    idx = np.empty(k, dtype=np.int64)
    for i in range(n):
        row = W[i]
        filled = 0
        any_nz = False
        for j in range(m):
            x = row[j]
            if x != 0.0:
                any_nz = True
            if positive_only and not x > 0.0:
                continue
            # buffer is sorted descending; equal values keep the earlier index
            if filled == k and not x > vals[k - 1]:
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and x > vals[pos - 1]:
                if pos < k:
                    vals[pos] = vals[pos - 1]
                    idx[pos] = idx[pos - 1]
                pos -= 1
            vals[pos] = x
            idx[pos] = j
            if filled < k:
                filled += 1
        if not positive_only and not any_nz:
            continue
        for r in range(filled):
            out[i, idx[r]] = 1.0
    return out


def nb_topk_rows(W, k, positive_only=False):
    return _nb_topk_rows(np.ascontiguousarray(W, dtype=np.float64), int(k), bool(positive_only))


# ---------------------------------------------------------------------------
# row softmax restricted to a binary support
# ---------------------------------------------------------------------------

def np_masked_softmax(E, A):
    support = A > 0
    if not np.all(support.any(axis=1)):
        raise ValueError("masked_softmax: adjacency has a row with no neighbors")
    Em = np.where(support, E, -np.inf)
    Em = Em - Em.max(axis=1, keepdims=True)
    P = np.where(support, np.exp(Em), 0.0)
    return P / P.sum(axis=1, keepdims=True)


@njit(cache=True)
def _nb_masked_softmax(E, A):
    n, m = E.shape
    out = np.zeros((n, m))
    for i in range(n):
        mx = -np.inf
        for j in range(m):
            if A[i, j] > 0.0 and E[i, j] > mx:
                mx = E[i, j]
        if mx == -np.inf:
            return out, i
        s = 0.0
        for j in range(m):
            if A[i, j] > 0.0:
                v = np.exp(E[i, j] - mx)
                out[i, j] = v
                s += v
        for j in range(m):
            out[i, j] /= s
    return out, -1


def nb_masked_softmax(E, A):
    out, bad = _nb_masked_softmax(
        np.ascontiguousarray(E, dtype=np.float64), np.ascontiguousarray(A, dtype=np.float64)
    )
    if bad >= 0:
        raise ValueError("masked_softmax: adjacency has a row with no neighbors")
    return out


# ---------------------------------------------------------------------------
# k-means assignment step
# ---------------------------------------------------------------------------

def np_assign(X, C):
    D = np_sqdist(X, C)
    labels = np.argmin(D, axis=1)
    return labels, D[np.arange(X.shape[0]), labels]


@njit(cache=True)
def _nb_assign(X, C):
    n, d = X.shape
    kc = C.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        bi = 0
        bd = np.inf
        for c in range(kc):
            s = 0.0
            for f in range(d):
                diff = X[i, f] - C[c, f]
                s += diff * diff
            if s < bd:
                bd = s
                bi = c
        labels[i] = bi
        best[i] = bd
    return labels, best


def nb_assign(X, C):
    return _nb_assign(
        np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(C, dtype=np.float64)
    )


if USE_NUMBA:
    sqdist = nb_sqdist
    topk_rows = nb_topk_rows
    masked_softmax = nb_masked_softmax
    assign = nb_assign
else:
    sqdist = np_sqdist
    topk_rows = np_topk_rows
    masked_softmax = np_masked_softmax
    assign = np_assign

BACKEND = "numba" if USE_NUMBA else "numpy"
