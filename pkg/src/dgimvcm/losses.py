"""Training losses and their gradients.

Reconstruction (masked or traditional), cross-view graph-structure
contrastive loss, KL self-training loss and their weighted total. Graph
masks, cluster centers and pseudo-labels are constants under
differentiation.
"""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .clustering import student_t
from .errors import ContractError
from .graph import rbf_similarity
from .model import rbf_backward

KL_Q_FLOOR = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    rec: float
    con: float
    kl: float
    total: float

    def as_dict(self):
        return {"rec": self.rec, "con": self.con, "kl": self.kl, "total": self.total}


def total_loss(rec, con, kl, alpha, beta):
    return LossBreakdown(float(rec), float(con), float(kl), float(rec + alpha * con + beta * kl))


# ---------------------------------------------------------------------------
# reconstruction
# ---------------------------------------------------------------------------

def reconstructed_graph(H_v, t):
    return rbf_similarity(H_v, t)


def graph_mask(A_hat, k):
    """Indicator of the k strongest (positive) entries per row; ties -> lowest index."""
    A_hat = np.asarray(A_hat, dtype=np.float64)
    if not 1 <= k <= A_hat.shape[1]:
        raise ValueError(f"k={k} must lie in [1, {A_hat.shape[1]}]")
    return _kernels.topk_rows(A_hat, k, True)


def _rec_term(A_hat, A_global, mask):
    R = (A_hat if mask is None else mask * A_hat) - A_global
    return float(np.sum(R * R)) / A_hat.shape[0]


def masked_rec_loss(A_hats, A_global, k, masks=None):
    """Mean over views of ``||M^v * A_hat^v - A_global||_F^2 / N``.

    ``masks`` pins the graph masks; by default each is ``graph_mask(A_hat, k)``.
    """
    if masks is None:
        masks = [graph_mask(A, k) for A in A_hats]
    return sum(_rec_term(A, A_global, M) for A, M in zip(A_hats, masks)) / len(A_hats)


def traditional_rec_loss(A_hats, A_global):
    return sum(_rec_term(A, A_global, None) for A in A_hats) / len(A_hats)


def rec_loss_and_grad(H_views, A_global, t, k=None, masks=None):
    """Reconstruction loss and its gradient w.r.t. every H^v.

    ``k=None`` and ``masks=None`` gives the traditional (unmasked) loss.
    Returns ``(loss, [dH^v], masks_used)``.
    """
    V = len(H_views)
    n = A_global.shape[0]
    loss = 0.0
    grads, used = [], []
    for v, H in enumerate(H_views):
        A_hat = reconstructed_graph(H, t)
        if masks is not None:
            M = masks[v]
        elif k is not None:
            M = graph_mask(A_hat, k)
        else:
            M = None
        R = (A_hat if M is None else M * A_hat) - A_global
        loss += float(np.sum(R * R)) / n
        dA = (2.0 / (V * n)) * (R if M is None else M * R)
        grads.append(rbf_backward(H, A_hat, dA, t))
        used.append(M)
    return loss / V, grads, used


def sample_rec_loss(H_v, A_global, t, i, mask_row=None):
    """Per-sample loss ``sum_j (M_ij A_hat_ij - A_ij)^2`` with distances taken directly."""
    a = np.exp(-np.sum((H_v - H_v[i]) ** 2, axis=1) / t)
    if mask_row is not None:
        a = mask_row * a
    return float(np.sum((a - A_global[i]) ** 2))


def _edge_gradient(H_v, A_global, t, i, support):
    a_hat = np.exp(-np.sum((H_v - H_v[i]) ** 2, axis=1) / t)
    informative = A_global[i] == 1
    coef = np.where(informative, (a_hat - 1.0) * a_hat, a_hat ** 2) * support
    return (4.0 / t) * coef @ (H_v - H_v[i])


def grad_traditional(H_v, A_global, t, i):
    """Closed-form gradient of the unmasked per-sample loss w.r.t. h_i.

    Informative edges (``A_global[i, j] == 1``) contribute the attractive
    term ``(a-1) a (h_j - h_i)``, all others the repulsive ``a^2 (h_j - h_i)``.
    """
    return _edge_gradient(H_v, A_global, t, i, np.ones(H_v.shape[0]))


def grad_masked(H_v, A_global, t, k, i):
    """Closed-form gradient of the masked per-sample loss w.r.t. h_i (mask frozen)."""
    mask = graph_mask(reconstructed_graph(H_v, t), k)
    return _edge_gradient(H_v, A_global, t, i, mask[i])


def repulsive_term_counts(A_global, mask=None):
    """Per-sample count of repulsive gradient terms (non-edges that carry gradient)."""
    off = A_global != 1
    if mask is not None:
        off = off & (mask == 1)
    return off.sum(axis=1)


# ---------------------------------------------------------------------------
# graph-structure contrastive loss
# ---------------------------------------------------------------------------

def _row_normalize(S):
    norms = np.linalg.norm(S, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, S / safe, 0.0), norms


def _logsumexp_rows(A):
    m = A.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(A - m).sum(axis=1, keepdims=True)))[:, 0]


def contrastive_loss_and_grad(S_hats, tau, with_grad=True):
    """Cross-view contrastive loss over rows of the view similarity matrices.

    For views v != w and sample i the positive pair is (row i of v, row i of w);
    the denominator runs over rows j != i of both v and w. Cosine similarity
    with a zero row is 0.
    """
    V = len(S_hats)
    if V < 2:
        raise ContractError("contrastive loss needs at least two views")
    n = S_hats[0].shape[0]
    if n < 2:
        raise ContractError("contrastive loss needs at least two samples")
    normed = [_row_normalize(np.asarray(S, dtype=np.float64)) for S in S_hats]
    U = [u for u, _ in normed]
    cos = {}
    for v in range(V):
        for w in range(v, V):
            cos[v, w] = U[v] @ U[w].T
            cos[w, v] = cos[v, w].T
    keep = np.concatenate([~np.eye(n, dtype=bool)] * 2, axis=1)
    diag = np.diag_indices(n)
    G = {key: np.zeros((n, n)) for key in cos}
    loss = 0.0
    for v in range(V):
        for w in range(V):
            if w == v:
                continue
            masked = np.where(keep, np.concatenate([cos[v, v], cos[v, w]], axis=1) / tau, -np.inf)
            lse = _logsumexp_rows(masked)
            loss += float(np.mean(lse - np.diag(cos[v, w]) / tau))
            if not with_grad:
                continue
            soft = np.exp(masked - lse[:, None]) / (n * tau)
            G[v, v] += soft[:, :n]
            G[v, w] += soft[:, n:]
            G[v, w][diag] -= 1.0 / (n * tau)
    if not with_grad:
        return loss, None
    # cos[v, w] = U_v U_w^T and cos[w, v] is its transpose
    dS = []
    for v, (u, norms) in enumerate(normed):
        g = (G[v, v] + G[v, v].T) @ U[v]
        for w in range(V):
            if w != v:
                g += (G[v, w] + G[w, v].T) @ U[w]
        safe = np.where(norms > 0, norms, 1.0)
        ds = (g - u * np.sum(u * g, axis=1, keepdims=True)) / safe
        dS.append(np.where(norms > 0, ds, 0.0))
    return loss, dS


def contrastive_loss(S_hats, tau):
    return contrastive_loss_and_grad(S_hats, tau, with_grad=False)[0]


# ---------------------------------------------------------------------------
# KL self-training loss
# ---------------------------------------------------------------------------

def _check_rows(name, P):
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-6):
        raise ContractError(f"{name} rows must sum to 1")


def kl_loss(P, Q_views):
    """``sum_v sum_ij p_ij log(p_ij / q^v_ij)``; zero-probability targets contribute 0."""
    P = np.asarray(P, dtype=np.float64)
    _check_rows("P", P)
    pos = P > 0
    total = 0.0
    for Q in Q_views:
        Q = np.asarray(Q, dtype=np.float64)
        _check_rows("Q", Q)
        q = np.maximum(Q, KL_Q_FLOOR)
        total += float(np.sum(P[pos] * (np.log(P[pos]) - np.log(q[pos]))))
    return total


def kl_grad_views(P, H_views, center_blocks):
    """Gradient of the KL loss w.r.t. each H^v with P and centers held fixed."""
    grads = []
    for H, U in zip(H_views, center_blocks):
        Q, kern = student_t(H, U, return_kernel=True)
        coef = (P - Q) * kern
        grads.append(2.0 * (coef.sum(axis=1, keepdims=True) * H - coef @ U))
    return grads
