"""Per-view GCN embedding, dynamic view graphs and the graph self-attention encoder.

Every forward piece has a matching ``*_backward`` that maps upstream
gradients to input and parameter gradients. Discrete graph selections are
treated as constants during differentiation.
"""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import ContractError, DimensionError
from .graph import (
    normalize_adjacency,
    prune_missing,
    rbf_similarity,
    refine_view_graph,
    top_k_binarize,
)

LAYER_KEYS = ("W_Q", "W_K", "W_V", "W", "b")


@dataclass
class LayerParams:
    W_Q: np.ndarray
    W_K: np.ndarray
    W_V: np.ndarray
    W: np.ndarray
    b: np.ndarray


@dataclass
class ViewParameters:
    W_e: np.ndarray
    b_e: np.ndarray
    layers: list = field(default_factory=list)

    def named(self, prefix=""):
        out = {f"{prefix}W_e": self.W_e, f"{prefix}b_e": self.b_e}
        for l, lp in enumerate(self.layers):
            for key in LAYER_KEYS:
                out[f"{prefix}layer{l}.{key}"] = getattr(lp, key)
        return out

    def zeros_like(self):
        return ViewParameters(
            np.zeros_like(self.W_e),
            np.zeros_like(self.b_e),
            [LayerParams(*(np.zeros_like(getattr(lp, k)) for k in LAYER_KEYS)) for lp in self.layers],
        )


def flatten(params):
    """Name -> array views into a list of ViewParameters (no copies)."""
    out = {}
    for v, vp in enumerate(params):
        out.update(vp.named(f"view{v}."))
    return out


def unflatten(named, n_views, n_layers):
    params = []
    for v in range(n_views):
        p = f"view{v}."
        layers = [
            LayerParams(*(np.array(named[f"{p}layer{l}.{k}"]) for k in LAYER_KEYS))
            for l in range(n_layers)
        ]
        params.append(ViewParameters(np.array(named[f"{p}W_e"]), np.array(named[f"{p}b_e"]), layers))
    return params


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(view_dims, widths, n_layers, seed):
    rng = np.random.default_rng(seed)
    params = []
    for d, h in zip(view_dims, widths):
        W_e = _uniform(rng, d, (d, h))
        b_e = _uniform(rng, d, (h,))
        layers = [
            LayerParams(
                _uniform(rng, h, (h, h)),
                _uniform(rng, h, (h, h)),
                _uniform(rng, h, (h, h)),
                _uniform(rng, h, (h, h)),
                _uniform(rng, h, (h,)),
            )
            for _ in range(n_layers)
        ]
        params.append(ViewParameters(W_e, b_e, layers))
    return params


def save_params(params, path):
    """Write an ``.npz`` tensor dump plus a ``.json`` manifest of names/shapes."""
    path = Path(path)
    named = flatten(params)
    np.savez(path.with_suffix(".npz"), **named)
    manifest = {
        "n_views": len(params),
        "n_layers": len(params[0].layers) if params else 0,
        "tensors": {k: list(a.shape) for k, a in named.items()},
    }
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_params(path):
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    with np.load(path.with_suffix(".npz")) as data:
        named = {k: data[k] for k in data.files}
    for k, shape in manifest["tensors"].items():
        if list(named[k].shape) != shape:
            raise DimensionError(f"tensor {k} has shape {named[k].shape}, manifest says {shape}")
    return unflatten(named, manifest["n_views"], manifest["n_layers"])


# ---------------------------------------------------------------------------
# embedding layer
# ---------------------------------------------------------------------------

def embed(X_v, A_global_norm, params):
    """``Z = A' X W_e + b_e``."""
    if X_v.shape[0] != A_global_norm.shape[0]:
        raise DimensionError(f"X has {X_v.shape[0]} rows, graph has {A_global_norm.shape[0]}")
    if X_v.shape[1] != params.W_e.shape[0]:
        raise DimensionError(f"X has {X_v.shape[1]} columns, W_e expects {params.W_e.shape[0]}")
    return A_global_norm @ X_v @ params.W_e + params.b_e


def build_view_graph(Z_v, t, K, A_global, mask_col):
    """Similarity over the imputed features and its refined kNN graph."""
    S_hat = rbf_similarity(Z_v, t)
    A_v = refine_view_graph(top_k_binarize(S_hat, K), A_global, mask_col)
    return S_hat, A_v


def raw_view_graph(X_v, t, K, A_global, mask_col):
    """kNN view graph straight from the observed features (no embedding layer)."""
    S = prune_missing(rbf_similarity(X_v, t), mask_col)
    return refine_view_graph(top_k_binarize(S, K), A_global, mask_col)


# ---------------------------------------------------------------------------
# graph self-attention encoder
# ---------------------------------------------------------------------------

def attention_logits(H_prev, W_Q, W_K):
    return (H_prev @ W_Q) @ (H_prev @ W_K).T


def masked_softmax(E, A):
    """Row softmax of E over the support of A; zero elsewhere."""
    if not np.all(np.isfinite(E)):
        raise FloatingPointError("non-finite attention logits")
    try:
        return _kernels.masked_softmax(E, A)
    except ValueError as exc:
        raise ContractError(str(exc)) from None


def relu(x):
    return np.maximum(x, 0.0)


def encoder_layer_forward(H_prev, A, lp):
    Qm = H_prev @ lp.W_Q
    Km = H_prev @ lp.W_K
    att = masked_softmax(Qm @ Km.T, A)
    M1 = att @ H_prev
    V1 = M1 @ lp.W_V
    pre = V1 @ lp.W + lp.b
    H = relu(pre) + H_prev
    cache = {"H_prev": H_prev, "Qm": Qm, "Km": Km, "att": att, "M1": M1, "V1": V1, "pre": pre}
    return H, cache


def encoder_layer(H_prev, A, lp):
    """``relu((att @ H_prev @ W_V) @ W + b) + H_prev`` with masked dot-product attention."""
    return encoder_layer_forward(H_prev, A, lp)[0]


def encoder_layer_backward(dH, cache, lp):
    """Return (dH_prev, LayerParams of gradients)."""
    H_prev, att = cache["H_prev"], cache["att"]
    dpre = dH * (cache["pre"] > 0)
    dW = cache["V1"].T @ dpre
    db = dpre.sum(axis=0)
    dV1 = dpre @ lp.W.T
    dW_V = cache["M1"].T @ dV1
    dM1 = dV1 @ lp.W_V.T
    datt = dM1 @ H_prev.T
    dE = att * (datt - np.sum(datt * att, axis=1, keepdims=True))
    dQm = dE @ cache["Km"]
    dKm = dE.T @ cache["Qm"]
    dW_Q = H_prev.T @ dQm
    dW_K = H_prev.T @ dKm
    dH_prev = dH + att.T @ dM1 + dQm @ lp.W_Q.T + dKm @ lp.W_K.T
    return dH_prev, LayerParams(dW_Q, dW_K, dW_V, dW, db)


def rbf_backward(X, S, dS, t):
    """Gradient w.r.t. X of ``sum(dS * S)`` where ``S = rbf_similarity(X, t)``."""
    C = dS * S
    C = C + C.T
    return (2.0 / t) * (C @ X - C.sum(axis=1, keepdims=True) * X)


# ---------------------------------------------------------------------------
# full forward / backward
# ---------------------------------------------------------------------------

@dataclass
class ViewCache:
    X_in: np.ndarray
    Z: np.ndarray
    S_hat: np.ndarray
    A_view: np.ndarray
    layer_caches: list
    H: np.ndarray

    @property
    def H_layers(self):
        return [c["H_prev"] for c in self.layer_caches[1:]] + [self.H] if self.layer_caches else []


@dataclass
class ForwardCache:
    views: list
    A_global_norm: np.ndarray
    rbf_scale: float

    @property
    def Z(self):
        return [c.Z for c in self.views]

    @property
    def H(self):
        return [c.H for c in self.views]

    @property
    def S_hat(self):
        return [c.S_hat for c in self.views]

    @property
    def A_view(self):
        return [c.A_view for c in self.views]


def forward(ds, A_global, params, cfg, view_graphs=None, A_global_norm=None):
    """Embedding, view graphs and encoder for every view.

    ``view_graphs`` pins the per-view kNN graphs instead of re-selecting them
    (used for ablations with static raw-data graphs and for gradient checks).
    With the ``embed`` component disabled the embedding is a plain linear map
    of X (no graph propagation) and view graphs come from raw features.
    """
    use_embed = cfg.enabled("embed")
    if A_global_norm is None:
        A_global_norm = normalize_adjacency(A_global)
    caches = []
    for v, (X, vp) in enumerate(zip(ds.views, params)):
        if X.shape[1] != vp.W_e.shape[0]:
            raise DimensionError(f"view {v}: X has {X.shape[1]} columns, W_e expects {vp.W_e.shape[0]}")
        X_in = A_global_norm @ X if use_embed else X
        Z = X_in @ vp.W_e + vp.b_e
        S_hat = None
        if view_graphs is not None:
            A_v = view_graphs[v]
            if use_embed:
                S_hat = rbf_similarity(Z, cfg.rbf_scale)
        elif use_embed:
            S_hat, A_v = build_view_graph(Z, cfg.rbf_scale, cfg.n_neighbors, A_global, ds.mask[:, v])
        else:
            A_v = raw_view_graph(X, cfg.rbf_scale, cfg.n_neighbors, A_global, ds.mask[:, v])
        H = Z
        layer_caches = []
        for lp in vp.layers:
            H, c = encoder_layer_forward(H, A_v, lp)
            layer_caches.append(c)
        caches.append(ViewCache(X_in, Z, S_hat, A_v, layer_caches, H))
    return ForwardCache(caches, A_global_norm, cfg.rbf_scale)


def backward(cache, params, dH_views, dS_views=None):
    """Parameter gradients given upstream gradients on H^v and on S_hat^v."""
    grads = []
    for v, (vc, vp) in enumerate(zip(cache.views, params)):
        g = vp.zeros_like()
        dH = dH_views[v]
        for l in range(len(vp.layers) - 1, -1, -1):
            dH, g.layers[l] = encoder_layer_backward(dH, vc.layer_caches[l], vp.layers[l])
        dZ = dH
        if dS_views is not None and dS_views[v] is not None and vc.S_hat is not None:
            dZ = dZ + rbf_backward(vc.Z, vc.S_hat, dS_views[v], cache.rbf_scale)
        g.W_e = vc.X_in.T @ dZ
        g.b_e = dZ.sum(axis=0)
        grads.append(g)
    return grads

