"""Full-batch training loop, gradient assembly, Adam and checkpoints."""
import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .clustering import (
    ClusterState,
    cluster_state,
    final_assignment,
    fuse_features,
    kmeans_update,
    soft_labels,
    split_centers,
)
from .errors import TrainingDiverged
from .graph import fuse_global_graph, normalize_adjacency
from .losses import (
    contrastive_loss_and_grad,
    kl_grad_views,
    kl_loss,
    rec_loss_and_grad,
    total_loss,
)
from .model import backward, flatten, forward, init_params, raw_view_graph, unflatten

log = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

HISTORY_COLUMNS = ("epoch", "rec", "con", "kl", "total", "acc", "nmi", "ari")


@dataclass
class TrainState:
    params: list
    m: dict
    v: dict
    step: int = 0
    epoch: int = 0
    cluster: ClusterState = None
    history: list = field(default_factory=list)


def adam_step(params, grads, m, v, step, lr):
    """One bias-corrected Adam update over name -> array dicts.

    Returns new ``(params, m, v, step)``; inputs are not modified.
    """
    step = step + 1
    bc1 = 1.0 - ADAM_BETA1 ** step
    bc2 = 1.0 - ADAM_BETA2 ** step
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        mk = ADAM_BETA1 * m[name] + (1.0 - ADAM_BETA1) * g
        vk = ADAM_BETA2 * v[name] + (1.0 - ADAM_BETA2) * (g * g)
        new_p[name] = p - lr * (mk / bc1) / (np.sqrt(vk / bc2) + ADAM_EPS)
        new_m[name] = mk
        new_v[name] = vk
    return new_p, new_m, new_v, step


def compute_gradients(params, cache, A_global, cfg, centers=None, P=None, masks=None, with_grad=True):
    """Loss breakdown and parameter gradients for one forward cache.

    Constants under differentiation: the view graphs stored in ``cache``, the
    reconstruction masks (selected here unless ``masks`` is given), the
    cluster ``centers`` and the pseudo-labels ``P``.
    Returns ``(LossBreakdown, grads or None, masks_used)``.
    """
    H_views = cache.H
    n_views = len(H_views)
    dH = [np.zeros_like(H) for H in H_views]
    dS = None

    con = 0.0
    if cfg.enabled("embed") and n_views >= 2:
        con, dS_con = contrastive_loss_and_grad(cache.S_hat, cfg.temperature, with_grad=with_grad)
        if with_grad:
            dS = [cfg.alpha * g for g in dS_con]

    rec, masks_used = 0.0, masks
    if cfg.enabled("rec"):
        k = cfg.n_mask_edges if cfg.rec_loss == "masked" else None
        rec, g_rec, masks_used = rec_loss_and_grad(H_views, A_global, cfg.rbf_scale, k=k, masks=masks)
        if with_grad:
            dH = [a + b for a, b in zip(dH, g_rec)]

    kl = 0.0
    if cfg.enabled("kl"):
        if centers is None or P is None:
            raise ValueError("KL term needs cluster centers and pseudo-labels")
        blocks = split_centers(centers, [H.shape[1] for H in H_views])
        Q_views = [soft_labels(H, U) for H, U in zip(H_views, blocks)]
        kl = kl_loss(P, Q_views)
        if with_grad:
            g_kl = kl_grad_views(P, H_views, blocks)
            dH = [a + cfg.beta * b for a, b in zip(dH, g_kl)]

    breakdown = total_loss(rec, con, kl, cfg.alpha, cfg.beta)
    grads = backward(cache, params, dH, dS) if with_grad else None
    return breakdown, grads, masks_used


def _check_finite(breakdown, epoch):
    for name in ("rec", "con", "kl", "total"):
        val = getattr(breakdown, name)
        if not np.isfinite(val):
            raise TrainingDiverged(f"epoch {epoch}: loss term {name!r} is non-finite ({val})")


def _checked_forward(epoch, *args, **kwargs):
    try:
        cache = forward(*args, **kwargs)
    except FloatingPointError as exc:
        raise TrainingDiverged(f"epoch {epoch}: forward pass: {exc}") from None
    for v, H in enumerate(cache.H):
        if not np.all(np.isfinite(H)):
            raise TrainingDiverged(f"epoch {epoch}: forward pass: view {v} features are non-finite")
    return cache


def _refresh_clusters(H_views, cfg, previous):
    H = fuse_features(H_views)
    if previous is None:
        centers = kmeans_update(H, cfg.n_clusters, max_iter=cfg.kmeans_max_iter, seed=cfg.seed)
    else:
        centers = kmeans_update(H, cfg.n_clusters, warm_start=previous, max_iter=cfg.kmeans_warm_iter)
    return cluster_state(H_views, centers)


def static_view_graphs(ds, A_global, cfg):
    """Raw-feature view graphs, used when the embedding layer is ablated."""
    if cfg.enabled("embed"):
        return None
    return [
        raw_view_graph(X, cfg.rbf_scale, cfg.n_neighbors, A_global, ds.mask[:, v])
        for v, X in enumerate(ds.views)
    ]


def train(ds, cfg, callback=None):
    """Run the optimization loop; returns ``(TrainState, labels)``.

    Per epoch: forward (embedding, view graphs, encoder), contrastive and
    reconstruction losses, k-means on the fused features, pseudo-labels,
    per-view soft labels, KL loss, total loss, one Adam step. Final labels
    come from a last forward pass and k-means refresh.
    """
    cfg.check_against(ds.n_samples)
    widths = cfg.widths(ds.n_views)
    A_global = fuse_global_graph(ds.views, ds.mask, cfg.rbf_scale, cfg.n_neighbors)
    A_norm = normalize_adjacency(A_global)
    fixed_graphs = static_view_graphs(ds, A_global, cfg)

    params = init_params(ds.view_dims, widths, cfg.n_gat_layers, cfg.seed)
    flat = flatten(params)
    state = TrainState(
        params=params,
        m={k: np.zeros_like(a) for k, a in flat.items()},
        v={k: np.zeros_like(a) for k, a in flat.items()},
    )
    centers = None
    for epoch in range(1, cfg.epochs + 1):
        cache = _checked_forward(epoch, ds, A_global, state.params, cfg,
                                 view_graphs=fixed_graphs, A_global_norm=A_norm)
        cl = _refresh_clusters(cache.H, cfg, centers)
        centers = cl.centers
        breakdown, grads, _ = compute_gradients(state.params, cache, A_global, cfg, cl.centers, cl.P)
        _check_finite(breakdown, epoch)
        record = {"epoch": epoch, **breakdown.as_dict()}
        if ds.labels is not None:
            acc, nmi, ari = metrics.evaluate(final_assignment(cl.Q_views), ds.labels)
            record.update(acc=acc, nmi=nmi, ari=ari)
        state.history.append(record)
        new_flat, state.m, state.v, state.step = adam_step(
            flatten(state.params), flatten(grads), state.m, state.v, state.step, cfg.learning_rate
        )
        state.params = unflatten(new_flat, ds.n_views, cfg.n_gat_layers)
        state.epoch = epoch
        state.cluster = cl
        if callback is not None:
            callback(state)
        if epoch == 1 or epoch % 50 == 0 or epoch == cfg.epochs:
            log.debug("epoch %d %s", epoch, record)

    cache = _checked_forward(state.epoch, ds, A_global, state.params, cfg,
                             view_graphs=fixed_graphs, A_global_norm=A_norm)
    for name, arr in flatten(state.params).items():
        if not np.all(np.isfinite(arr)):
            raise TrainingDiverged(f"parameter {name} is non-finite after training")
    state.cluster = _refresh_clusters(cache.H, cfg, centers)
    return state, final_assignment(state.cluster.Q_views)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def write_history(history, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=HISTORY_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for rec in history:
            writer.writerow({k: rec.get(k, "") for k in HISTORY_COLUMNS})
    return path


def save_state(state, path, cfg=None):
    """``<path>.npz`` with parameters, Adam moments and centers; ``<path>.json`` with the rest."""
    path = Path(path)
    arrays = {}
    for prefix, d in (("param", flatten(state.params)), ("m", state.m), ("v", state.v)):
        for k, a in d.items():
            arrays[f"{prefix}:{k}"] = a
    if state.cluster is not None:
        arrays["centers"] = state.cluster.centers
    np.savez(path.with_suffix(".npz"), **arrays)
    meta = {
        "step": state.step,
        "epoch": state.epoch,
        "n_views": len(state.params),
        "n_layers": len(state.params[0].layers) if state.params else 0,
        "widths": list(state.cluster.widths) if state.cluster is not None else None,
        "history": state.history,
        "config": cfg.to_dict() if cfg is not None else None,
        "tensors": {k: list(a.shape) for k, a in arrays.items()},
    }
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_state(path):
    """Restore a TrainState; the cluster soft labels are left for the caller to recompute."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with np.load(path.with_suffix(".npz")) as data:
        arrays = {k: data[k] for k in data.files}
    split = {"param": {}, "m": {}, "v": {}}
    for k, a in arrays.items():
        if ":" in k:
            prefix, name = k.split(":", 1)
            split[prefix][name] = a
    params = unflatten(split["param"], meta["n_views"], meta["n_layers"])
    state = TrainState(params, split["m"], split["v"], meta["step"], meta["epoch"], None, meta["history"])
    centers = arrays.get("centers")
    return state, centers
