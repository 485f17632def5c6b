"""Multi-view datasets: container I/O, missing-view simulation, scaling.

Container layout (a directory)::

    meta.json     {"format": "dgimvcm-multiview", "version": 1,
                   "n_samples": N, "n_views": V, "view_dims": [d_0, ...],
                   "has_mask": bool, "has_labels": bool}
    view_0.csv    N rows of d_0 comma-separated decimals
    ...
    mask.csv      optional, N rows of V values in {0, 1}
    labels.csv    optional, N integers, one per line

Decimals are written with 17 significant digits so save/load round-trips
float64 values exactly.
"""
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DatasetParseError, DimensionError, InvariantError

FORMAT_NAME = "dgimvcm-multiview"


@dataclass(frozen=True, eq=False)
class MultiViewDataset:
    views: tuple
    mask: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        views = tuple(np.asarray(v, dtype=np.float64) for v in self.views)
        if not views:
            raise DimensionError("dataset needs at least one view")
        for v, X in enumerate(views):
            if X.ndim != 2:
                raise DimensionError(f"view {v} is not a matrix (ndim={X.ndim})")
        n = views[0].shape[0]
        for v, X in enumerate(views):
            if X.shape[0] != n:
                raise DimensionError(f"view {v} has {X.shape[0]} rows, view 0 has {n}")
        mask = np.asarray(self.mask, dtype=np.float64)
        if mask.shape != (n, len(views)):
            raise DimensionError(f"mask shape {mask.shape} != ({n}, {len(views)})")
        if not np.all((mask == 0) | (mask == 1)):
            raise InvariantError("mask entries must be 0 or 1")
        empty = np.flatnonzero(mask.sum(axis=1) == 0)
        if empty.size:
            raise InvariantError(f"sample with no views: row {int(empty[0])}")
        # missing rows are zero vectors
        views = tuple(X * mask[:, [v]] for v, X in enumerate(views))
        labels = None if self.labels is None else np.asarray(self.labels).astype(np.int64)
        if labels is not None and labels.shape != (n,):
            raise DimensionError(f"labels shape {labels.shape} != ({n},)")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "labels", labels)

    @property
    def n_samples(self):
        return self.views[0].shape[0]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def view_dims(self):
        return [X.shape[1] for X in self.views]

    @property
    def is_complete(self):
        return bool(np.all(self.mask == 1))

    def missing_rate(self):
        return float(np.mean(np.any(self.mask == 0, axis=1)))


def _read_matrix(path, what, n_cols=None):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                vals = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise DatasetParseError(f"{what}: row {lineno}: {exc}") from None
            if n_cols is not None and len(vals) != n_cols:
                raise DatasetParseError(f"{what}: row {lineno}: expected {n_cols} values, got {len(vals)}")
            if rows and len(vals) != len(rows[0]):
                raise DatasetParseError(
                    f"{what}: row {lineno}: expected {len(rows[0])} values, got {len(vals)}"
                )
            rows.append(vals)
    if not rows:
        raise DatasetParseError(f"{what}: no rows in {path}")
    return np.array(rows, dtype=np.float64)


def load_dataset(path):
    """Read a dataset container directory."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    meta_path = path / "meta.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        n_views = int(meta["n_views"])
        dims = meta.get("view_dims")
    else:
        n_views = len(list(path.glob("view_*.csv")))
        dims = None
    if n_views < 1:
        raise DatasetParseError(f"no view files in {path}")
    views = []
    for v in range(n_views):
        f = path / f"view_{v}.csv"
        if not f.exists():
            raise DatasetParseError(f"view {v}: missing file {f}")
        X = _read_matrix(f, f"view {v}", None if dims is None else int(dims[v]))
        views.append(X)
    n = views[0].shape[0]
    for v, X in enumerate(views):
        if X.shape[0] != n:
            raise DimensionError(f"view {v} has {X.shape[0]} rows, view 0 has {n}")
    mask = np.ones((n, n_views))
    if (path / "mask.csv").exists():
        mask = _read_matrix(path / "mask.csv", "mask", n_views)
    labels = None
    if (path / "labels.csv").exists():
        raw = _read_matrix(path / "labels.csv", "labels", 1)[:, 0]
        if not np.all(raw == np.round(raw)):
            raise DatasetParseError("labels: non-integer value")
        labels = raw.astype(np.int64)
    return MultiViewDataset(views=views, mask=mask, labels=labels)


def save_dataset(ds, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for v, X in enumerate(ds.views):
        np.savetxt(path / f"view_{v}.csv", X, fmt="%.17g", delimiter=",")
    np.savetxt(path / "mask.csv", ds.mask, fmt="%d", delimiter=",")
    if ds.labels is not None:
        np.savetxt(path / "labels.csv", ds.labels, fmt="%d")
    elif (path / "labels.csv").exists():
        (path / "labels.csv").unlink()
    meta = {
        "format": FORMAT_NAME,
        "version": 1,
        "n_samples": ds.n_samples,
        "n_views": ds.n_views,
        "view_dims": ds.view_dims,
        "has_mask": True,
        "has_labels": ds.labels is not None,
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def simulate_missing(complete, delta, rng_seed):
    """Remove views from ``round(delta * N)`` random samples.

    Each affected sample loses a uniform-random number of views in
    ``{1, ..., V-1}``, so every sample keeps at least one view.
    """
    if not 0.0 <= delta < 1.0:
        raise ValueError(f"missing rate must lie in [0, 1), got {delta}")
    if not complete.is_complete:
        raise ValueError("simulate_missing expects a complete dataset")
    n, V = complete.n_samples, complete.n_views
    n_affected = round(delta * n)
    if n_affected > n:
        raise ValueError(f"round(delta*N)={n_affected} exceeds N={n}")
    if n_affected and V < 2:
        raise ValueError("simulating missing views needs at least two views")
    rng = np.random.default_rng(rng_seed)
    mask = np.ones((n, V))
    for i in rng.choice(n, size=n_affected, replace=False):
        n_drop = rng.integers(1, V)
        mask[i, rng.choice(V, size=n_drop, replace=False)] = 0.0
    return MultiViewDataset(views=complete.views, mask=mask, labels=complete.labels)


def normalize_views(ds):
    """Per-feature min-max scaling to [0, 1] using observed rows only."""
    out = []
    for v, X in enumerate(ds.views):
        seen = ds.mask[:, v] == 1
        if not seen.any():
            out.append(np.zeros_like(X))
            continue
        lo = X[seen].min(axis=0)
        span = X[seen].max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        Y = np.where(span > 0, (X - lo) / safe, 0.0)
        out.append(Y * ds.mask[:, [v]])
    return replace(ds, views=tuple(out))


def make_gaussian_blobs(n_samples=200, n_views=3, n_clusters=4, dim=10, separation=5.0,
                        sigma=1.0, seed=0):
    """Complete multi-view Gaussian blobs.

    In every view the cluster means sit on ``n_clusters`` orthogonal axes of a
    random rotation, scaled so each pair of means is ``separation * sigma``
    apart; noise is isotropic with standard deviation ``sigma``.
    """
    if n_clusters > dim:
        raise ValueError("need dim >= n_clusters for orthogonal cluster means")
    rng = np.random.default_rng(seed)
    labels = np.arange(n_samples) % n_clusters
    rng.shuffle(labels)
    views = []
    for _ in range(n_views):
        R, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        means = (separation * sigma / np.sqrt(2.0)) * R[:, :n_clusters].T
        views.append(means[labels] + sigma * rng.standard_normal((n_samples, dim)))
    return MultiViewDataset(views=views, mask=np.ones((n_samples, n_views)), labels=labels)
