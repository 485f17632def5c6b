from dataclasses import asdict, dataclass, field, fields, replace

LOSS_VARIANTS = ("masked", "traditional")
COMPONENTS = ("rec", "embed", "kl")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``n_neighbors`` is the per-row edge count of every kNN graph and
    ``n_mask_edges`` the per-row edge budget of the reconstruction mask.
    ``hidden_dims`` may hold a single width, which is then used for every view.
    ``disable`` lists ablated components out of ``COMPONENTS``.
    """

    n_clusters: int = 10
    n_neighbors: int = 10
    n_mask_edges: int = 10
    rbf_scale: float = 2.0
    temperature: float = 0.5
    alpha: float = 1.0
    beta: float = 1.0
    learning_rate: float = 1e-3
    epochs: int = 200
    hidden_dims: tuple = (64,)
    n_gat_layers: int = 2
    kmeans_max_iter: int = 50
    kmeans_warm_iter: int = 5
    seed: int = 0
    rec_loss: str = "masked"
    disable: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "disable", tuple(sorted(set(self.disable))))
        if self.n_clusters < 1 or self.n_neighbors < 1 or self.n_mask_edges < 1:
            raise ValueError("n_clusters, n_neighbors and n_mask_edges must be positive")
        if self.n_mask_edges > self.n_neighbors:
            raise ValueError("n_mask_edges must not exceed n_neighbors")
        if self.rbf_scale <= 0 or self.temperature <= 0 or self.learning_rate <= 0:
            raise ValueError("rbf_scale, temperature and learning_rate must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.epochs < 0 or self.n_gat_layers < 0:
            raise ValueError("epochs and n_gat_layers must be nonnegative")
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ValueError("hidden_dims must hold positive widths")
        if self.rec_loss not in LOSS_VARIANTS:
            raise ValueError(f"rec_loss must be one of {LOSS_VARIANTS}")
        bad = set(self.disable) - set(COMPONENTS)
        if bad:
            raise ValueError(f"unknown components in disable: {sorted(bad)}")

    def widths(self, n_views):
        if len(self.hidden_dims) == 1:
            return self.hidden_dims * n_views
        if len(self.hidden_dims) != n_views:
            raise ValueError(f"hidden_dims has {len(self.hidden_dims)} entries for {n_views} views")
        return self.hidden_dims

    def check_against(self, n_samples):
        if self.n_neighbors > n_samples:
            raise ValueError(f"n_neighbors={self.n_neighbors} exceeds N={n_samples}")
        if self.n_clusters > n_samples:
            raise ValueError(f"n_clusters={self.n_clusters} exceeds N={n_samples}")

    def enabled(self, component):
        return component not in self.disable

    def with_overrides(self, overrides):
        """Return a copy with ``key=value`` string overrides applied."""
        types = {f.name: f.type for f in fields(self)}
        kw = {}
        for key, raw in overrides.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            current = getattr(self, key)
            if isinstance(current, tuple):
                parts = [p for p in str(raw).replace(";", ",").split(",") if p]
                kw[key] = tuple(int(p) for p in parts) if key == "hidden_dims" else tuple(parts)
            elif isinstance(current, bool):
                kw[key] = str(raw).lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                kw[key] = int(raw)
            elif isinstance(current, float):
                kw[key] = float(raw)
            else:
                kw[key] = str(raw)
        return replace(self, **kw)

    def to_dict(self):
        d = asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        d["disable"] = list(self.disable)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
