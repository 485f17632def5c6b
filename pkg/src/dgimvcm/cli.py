"""Command-line entry point.

    dgimvcm blobs    --out DIR                        write the synthetic blob fixture
    dgimvcm simulate --dataset DIR --delta D --seed S  write masked copies
    dgimvcm train    --dataset DIR --delta D --seed S  train + evaluate, results.csv
    dgimvcm ablate   --dataset DIR --delta D --seed S  component / loss ablations

The default output directory is ``$DGIMVCM_OUT`` or ``./runs``.
"""
import argparse
import csv
import logging
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import COMPONENTS, LOSS_VARIANTS, TrainConfig
from .dataset import load_dataset, make_gaussian_blobs, normalize_views, save_dataset, simulate_missing
from .metrics import evaluate
from .trainer import train, write_history

log = logging.getLogger("dgimvcm")

RESULT_COLUMNS = ("dataset", "delta", "seed", "variant", "acc", "nmi", "ari", "epochs", "wall_seconds")

ABLATIONS = (
    ("full", "masked", ()),
    ("no_rec", "masked", ("rec",)),
    ("no_embed", "masked", ("embed",)),
    ("no_kl", "masked", ("kl",)),
    ("masked", "masked", ()),
    ("traditional", "traditional", ()),
)


@dataclass
class ExperimentSpec:
    dataset: Path
    deltas: list = field(default_factory=lambda: [0.0])
    seeds: list = field(default_factory=lambda: [0])
    loss: str = "masked"
    disable: tuple = ()
    overrides: dict = field(default_factory=dict)
    out: Path = None
    normalize: bool = True
    jobs: int = 1

    def __post_init__(self):
        self.dataset = Path(self.dataset)
        self.out = Path(self.out or os.environ.get("DGIMVCM_OUT", "runs"))
        for d in self.deltas:
            if not 0.0 <= d < 1.0:
                raise ValueError(f"missing rate {d} outside [0, 1)")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if self.loss not in LOSS_VARIANTS:
            raise ValueError(f"--loss must be one of {LOSS_VARIANTS}")

    @property
    def name(self):
        return self.dataset.name

    def config(self, seed, loss=None, disable=None, n_clusters=None):
        cfg = TrainConfig().with_overrides(self.overrides)
        kw = {"seed": seed, "rec_loss": loss or self.loss,
              "disable": tuple(self.disable if disable is None else disable)}
        if n_clusters is not None and "n_clusters" not in self.overrides:
            kw["n_clusters"] = n_clusters
        return replace(cfg, **kw)


def variant_name(loss, disable):
    return loss + "".join(f"-no_{c}" for c in sorted(disable))


def prepare(complete, delta, seed, normalize=True):
    ds = complete
    if delta > 0:
        ds = simulate_missing(complete, delta, seed)
    return normalize_views(ds) if normalize else ds


def _fmt(x):
    return repr(float(x)) if x is not None else ""


def _run_one(spec, delta, seed, variant, cfg):
    complete = load_dataset(spec.dataset)
    ds = prepare(complete, delta, seed, spec.normalize)
    t0 = time.perf_counter()
    state, labels = train(ds, cfg)
    wall = time.perf_counter() - t0
    tag = f"{variant}_d{delta:g}_s{seed}"
    write_history(state.history, spec.out / f"history_{tag}.csv")
    np.savetxt(spec.out / f"labels_{tag}.csv", labels, fmt="%d")
    if ds.labels is None:
        scores = (None, None, None)
    else:
        scores = evaluate(labels, ds.labels)
    return {
        "dataset": spec.name,
        "delta": delta,
        "seed": seed,
        "variant": variant,
        "acc": scores[0],
        "nmi": scores[1],
        "ari": scores[2],
        "epochs": cfg.epochs,
        "wall_seconds": wall,
    }


def _run_all(spec, jobs):
    """jobs: list of (delta, seed, variant, cfg); returns rows in job order."""
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(spec.jobs) as pool:
            futures = [pool.submit(_run_one, spec, *job) for job in jobs]
            return [f.result() for f in futures]
    return [_run_one(spec, *job) for job in jobs]


def summarize(rows):
    """Mean row per (delta, variant), in first-appearance order."""
    groups = {}
    for r in rows:
        groups.setdefault((r["delta"], r["variant"]), []).append(r)
    out = []
    for (delta, variant), rs in groups.items():
        row = {"dataset": rs[0]["dataset"], "delta": delta, "seed": "mean", "variant": variant,
               "epochs": rs[0]["epochs"]}
        for key in ("acc", "nmi", "ari", "wall_seconds"):
            vals = [r[key] for r in rs if r[key] is not None]
            row[key] = sum(vals) / len(vals) if len(vals) == len(rs) else None
        out.append(row)
    return out


def write_results(rows, path):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({
                k: (_fmt(r[k]) if k in ("acc", "nmi", "ari", "wall_seconds") else r[k])
                for k in RESULT_COLUMNS
            })
    return path


def read_results(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["delta"] = float(r["delta"])
        r["seed"] = r["seed"] if r["seed"] == "mean" else int(r["seed"])
        r["epochs"] = int(r["epochs"])
        for k in ("acc", "nmi", "ari", "wall_seconds"):
            r[k] = float(r[k]) if r[k] != "" else None
    return rows


def _all_finite(rows):
    return all(r[k] is None or math.isfinite(r[k]) for r in rows for k in ("acc", "nmi", "ari"))


def _label_count(path):
    """Number of ground-truth classes, used as n_clusters unless overridden."""
    labels = load_dataset(path).labels
    return None if labels is None else int(np.unique(labels).size)


def cmd_simulate(spec):
    complete = load_dataset(spec.dataset)
    written = []
    for delta in spec.deltas:
        for seed in spec.seeds:
            ds = simulate_missing(complete, delta, seed)
            target = spec.out / f"{spec.name}_d{delta:g}_s{seed}"
            try:
                save_dataset(ds, target)
            except OSError as exc:
                raise OSError(f"cannot write {target}: {exc}") from exc
            written.append(target)
    return written


def cmd_train_eval(spec):
    spec.out.mkdir(parents=True, exist_ok=True)
    n_clusters = _label_count(spec.dataset)
    if n_clusters is None:
        warnings.warn(f"{spec.dataset} has no labels.csv; evaluation skipped")
    variant = variant_name(spec.loss, spec.disable)
    jobs = [(d, s, variant, spec.config(s, n_clusters=n_clusters)) for d in spec.deltas for s in spec.seeds]
    rows = _run_all(spec, jobs)
    rows = rows + summarize(rows)
    write_results(rows, spec.out / "results.csv")
    return rows


def cmd_ablate(spec):
    spec.out.mkdir(parents=True, exist_ok=True)
    n_clusters = _label_count(spec.dataset)
    jobs = []
    for d in spec.deltas:
        for name, loss, disable in ABLATIONS:
            for s in spec.seeds:
                jobs.append((d, s, name, spec.config(s, loss=loss, disable=disable, n_clusters=n_clusters)))
    rows = _run_all(spec, jobs)
    rows = rows + summarize(rows)
    write_results(rows, spec.out / "ablation.csv")
    return rows


def cmd_blobs(args):
    ds = make_gaussian_blobs(
        n_samples=args.n_samples, n_views=args.n_views, n_clusters=args.n_clusters,
        dim=args.dim, separation=args.separation, seed=args.seed[0] if args.seed else 0,
    )
    return save_dataset(ds, args.out or Path(os.environ.get("DGIMVCM_OUT", "runs")) / "blobs")


def _parse_overrides(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise SystemExit(f"--config expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="dgimvcm", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_dataset=True):
        sp.add_argument("--dataset", type=Path, required=needs_dataset)
        sp.add_argument("--delta", type=float, action="append", help="missing rate (repeatable)")
        sp.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
        sp.add_argument("--out", type=Path, help="output directory (default $DGIMVCM_OUT or ./runs)")

    sp = sub.add_parser("simulate", help="write masked dataset copies per (delta, seed)")
    common(sp)

    for name, helptext in (("train", "train and evaluate per (delta, seed)"),
                           ("ablate", "component toggles and masked-vs-traditional loss")):
        sp = sub.add_parser(name, help=helptext)
        common(sp)
        sp.add_argument("--loss", choices=LOSS_VARIANTS, default="masked")
        sp.add_argument("--disable", choices=COMPONENTS, action="append", default=[])
        sp.add_argument("--config", action="append", metavar="KEY=VALUE", help="TrainConfig override")
        sp.add_argument("--raw", action="store_true", help="skip min-max feature scaling")
        sp.add_argument("--jobs", type=int, default=1, help="parallel runs")

    sp = sub.add_parser("blobs", help="write the synthetic Gaussian-blob fixture")
    sp.add_argument("--out", type=Path)
    sp.add_argument("--seed", type=int, action="append")
    sp.add_argument("--n-samples", type=int, default=200)
    sp.add_argument("--n-views", type=int, default=3)
    sp.add_argument("--n-clusters", type=int, default=4)
    sp.add_argument("--dim", type=int, default=10)
    sp.add_argument("--separation", type=float, default=5.0)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    if args.command == "blobs":
        print(cmd_blobs(args))
        return 0
    spec = ExperimentSpec(
        dataset=args.dataset,
        deltas=args.delta or [0.0],
        seeds=args.seed or [0],
        loss=getattr(args, "loss", "masked"),
        disable=tuple(getattr(args, "disable", ())),
        overrides=_parse_overrides(getattr(args, "config", None)),
        out=args.out,
        normalize=not getattr(args, "raw", False),
        jobs=getattr(args, "jobs", 1),
    )
    if args.command == "simulate":
        for path in cmd_simulate(spec):
            print(path)
        return 0
    runner = cmd_train_eval if args.command == "train" else cmd_ablate
    try:
        rows = runner(spec)
    except Exception as exc:  # surfaced as a non-zero exit
        log.error("run failed: %s", exc)
        return 1
    for r in rows:
        if r["seed"] == "mean":
            log.info("%s delta=%g %s acc=%s nmi=%s ari=%s", r["dataset"], r["delta"], r["variant"],
                     r["acc"], r["nmi"], r["ari"])
    return 0 if _all_finite(rows) else 1


if __name__ == "__main__":
    sys.exit(main())
