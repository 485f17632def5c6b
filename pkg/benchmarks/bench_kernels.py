"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --sizes 200 1000 --repeat 5

Also times one full training epoch per backend, which needs a subprocess
because the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from dgimvcm import _kernels as K

EPOCH_SNIPPET = """
import time
from dgimvcm import TrainConfig, make_gaussian_blobs, normalize_views, simulate_missing, train
ds = normalize_views(simulate_missing(make_gaussian_blobs(n_samples={n}), 0.5, 0))
train(ds, TrainConfig(n_clusters=4, epochs=1))  # warm-up / jit compile
t0 = time.perf_counter()
train(ds, TrainConfig(n_clusters=4, epochs={epochs}))
print((time.perf_counter() - t0) / {epochs})
"""


def best_of(fn, repeat):
    fn()  # compile / warm caches
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(n, rng):
    X = rng.standard_normal((n, 64))
    C = rng.standard_normal((10, 64))
    W = np.exp(-K.np_sqdist(X) / 64.0)
    A = K.np_topk_rows(W, 10)
    E = rng.standard_normal((n, n))
    return {
        "sqdist": (lambda: K.nb_sqdist(X), lambda: K.np_sqdist(X)),
        "topk_rows": (lambda: K.nb_topk_rows(W, 10), lambda: K.np_topk_rows(W, 10)),
        "masked_softmax": (lambda: K.nb_masked_softmax(E, A), lambda: K.np_masked_softmax(E, A)),
        "assign": (lambda: K.nb_assign(X, C), lambda: K.np_assign(X, C)),
    }


def epoch_time(n, epochs, disable_numba):
    env = dict(os.environ, DGIMVCM_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run([sys.executable, "-c", EPOCH_SNIPPET.format(n=n, epochs=epochs)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[200, 1000])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--epochs", type=int, default=10, help="epochs per end-to-end timing (0 skips it)")
    args = p.parse_args(argv)
    if not K.HAS_NUMBA:
        sys.exit("numba is not installed; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'N':>6}{'numba ms':>11}{'numpy ms':>11}{'speedup':>9}")
    for n in args.sizes:
        for name, (nb, npy) in kernel_cases(n, rng).items():
            a, b = best_of(nb, args.repeat), best_of(npy, args.repeat)
            print(f"{name:<16}{n:>6}{1e3 * a:>11.3f}{1e3 * b:>11.3f}{b / a:>9.2f}")
    if args.epochs:
        for n in args.sizes:
            a = epoch_time(n, args.epochs, False)
            b = epoch_time(n, args.epochs, True)
            print(f"{'train epoch':<16}{n:>6}{1e3 * a:>11.1f}{1e3 * b:>11.1f}{b / a:>9.2f}")


if __name__ == "__main__":
    main()
