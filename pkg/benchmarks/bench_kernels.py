"""Time the numba kernels against their numpy twins.

Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Each kernel
is called once to trigger compilation before timing; the table reports the
best of ``--repeat`` runs in milliseconds and checks the two paths agree.
"""
import argparse
import time

import numpy as np

from rbfvae import _kernels


def best_of(fn, args, repeat):
    fn(*args)  # warm-up / compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times) * 1e3


def cases(rng):
    x = rng.uniform(size=(416, 16))
    z = rng.normal(size=(52, 16))
    mus = rng.normal(size=(416, 16))
    var = rng.uniform(0.05, 1.0, size=(416, 16))
    a = np.sort(rng.uniform(size=520))
    b = np.sort(rng.uniform(size=10400))
    weekly = rng.uniform(0, 0.8, size=(52, 16))
    profiles = rng.uniform(0, 2, size=(520, 16, 168))
    idx = rng.integers(0, 520, size=52)
    return {
        "sq_dists": (x, x),
        "rbf": (x, x, 3.0),
        "mahal_scan": (z, mus, var),
        "ks_stat": (a, b),
        "disaggregate": (weekly, profiles, idx),
    }


def agree(name, a, b):
    if isinstance(a, tuple):
        return all(agree(name, u, v) for u, v in zip(a, b))
    if isinstance(a, float):
        return a == b
    if a.dtype.kind in "bi":
        return np.array_equal(a, b)
    return np.allclose(a, b, rtol=1e-12, atol=1e-15)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _kernels.HAS_NUMBA:
        print("numba unavailable (or RBFVAE_NO_NUMBA set); nothing to compare")
        return 0
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<14}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  agree")
    for name, inputs in cases(rng).items():
        t_np = best_of(_kernels.NUMPY_KERNELS[name], inputs, args.repeat)
        t_nb = best_of(_kernels.NUMBA_KERNELS[name], inputs, args.repeat)
        ok = agree(name, _kernels.NUMPY_KERNELS[name](*inputs), _kernels.NUMBA_KERNELS[name](*inputs))
        print(f"{name:<14}{t_np:>10.3f}{t_nb:>10.3f}{t_np / t_nb:>8.1f}x  {ok}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
