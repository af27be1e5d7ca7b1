"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 200 500 1000] [--m 20] [--repeat 3]
"""
import argparse
import time

import numpy as np

from divine import _kernels_py

try:
    from divine import _kernels
except ImportError:
    _kernels = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench(n, m, repeat, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    K = np.exp(-_kernels_py.sq_dists(X) / 2.0)
    colsum = K.sum(axis=0)
    scores = rng.normal(size=n)
    allowed = np.ones(n, dtype=np.uint8)
    rows = []
    for name, mod in (("python", _kernels_py), ("cython", _kernels)):
        if mod is None:
            continue
        row = {"backend": name, "n": n, "sq_dists": _best(lambda: mod.sq_dists(X), repeat)}
        for label, kind in (("sr", mod.SR), ("fl", mod.FL), ("mmd", mod.MMD)):
            row[f"greedy_{label}"] = _best(
                lambda: mod.greedy(scores, K, 0.5, m, kind, colsum, 0, allowed), repeat)
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 500, 1000, 2000])
    ap.add_argument("--m", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cols = ["sq_dists", "greedy_sr", "greedy_fl", "greedy_mmd"]
    print(f"{'backend':8s} {'n':>6s} " + " ".join(f"{c:>12s}" for c in cols) + "   (ms, best of repeats)")
    for n in args.sizes:
        rows = bench(n, args.m, args.repeat)
        for r in rows:
            print(f"{r['backend']:8s} {n:6d} " + " ".join(f"{1e3 * r[c]:12.2f}" for c in cols))
        if len(rows) == 2:
            print(f"{'speedup':8s} {n:6d} " + " ".join(f"{rows[0][c] / rows[1][c]:11.1f}x" for c in cols))
    if _kernels is None:
        print("compiled kernels not built; only the fallback was timed")


if __name__ == "__main__":
    main()
