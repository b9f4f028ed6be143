"""Time the compiled kernels against the numpy fallback on pipeline-sized inputs.

    python benchmarks/bench_kernels.py [--repeat 3]
"""
import argparse
import time

import numpy as np

from cgmevents import cluster, impute, kernels
from cgmevents.predict import linear


def cases(rng):
    n = 20000
    lat = 40 + rng.normal(0, 2e-3, n)
    lon = -83 + rng.normal(0, 2e-3, n)
    la, lo = np.radians(lat), np.radians(lon)
    idx = cluster.cell_index(la, lo, 30.0)
    yield "dbscan 20k fixes", lambda b: b.dbscan_labels(la, lo, 30.0, 20, *idx)

    t = np.sort(rng.integers(0, 30 * 86400, 20000)).astype(np.int64)
    yield "kde 20k fixes x 30 days", lambda b: b.kde_density(t, 0, 15, 172800, 7200.0, 7200.0 * np.sqrt(700))

    k = 20
    codes = rng.integers(0, 7, 57600)
    mask = rng.random(57600) < 0.7
    pad = impute._padded(codes, mask, k)
    sl = np.flatnonzero(mask)
    W = rng.normal(size=(7, 7, 2 * k + 1))
    R = np.ascontiguousarray(rng.normal(size=(sl.size, 7)))
    yield "window scores 40k slots", lambda b: b.window_scores(pad, sl, W, k)
    yield "window grad 40k slots", lambda b: b.window_grad(pad, sl, R, 7, 2 * k + 1)

    X = rng.normal(size=(5000, 12))
    y = X @ rng.normal(size=12) + rng.normal(size=5000)
    G, q, yy = linear._gram(X, y)
    l1 = np.full(12, 50.0)
    yield "lasso CD m=12", lambda b: b.cd_solve(G, q, yy, l1, 0.0, 0.0, np.zeros(12), 1e-12, 1e-14, 100000)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the fallback is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}" + "".join(f"{b:>12}" for b in backends) + ("    speedup" if len(backends) > 1 else ""))
    for name, fn in cases(rng):
        t = {b: best_of(lambda: fn(kernels.get_backend(b)), args.repeat) for b in backends}
        row = f"{name:<26}" + "".join(f"{t[b]:>11.4f}s" for b in backends)
        if len(backends) > 1:
            row += f"  {t['python'] / t['cython']:>8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
