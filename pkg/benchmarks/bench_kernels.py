"""Time the numpy and numba implementations of each hot kernel.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run once untimed (numba compiles on first call) and then
``repeat`` times; the best wall time is reported along with the largest
absolute difference between the two backends' outputs.
"""
import argparse
import time

import numpy as np

from fdaudit.kernels import IMPLEMENTATIONS


def lasso_case(rng, n=20000, p=20):
    X = rng.standard_normal((n, p))
    X -= X.mean(axis=0)
    y = X[:, :3] @ np.array([1.0, -0.5, 0.25]) + rng.standard_normal(n)
    y -= y.mean()
    v = np.ones(n)
    pen = np.full(p, 0.05 * n)
    return (X, y, v, pen, np.zeros(p), 1e-8, 100_000, 0)


def mlp_case(rng, n=5000, q=1, h=10):
    X = rng.standard_normal((n, q))
    y = np.sin(X[:, 0])
    v = np.ones(n)
    return (X, y, v, rng.standard_normal((q, h)) / np.sqrt(q), rng.standard_normal(h),
            rng.standard_normal(h) / np.sqrt(h), 0.0, 1.0, 1000)


def cluster_case(rng, n=200_000, k=5, c=1000):
    return (rng.standard_normal((n, k)), rng.integers(0, c, n).astype(np.int64), c)


CASES = {"lasso_cd": lasso_case, "mlp_train": mlp_case, "cluster_sums": cluster_case}


def best_time(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def first_array(out):
    return np.asarray(out[0] if isinstance(out, tuple) else out)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [b for b in ("numpy", "numba") if b in IMPLEMENTATIONS]
    if "numba" not in backends:
        print("numba unavailable or disabled; timing numpy only")
    print(f"{'kernel':<14}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}{'max diff':>12}")
    for name, make in CASES.items():
        case = make(np.random.default_rng(0))
        res = {b: best_time(IMPLEMENTATIONS[b][name], case, args.repeat) for b in backends}
        row = f"{name:<14}" + "".join(f"{res[b][0] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            diff = np.max(np.abs(first_array(res["numpy"][1]) - first_array(res["numba"][1])))
            row += f"{res['numpy'][0] / res['numba'][0]:>9.1f}x{diff:>12.2e}"
        print(row)


if __name__ == "__main__":
    main()
