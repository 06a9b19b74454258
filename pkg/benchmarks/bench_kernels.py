"""Benchmark the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py [--n 500 2000 8000]
"""
import argparse
import timeit

import numpy as np

import ouspec._kernels_py as kpy

try:
    import ouspec._kernels as kc
except ImportError:
    kc = None


def time_call(fn, repeat=5):
    best = min(timeit.repeat(fn, number=1, repeat=repeat))
    return best


def bench(n, panels=4096):
    rng = np.random.default_rng(7)
    x = rng.gamma(2.0, 1.0, n) * 2.1
    xw = x.copy()
    ds = (1.0 / 0.5) / panels
    m = panels + 1
    C = np.ascontiguousarray(
        np.exp(-1j * np.outer(np.arange(m) * ds, [1.5, 2.0, 2.5])) * (ds / np.pi)
    )
    rows = []
    for name, mod in (("compiled", kc), ("python", kpy)):
        if mod is None:
            rows.append((name, float("nan"), float("nan")))
            continue
        t_ecf = time_call(lambda: mod.ecf_grid(x, xw, m, ds))
        t_kn = time_call(lambda: mod.kn_dot(x, ds, C))
        rows.append((name, t_ecf, t_kn))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, nargs="+", default=[500, 2000, 8000])
    parser.add_argument("--panels", type=int, default=4096)
    args = parser.parse_args()

    if kc is not None:
        rng = np.random.default_rng(3)
        x = rng.gamma(2.0, 1.0, 300)
        ds = 0.01
        m = 2049
        C = np.ascontiguousarray(np.exp(-1j * np.outer(np.arange(m) * ds, [1.0, 2.0])) * 1e-3)
        p1, d1 = kc.ecf_grid(x, x, m, ds)
        p2, d2 = kpy.ecf_grid(x, x, m, ds)
        w1 = kc.kn_dot(x, ds, C)
        w2 = kpy.kn_dot(x, ds, C)
        print(f"agreement  ecf_grid: {np.max(np.abs(p1 - p2)):.2e} / "
              f"{np.max(np.abs(d1 - d2)):.2e}   kn_dot: {np.max(np.abs(w1 - w2)):.2e}")
    else:
        print("compiled extension not available; benchmarking the fallback only")

    print(f"{'n':>6s} {'backend':>9s} {'ecf_grid':>12s} {'kn_dot':>12s}")
    for n in args.n:
        for name, t_ecf, t_kn in bench(n, args.panels):
            print(f"{n:6d} {name:>9s} {t_ecf * 1e3:10.1f}ms {t_kn * 1e3:10.1f}ms")


if __name__ == "__main__":
    main()
