"""Compare the numba and numpy kernel backends on the two hot loops.

Usage: python benchmarks/bench_kernels.py [--n 10000] [--nq 200] [--d 784]
       [--k 75] [--repeats 5]
"""

import argparse
import time

import numpy as np

from knnadv.backend import get_kernels


def _best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=10000)
    ap.add_argument("--nq", type=int, default=200)
    ap.add_argument("--d", type=int, default=784)
    ap.add_argument("--k", type=int, default=75)
    ap.add_argument("--m", type=int, default=75)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.random((args.n, args.d))
    Q = rng.random((args.nq, args.d))
    cand = rng.random((args.m, args.d))
    z = rng.random(args.d)
    w = np.ones(args.m)

    backends = {}
    backends["numpy"] = get_kernels("numpy")
    try:
        backends["numba"] = get_kernels("numba")
    except ImportError:
        print("numba unavailable; benchmarking numpy only")

    print(f"topk_sqdist: {args.nq} queries x {args.n} points, "
          f"d={args.d}, k={args.k}")
    results = {}
    for name, kern in backends.items():
        kern.topk_sqdist(Q[:2], X, args.k)  # absorb jit compilation
        t = _best_of(lambda: kern.topk_sqdist(Q, X, args.k), args.repeats)
        results[name] = t
        print(f"  {name:6s} {t * 1e3:9.1f} ms")
    if len(results) == 2:
        print(f"  speedup {results['numpy'] / results['numba']:.2f}x")

    print(f"soft_vote: m={args.m}, d={args.d}, 1000 calls")
    results = {}
    for name, kern in backends.items():
        kern.soft_vote(cand, z, w, 0.5, 4.0)

        def loop(kern=kern):
            for _ in range(1000):
                kern.soft_vote(cand, z, w, 0.5, 4.0)

        t = _best_of(loop, args.repeats)
        results[name] = t
        print(f"  {name:6s} {t * 1e3:9.1f} ms")
    if len(results) == 2:
        print(f"  speedup {results['numpy'] / results['numba']:.2f}x")

    # the two backends must agree before their timings mean anything
    i1, d1 = backends["numpy"].topk_sqdist(Q[:20], X, args.k)
    for name, kern in backends.items():
        i2, d2 = kern.topk_sqdist(Q[:20], X, args.k)
        assert np.array_equal(i1, i2), f"{name} disagrees on indices"
    print("agreement check: ok")


if __name__ == "__main__":
    main()
