"""Compare the numba and numpy kernels on the two hot loops.

    python3 benchmarks/bench_accel.py [--n 200000] [--m 500] [--d 10] [--k 10] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from cskl import _accel


def bench(fn, args, repeat):
    fn(*args)  # warm-up (and JIT compile)
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--m", type=int, default=500)
    ap.add_argument("--d", type=int, default=10)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()

    rng = np.random.default_rng(0)
    X = rng.standard_normal((a.n, a.d))
    W = rng.standard_normal((a.m, a.d))
    C = rng.standard_normal((a.k, a.d))

    rows = [
        ("fourier_chunk_sums", _accel.fourier_chunk_sums_numpy, _accel.fourier_chunk_sums_numba, (X, W)),
        ("nearest_centroids", _accel.nearest_centroids_numpy, _accel.nearest_centroids_numba, (X, C)),
    ]
    print(f"n={a.n} m={a.m} d={a.d} k={a.k}  numba available: {_accel.HAVE_NUMBA}")
    print(f"{'kernel':<20} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max |diff|':>11}")
    for name, f_np, f_nb, args in rows:
        t_np = bench(f_np, args, a.repeat)
        t_nb = bench(f_nb, args, a.repeat)
        diff = max(float(np.max(np.abs(np.asarray(u, dtype=float) - np.asarray(v, dtype=float))))
                   for u, v in zip(f_np(*args), f_nb(*args)))
        print(f"{name:<20} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.2f} {diff:>11.2e}")


if __name__ == "__main__":
    main()
