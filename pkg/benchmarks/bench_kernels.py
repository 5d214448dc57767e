"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 128]

Each kernel is called once untimed (so numba compilation is excluded), then
the best of ``--repeat`` wall-clock timings is reported for both flavours
together with the maximum absolute difference between their outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from deimlab import kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    n = 4 * size
    p = rng.integers(0, n, 64)
    u5 = rng.standard_normal((64, 5))
    yield "advection_points", lambda f: f(u5, p, n, 1.0 / (n - 1))

    W0 = rng.standard_normal((24, 4 * size))

    def jacobi(f):
        W = W0.copy()
        Q = np.eye(24)
        f(W, Q, 1e-15, 60)
        return np.abs(np.sort(np.linalg.norm(W, axis=1)))

    yield "jacobi_orthogonalize", jacobi

    w = rng.standard_normal((size, size))
    s = rng.standard_normal((size, size))
    h = 2 * np.pi / size
    yield "arakawa", lambda f: f(w, s, h, h)
    yield "laplacian5", lambda f: f(w, h, h)

    z = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))).astype(np.complex128)
    yield "fft_lastaxis", lambda f: f(z, False)

    A = rng.standard_normal((48, 48)) + 48 * np.eye(48)

    def lu(f):
        LU = A.copy()
        perm = np.arange(48, dtype=np.int64)
        f(LU, perm, 1e-14)
        return LU

    yield "lu_inplace", lu

    LU0 = A.copy()
    perm0 = np.arange(48, dtype=np.int64)
    kernels._lu_inplace_numpy(LU0, perm0, 1e-14)
    B = rng.standard_normal((48, 24))
    yield "lu_substitute", lambda f: f(LU0, perm0, B, False)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=128, help="grid edge (power of two)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not kernels.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy flavour can be timed")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<22}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max |diff|':>12}")
    for name, call in cases(args.size, rng):
        f_np = getattr(kernels, f"_{name}_numpy")
        f_nb = getattr(kernels, f"_{name}_numba")
        t_np = best_of(lambda: call(f_np), args.repeat)
        if kernels.NUMBA_AVAILABLE:
            t_nb = best_of(lambda: call(f_nb), args.repeat)
            diff = float(np.max(np.abs(np.asarray(call(f_np)) - np.asarray(call(f_nb)))))
            print(f"{name:<22}{1e3 * t_np:>12.3f}{1e3 * t_nb:>12.3f}{t_np / t_nb:>10.1f}{diff:>12.2e}")
        else:
            print(f"{name:<22}{1e3 * t_np:>12.3f}{'-':>12}{'-':>10}{'-':>12}")


if __name__ == "__main__":
    main()
