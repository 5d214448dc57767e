import os
import subprocess
import sys

import numpy as np
import pytest

from deimlab import kernels

needs_numba = pytest.mark.skipif(not kernels.NUMBA_AVAILABLE, reason="numba not installed")


def kernel_calls(rng, size=16):
    """One representative call per kernel; each returns the array to compare."""
    n = 4 * size
    p = rng.integers(2, n - 2, 20)
    u5 = rng.standard_normal((20, 5))
    yield "advection_points", lambda f: f(u5, p, n, 1.0 / (n - 1))

    W0 = rng.standard_normal((6, 10))

    def jacobi(f):
        W = W0.copy()
        Q = np.eye(6)
        f(W, Q, 1e-15, 60)
        # rotation order may differ, so compare the converged row norms (the singular values)
        return np.sort(np.linalg.norm(W, axis=1))

    yield "jacobi_orthogonalize", jacobi

    w = rng.standard_normal((size, size))
    s = rng.standard_normal((size, size))
    h = 2 * np.pi / size
    yield "arakawa", lambda f: f(w, s, h, h)
    yield "laplacian5", lambda f: f(w, h, h)

    z = rng.standard_normal((4, size)) + 1j * rng.standard_normal((4, size))
    yield "fft_lastaxis", lambda f: f(z.copy(), False)
    yield "fft_lastaxis_inverse", lambda f: f(z.copy(), True)

    A = rng.standard_normal((12, 12))

    def lu(f):
        LU = A.copy()
        perm = np.arange(12, dtype=np.int64)
        f(LU, perm, 1e-14)
        return np.concatenate([LU.ravel(), perm])

    yield "lu_inplace", lu

    LU0 = A.copy()
    perm0 = np.arange(12, dtype=np.int64)
    kernels._lu_inplace_numpy(LU0, perm0, 1e-14)
    B = rng.standard_normal((12, 3))
    yield "lu_substitute", lambda f: f(LU0, perm0, B.copy(), False)
    yield "lu_substitute_T", lambda f: f(LU0, perm0, B.copy(), True)


CALLS = [name for name, _ in kernel_calls(np.random.default_rng(0))]


@needs_numba
@pytest.mark.parametrize("case", CALLS)
def test_flavours_agree(case):
    call = dict(kernel_calls(np.random.default_rng(11)))[case]
    base = case.replace("_inverse", "").replace("_T", "")
    a = np.asarray(call(getattr(kernels, f"_{base}_numpy")))
    b = np.asarray(call(getattr(kernels, f"_{base}_numba")))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_fft_flavour_against_numpy(backend, rng):
    z = rng.standard_normal((3, 32)) + 1j * rng.standard_normal((3, 32))
    np.testing.assert_allclose(kernels.fft_lastaxis(z.copy(), False), np.fft.fft(z, axis=-1), atol=1e-12)


def test_lu_solves_system(backend, rng):
    A = rng.standard_normal((10, 10)) + 5 * np.eye(10)
    LU = A.copy()
    perm = np.arange(10, dtype=np.int64)
    kernels.lu_inplace(LU, perm, 1e-14)
    b = rng.standard_normal((10, 2))
    np.testing.assert_allclose(A @ kernels.lu_substitute(LU, perm, b.copy(), False), b, atol=1e-12)
    np.testing.assert_allclose(A.T @ kernels.lu_substitute(LU, perm, b.copy(), True), b, atol=1e-12)


def test_public_names_are_bound_to_one_flavour():
    for name in ("advection_points", "jacobi_orthogonalize", "arakawa", "laplacian5", "fft_lastaxis", "lu_inplace", "lu_substitute"):
        assert getattr(kernels, name) is getattr(kernels, f"_{name}_{kernels.BACKEND}")


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba" if kernels.NUMBA_AVAILABLE else "numpy")])
def test_environment_flag_selects_backend(flag, expected):
    env = dict(os.environ, DEIMLAB_DISABLE_NUMBA=flag)
    out = subprocess.run(
        [sys.executable, "-c", "from deimlab import kernels; print(kernels.BACKEND)"],
        env=env,
        capture_output=True,
        text=True,
        check=True,
    )
    assert out.stdout.strip() == expected
