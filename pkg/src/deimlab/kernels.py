"""Hot numerical kernels, each in a numba and a pure-numpy flavour.

The public names (``advection_points``, ``jacobi_orthogonalize``,
``arakawa``, ``laplacian5``, ``fft_lastaxis``, ``lu_inplace``,
``lu_substitute``) are bound at import time to the
numba implementation when numba is importable and ``DEIMLAB_DISABLE_NUMBA``
is unset (or ``0``), and to the numpy implementation otherwise.  Both flavours
are always importable under their ``_numba``/``_numpy`` suffixed names so the
benchmark and the cross-check tests can call either one directly.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def decorator(func):
            return func

        return decorator


def _env_disabled() -> bool:
    return os.environ.get("DEIMLAB_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = NUMBA_AVAILABLE and not _env_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Burgers advection at selected points
#
# u5[k, :] holds u at offsets -2..+2 around point p[k]; entries that fall
# outside the grid are never read.  Returns N_f = -d(u^2/2)/dx at p[k].
# ---------------------------------------------------------------------------


def _advection_points_numpy(u5, p, n, dx):
    f = 0.5 * u5 * u5
    back = (3.0 * f[:, 2] - 4.0 * f[:, 1] + f[:, 0]) / (2.0 * dx)
    fwd = (-3.0 * f[:, 2] + 4.0 * f[:, 3] - f[:, 4]) / (2.0 * dx)
    use_back = u5[:, 2] >= 0.0
    use_back = np.where(p == 1, False, use_back)
    use_back = np.where(p == n - 2, True, use_back)
    d = np.where(use_back, back, fwd)
    d = np.where((p == 0) | (p == n - 1), 0.0, d)
    return -d


@njit(cache=True)
def _advection_points_numba(u5, p, n, dx):
    out = np.zeros(p.shape[0])
    for k in range(p.shape[0]):
        i = p[k]
        if i == 0 or i == n - 1:
            continue
        f0 = 0.5 * u5[k, 0] * u5[k, 0]
        f1 = 0.5 * u5[k, 1] * u5[k, 1]
        f2 = 0.5 * u5[k, 2] * u5[k, 2]
        f3 = 0.5 * u5[k, 3] * u5[k, 3]
        f4 = 0.5 * u5[k, 4] * u5[k, 4]
        if i == 1:
            back = False
        elif i == n - 2:
            back = True
        else:
            back = u5[k, 2] >= 0.0
        if back:
            out[k] = -(3.0 * f2 - 4.0 * f1 + f0) / (2.0 * dx)
        else:
            out[k] = -(-3.0 * f2 + 4.0 * f3 - f4) / (2.0 * dx)
    return out


# ---------------------------------------------------------------------------
# One-sided (Hestenes) Jacobi: orthogonalise the rows of W in place,
# applying the same rotations to the rows of Q.
# ---------------------------------------------------------------------------


def _jacobi_orthogonalize_numpy(W, Q, tol, max_sweeps):
    k = W.shape[0]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(k - 1):
            wi = W[i]
            for j in range(i + 1, k):
                wj = W[j]
                alpha = wi @ wi
                beta = wj @ wj
                gamma = wi @ wj
                if alpha == 0.0 or beta == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                W[i], W[j] = c * wi - s * wj, s * wi + c * wj
                wi = W[i]
                qi = Q[i].copy()
                Q[i] = c * qi - s * Q[j]
                Q[j] = s * qi + c * Q[j]
        if not rotated:
            return sweep
    return max_sweeps


@njit(cache=True)
def _jacobi_orthogonalize_numba(W, Q, tol, max_sweeps):
    k, m = W.shape
    q = Q.shape[1]
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(k - 1):
            for j in range(i + 1, k):
                alpha = 0.0
                beta = 0.0
                gamma = 0.0
                for c_ in range(m):
                    a = W[i, c_]
                    b = W[j, c_]
                    alpha += a * a
                    beta += b * b
                    gamma += a * b
                if alpha == 0.0 or beta == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                sign = 1.0 if zeta >= 0.0 else -1.0
                t = sign / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for c_ in range(m):
                    a = W[i, c_]
                    b = W[j, c_]
                    W[i, c_] = c * a - s * b
                    W[j, c_] = s * a + c * b
                for c_ in range(q):
                    a = Q[i, c_]
                    b = Q[j, c_]
                    Q[i, c_] = c * a - s * b
                    Q[j, c_] = s * a + c * b
        if not rotated:
            return sweep
    return max_sweeps


# ---------------------------------------------------------------------------
# Arakawa Jacobian J(w, p) = w_x p_y - w_y p_x on a periodic grid.
# Arrays are indexed [y, x]; axis 1 is x.
# ---------------------------------------------------------------------------


def _arakawa_numpy(w, p, dx, dy):
    def s(f, jy, ix):
        return np.roll(np.roll(f, -jy, axis=0), -ix, axis=1)

    wE, wW, wN, wS = s(w, 0, 1), s(w, 0, -1), s(w, 1, 0), s(w, -1, 0)
    wNE, wSW, wNW, wSE = s(w, 1, 1), s(w, -1, -1), s(w, 1, -1), s(w, -1, 1)
    pE, pW, pN, pS = s(p, 0, 1), s(p, 0, -1), s(p, 1, 0), s(p, -1, 0)
    pNE, pSW, pNW, pSE = s(p, 1, 1), s(p, -1, -1), s(p, 1, -1), s(p, -1, 1)

    j1 = (wE - wW) * (pN - pS) - (wN - wS) * (pE - pW)
    j2 = wE * (pNE - pSE) - wW * (pNW - pSW) - wN * (pNE - pNW) + wS * (pSE - pSW)
    j3 = wNE * (pN - pE) - wSW * (pW - pS) - wNW * (pN - pW) + wSE * (pE - pS)
    return (j1 + j2 + j3) / (12.0 * dx * dy)


@njit(cache=True)
def _arakawa_numba(w, p, dx, dy):
    ny, nx = w.shape
    out = np.empty((ny, nx))
    scale = 1.0 / (12.0 * dx * dy)
    for j in range(ny):
        jn = (j + 1) % ny
        js = (j - 1) % ny
        for i in range(nx):
            ie = (i + 1) % nx
            iw = (i - 1) % nx
            wE = w[j, ie]
            wW = w[j, iw]
            wN = w[jn, i]
            wS = w[js, i]
            pE = p[j, ie]
            pW = p[j, iw]
            pN = p[jn, i]
            pS = p[js, i]
            pNE = p[jn, ie]
            pSW = p[js, iw]
            pNW = p[jn, iw]
            pSE = p[js, ie]
            j1 = (wE - wW) * (pN - pS) - (wN - wS) * (pE - pW)
            j2 = wE * (pNE - pSE) - wW * (pNW - pSW) - wN * (pNE - pNW) + wS * (pSE - pSW)
            j3 = (
                w[jn, ie] * (pN - pE)
                - w[js, iw] * (pW - pS)
                - w[jn, iw] * (pN - pW)
                + w[js, ie] * (pE - pS)
            )
            out[j, i] = (j1 + j2 + j3) * scale
    return out


# ---------------------------------------------------------------------------
# 5-point periodic Laplacian
# ---------------------------------------------------------------------------


def _laplacian5_numpy(w, dx, dy):
    return (np.roll(w, 1, axis=1) - 2.0 * w + np.roll(w, -1, axis=1)) / (dx * dx) + (
        np.roll(w, 1, axis=0) - 2.0 * w + np.roll(w, -1, axis=0)
    ) / (dy * dy)


@njit(cache=True)
def _laplacian5_numba(w, dx, dy):
    ny, nx = w.shape
    out = np.empty((ny, nx))
    ax = 1.0 / (dx * dx)
    ay = 1.0 / (dy * dy)
    for j in range(ny):
        jn = (j + 1) % ny
        js = (j - 1) % ny
        for i in range(nx):
            c = w[j, i]
            out[j, i] = (w[j, (i - 1) % nx] - 2.0 * c + w[j, (i + 1) % nx]) * ax + (
                w[js, i] - 2.0 * c + w[jn, i]
            ) * ay
    return out


# ---------------------------------------------------------------------------
# Radix-2 decimation-in-time FFT along the last axis of a 2-D complex array.
# ---------------------------------------------------------------------------


def _bit_reverse_permutation(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_lastaxis_numpy(x, inverse):
    batch, n = x.shape
    sign = 1.0 if inverse else -1.0
    out = x[:, _bit_reverse_permutation(n)].copy()
    h = 1
    while h < n:
        tw = np.exp(sign * 1j * np.pi * np.arange(h) / h)
        blocks = out.reshape(batch, n // (2 * h), 2, h)
        a = blocks[:, :, 0, :].copy()
        b = blocks[:, :, 1, :] * tw
        blocks[:, :, 0, :] = a + b
        blocks[:, :, 1, :] = a - b
        h *= 2
    if inverse:
        out /= n
    return out


@njit(cache=True)
def _fft_lastaxis_numba(x, inverse):
    batch, n = x.shape
    bits = 0
    while (1 << bits) < n:
        bits += 1
    out = np.empty((batch, n), dtype=np.complex128)
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        for b in range(batch):
            out[b, r] = x[b, i]
    sign = 1.0 if inverse else -1.0
    h = 1
    while h < n:
        tw = np.empty(h, dtype=np.complex128)
        for k in range(h):
            tw[k] = np.exp(sign * 1j * np.pi * k / h)
        for b in range(batch):
            for start in range(0, n, 2 * h):
                for k in range(h):
                    a = out[b, start + k]
                    t = out[b, start + k + h] * tw[k]
                    out[b, start + k] = a + t
                    out[b, start + k + h] = a - t
        h *= 2
    if inverse:
        for b in range(batch):
            for i in range(n):
                out[b, i] = out[b, i] / n
    return out


# ---------------------------------------------------------------------------
# Partial-pivot LU and triangular solves
#
# lu_inplace overwrites LU with unit-lower L and U factors and fills perm;
# it returns -1 on success or the elimination step whose best pivot was
# <= thresh.  lu_substitute solves in place for a 2-D right-hand side,
# ``transposed`` selecting M^T X = B.
# ---------------------------------------------------------------------------


def _lu_inplace_numpy(LU, perm, thresh):
    n = LU.shape[0]
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if abs(LU[p, k]) <= thresh:
            return k
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        LU[k + 1 :, k] /= LU[k, k]
        LU[k + 1 :, k + 1 :] -= np.outer(LU[k + 1 :, k], LU[k, k + 1 :])
    return -1


@njit(cache=True)
def _lu_inplace_numba(LU, perm, thresh):
    n = LU.shape[0]
    for k in range(n):
        p = k
        best = abs(LU[k, k])
        for i in range(k + 1, n):
            v = abs(LU[i, k])
            if v > best:
                best = v
                p = i
        if best <= thresh:
            return k
        if p != k:
            for j in range(n):
                t = LU[k, j]
                LU[k, j] = LU[p, j]
                LU[p, j] = t
            t2 = perm[k]
            perm[k] = perm[p]
            perm[p] = t2
        piv = LU[k, k]
        for i in range(k + 1, n):
            LU[i, k] /= piv
            f = LU[i, k]
            if f != 0.0:
                for j in range(k + 1, n):
                    LU[i, j] -= f * LU[k, j]
    return -1


def _lu_substitute_numpy(LU, perm, B, transposed):
    n = LU.shape[0]
    if not transposed:
        X = B[perm].copy()
        for i in range(n):
            X[i] -= LU[i, :i] @ X[:i]
        for i in range(n - 1, -1, -1):
            X[i] = (X[i] - LU[i, i + 1 :] @ X[i + 1 :]) / LU[i, i]
        return X
    # M[perm] = L U  =>  M^T = U^T L^T P
    Y = B.copy()
    for i in range(n):
        Y[i] = (Y[i] - LU[:i, i] @ Y[:i]) / LU[i, i]
    for i in range(n - 1, -1, -1):
        Y[i] -= LU[i + 1 :, i] @ Y[i + 1 :]
    X = np.empty_like(Y)
    X[perm] = Y
    return X


@njit(cache=True)
def _lu_substitute_numba(LU, perm, B, transposed):
    n, r = B.shape
    if not transposed:
        X = np.empty_like(B)
        for i in range(n):
            for c in range(r):
                X[i, c] = B[perm[i], c]
        for i in range(n):
            for j in range(i):
                f = LU[i, j]
                for c in range(r):
                    X[i, c] -= f * X[j, c]
        for i in range(n - 1, -1, -1):
            for j in range(i + 1, n):
                f = LU[i, j]
                for c in range(r):
                    X[i, c] -= f * X[j, c]
            for c in range(r):
                X[i, c] /= LU[i, i]
        return X
    Y = B.copy()
    for i in range(n):
        for j in range(i):
            f = LU[j, i]
            for c in range(r):
                Y[i, c] -= f * Y[j, c]
        for c in range(r):
            Y[i, c] /= LU[i, i]
    for i in range(n - 1, -1, -1):
        for j in range(i + 1, n):
            f = LU[j, i]
            for c in range(r):
                Y[i, c] -= f * Y[j, c]
    X = np.empty_like(Y)
    for i in range(n):
        for c in range(r):
            X[perm[i], c] = Y[i, c]
    return X


if USE_NUMBA:
    advection_points = _advection_points_numba
    jacobi_orthogonalize = _jacobi_orthogonalize_numba
    arakawa = _arakawa_numba
    laplacian5 = _laplacian5_numba
    fft_lastaxis = _fft_lastaxis_numba
    lu_inplace = _lu_inplace_numba
    lu_substitute = _lu_substitute_numba
else:
    advection_points = _advection_points_numpy
    jacobi_orthogonalize = _jacobi_orthogonalize_numpy
    arakawa = _arakawa_numpy
    laplacian5 = _laplacian5_numpy
    fft_lastaxis = _fft_lastaxis_numpy
    lu_inplace = _lu_inplace_numpy
    lu_substitute = _lu_substitute_numpy
