"""Vorticity-streamfunction solver on the periodic square [0, 2pi]^2.

    w_t = -J(w, psi) + (1/Re) lap(w),    lap(psi) = -w

Fields are stored as ``(Ny, Nx)`` arrays indexed ``[y, x]``. The Poisson
problem is solved spectrally with the radix-2 FFT from :mod:`deimlab.kernels`;
the Jacobian uses Arakawa's conservative 9-point stencil and the viscous
term the 5-point Laplacian (a spectral Laplacian is available as well).
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InputError, ParameterError
from .integrate import integrate
from .storage import SnapshotMatrix

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Grid2D:
    nx: int = 128
    ny: int = 128

    def __post_init__(self):
        for name, v in (("nx", self.nx), ("ny", self.ny)):
            if v < 16 or v & (v - 1):
                raise ParameterError(f"{name} must be a power of two >= 16, got {v}")

    @property
    def dx(self) -> float:
        return TWO_PI / self.nx

    @property
    def dy(self) -> float:
        return TWO_PI / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """``(X, Y)`` coordinate arrays of shape ``(ny, nx)``."""
        return np.meshgrid(self.x, self.y)

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumbers ``(KX, KY)`` laid out like the FFT output."""
        kx = np.fft.fftfreq(self.nx, 1.0 / self.nx)
        ky = np.fft.fftfreq(self.ny, 1.0 / self.ny)
        return np.meshgrid(kx, ky)


@dataclass
class FlowField:
    omega: np.ndarray
    psi: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class Vortex:
    x: float
    y: float
    amplitude: float = 1.0
    rho: float = np.pi  # Gaussian sharpness: A exp(-rho r^2)

    def __post_init__(self):
        if not self.rho > 0:
            raise ParameterError(f"vortex sharpness must be positive, got {self.rho}")
        if not (0.0 <= self.x <= TWO_PI and 0.0 <= self.y <= TWO_PI):
            raise ParameterError(f"vortex centre ({self.x}, {self.y}) outside the domain")


@dataclass(frozen=True)
class VortexInit:
    tag: str
    vortices: tuple = ()


INIT_TAGS = ("horizontal", "vertical", "asymmetric", "close-horizontal")


def init_config(tag: str, amplitude: float = 1.0, rho: float = np.pi, weak_ratio: float = 0.8) -> VortexInit:
    """Two-vortex layouts used for the merger experiments."""
    pi = np.pi
    if tag == "horizontal":
        centres, amps = [(3 * pi / 4, pi), (5 * pi / 4, pi)], [1.0, 1.0]
    elif tag == "vertical":
        centres, amps = [(pi, 3 * pi / 4), (pi, 5 * pi / 4)], [1.0, 1.0]
    elif tag == "asymmetric":
        centres, amps = [(3 * pi / 4, pi), (5 * pi / 4, pi)], [1.0, weak_ratio]
    elif tag == "close-horizontal":
        centres, amps = [(7 * pi / 8, pi), (9 * pi / 8, pi)], [1.0, 1.0]
    else:
        raise ParameterError(f"unknown initial configuration '{tag}'; choose from {INIT_TAGS}")
    return VortexInit(tag, tuple(Vortex(x, y, amplitude * a, rho) for (x, y), a in zip(centres, amps)))


def make_initial(init, grid: Grid2D) -> FlowField:
    """Sum of Gaussian vortices, mean-subtracted, with its streamfunction."""
    if isinstance(init, str):
        init = init_config(init)
    X, Y = grid.mesh()
    omega = np.zeros(grid.shape)
    for v in init.vortices:
        omega += v.amplitude * np.exp(-v.rho * ((X - v.x) ** 2 + (Y - v.y) ** 2))
    omega -= omega.mean()
    return FlowField(omega=omega, psi=poisson_solve(omega, grid), t=0.0)


# ---------------------------------------------------------------------------
# spectral tools
# ---------------------------------------------------------------------------


def fft2(f) -> np.ndarray:
    """2-D DFT of an ``(ny, nx)`` array (numpy's sign and scaling convention)."""
    a = kernels.fft_lastaxis(np.ascontiguousarray(f, dtype=np.complex128), False)
    return kernels.fft_lastaxis(np.ascontiguousarray(a.T), False).T


def ifft2(F) -> np.ndarray:
    a = kernels.fft_lastaxis(np.ascontiguousarray(F, dtype=np.complex128), True)
    return kernels.fft_lastaxis(np.ascontiguousarray(a.T), True).T


def _k2(grid: Grid2D) -> np.ndarray:
    KX, KY = grid.wavenumbers()
    return KX**2 + KY**2


def poisson_solve(omega, grid: Grid2D, mean_tol: float = 1e-8) -> np.ndarray:
    """Streamfunction with ``lap(psi) = -omega`` and zero mean."""
    omega = np.asarray(omega, dtype=np.float64)
    if omega.shape != grid.shape:
        raise InputError(f"field shape {omega.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(omega)):
        raise InputError("vorticity contains non-finite values")
    mean = float(omega.mean())
    if abs(mean) > mean_tol:
        raise InputError(f"vorticity mean {mean:.3e} is not zero; the periodic Poisson problem has no solution")
    K2 = _k2(grid)
    W = fft2(omega)
    P = np.zeros_like(W)
    nz = K2 > 0
    P[nz] = W[nz] / K2[nz]
    return ifft2(P).real


def spectral_laplacian(f, grid: Grid2D) -> np.ndarray:
    return ifft2(-_k2(grid) * fft2(f)).real


def fd_laplacian(f, grid: Grid2D) -> np.ndarray:
    return kernels.laplacian5(np.ascontiguousarray(f, dtype=np.float64), grid.dx, grid.dy)


def laplacian(f, grid: Grid2D, kind: str = "fd") -> np.ndarray:
    if kind == "fd":
        return fd_laplacian(f, grid)
    if kind == "spectral":
        return spectral_laplacian(f, grid)
    raise ParameterError(f"unknown Laplacian '{kind}'")


def fd_laplacian_eigenvalue(kx: int, ky: int, grid: Grid2D) -> float:
    """Symbol of the 5-point Laplacian for the Fourier mode ``(kx, ky)``."""
    return -(4.0 / grid.dx**2) * np.sin(kx * grid.dx / 2) ** 2 - (4.0 / grid.dy**2) * np.sin(ky * grid.dy / 2) ** 2


# ---------------------------------------------------------------------------
# Jacobian and right-hand side
# ---------------------------------------------------------------------------


def jacobian(omega, psi, grid: Grid2D, scheme: str = "arakawa") -> np.ndarray:
    """J(omega, psi) = omega_x psi_y - omega_y psi_x."""
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    psi = np.ascontiguousarray(psi, dtype=np.float64)
    if omega.shape != psi.shape:
        raise InputError(f"Jacobian operands differ in shape: {omega.shape} vs {psi.shape}")
    if scheme == "arakawa":
        return kernels.arakawa(omega, psi, grid.dx, grid.dy)
    if scheme == "central":
        wx = (np.roll(omega, -1, 1) - np.roll(omega, 1, 1)) / (2 * grid.dx)
        wy = (np.roll(omega, -1, 0) - np.roll(omega, 1, 0)) / (2 * grid.dy)
        px = (np.roll(psi, -1, 1) - np.roll(psi, 1, 1)) / (2 * grid.dx)
        py = (np.roll(psi, -1, 0) - np.roll(psi, 1, 0)) / (2 * grid.dy)
        return wx * py - wy * px
    raise ParameterError(f"unknown Jacobian scheme '{scheme}'")


def vortex_rhs(omega, grid: Grid2D, Re: float, lap: str = "fd", scheme: str = "arakawa") -> np.ndarray:
    psi = poisson_solve(omega, grid)
    return -jacobian(omega, psi, grid, scheme) + laplacian(omega, grid, lap) / Re


def velocity(psi, grid: Grid2D) -> tuple[np.ndarray, np.ndarray]:
    """``(u, v) = (psi_y, -psi_x)`` by central differences."""
    u = (np.roll(psi, -1, 0) - np.roll(psi, 1, 0)) / (2 * grid.dy)
    v = -(np.roll(psi, -1, 1) - np.roll(psi, 1, 1)) / (2 * grid.dx)
    return u, v


def cfl_number(omega, grid: Grid2D, dt: float) -> float:
    u, v = velocity(poisson_solve(omega, grid), grid)
    return float(dt * (np.max(np.abs(u)) / grid.dx + np.max(np.abs(v)) / grid.dy))


def enstrophy(omega) -> float:
    return 0.5 * float(np.sum(np.asarray(omega) ** 2))


def energy(omega, grid: Grid2D) -> float:
    """0.5 * sum(psi * omega), the discrete kinetic energy up to the cell area."""
    return 0.5 * float(np.sum(poisson_solve(omega, grid) * omega))


def census(omega, threshold: float = 0.5) -> int:
    """Number of 8-neighbour local maxima above ``threshold * max(omega)``."""
    w = np.asarray(omega)
    top = float(w.max())
    if top <= 0.0:
        return 0
    neigh = np.stack(
        [np.roll(np.roll(w, a, 0), b, 1) for a in (-1, 0, 1) for b in (-1, 0, 1) if (a, b) != (0, 0)]
    )
    return int(np.sum((w >= neigh.max(axis=0)) & (w > threshold * top)))


# ---------------------------------------------------------------------------
# time integration
# ---------------------------------------------------------------------------


@dataclass
class VortexRun:
    omega: SnapshotMatrix  # n_steps + 1 columns
    rhs: SnapshotMatrix  # n_steps columns: tendency at the start of each step
    enstrophy: np.ndarray
    energy: np.ndarray
    census: np.ndarray
    cfl: float
    meta: dict = field(default_factory=dict)


def run_vortex(
    init="horizontal",
    grid: Grid2D | None = None,
    Re: float = 1000.0,
    dt: float = 0.02,
    n_steps: int = 200,
    lap: str = "fd",
    scheme: str = "arakawa",
    census_threshold: float = 0.5,
) -> VortexRun:
    """Integrate with SSP-RK3, storing vorticity and tendency snapshots."""
    grid = grid or Grid2D()
    if not Re > 0 or not dt > 0 or n_steps < 1:
        raise ParameterError("need Re > 0, dt > 0 and n_steps >= 1")
    init_obj = init_config(init) if isinstance(init, str) else init
    w0 = make_initial(init_obj, grid).omega
    cfl = cfl_number(w0, grid, dt)
    if cfl > 1.0:
        warnings.warn(f"CFL number {cfl:.3f} exceeds 1", RuntimeWarning, stacklevel=2)
    log.info("vortex run '%s': %dx%d Re=%g dt=%g steps=%d CFL=%.3f", init_obj.tag, grid.nx, grid.ny, Re, dt, n_steps, cfl)

    def rhs(v):
        return vortex_rhs(v.reshape(grid.shape), grid, Re, lap, scheme).reshape(-1)

    traj = integrate(w0.reshape(-1), rhs, dt, n_steps, record_rhs=True)
    states = [s.reshape(grid.shape) for s in traj.states]
    times = np.arange(n_steps + 1) * dt
    meta = {
        "model": "vortex2d",
        "init": init_obj.tag,
        "vortices": [[v.x, v.y, v.amplitude, v.rho] for v in init_obj.vortices],
        "Re": Re,
        "dt": dt,
        "n_steps": n_steps,
        "nx": grid.nx,
        "ny": grid.ny,
        "laplacian": lap,
        "jacobian": scheme,
    }
    return VortexRun(
        omega=SnapshotMatrix.from_fields(states, times, dict(meta, kind="omega")),
        rhs=SnapshotMatrix.from_fields([r.reshape(grid.shape) for r in traj.rhs], times[:-1], dict(meta, kind="rhs")),
        enstrophy=np.array([enstrophy(s) for s in states]),
        energy=np.array([energy(s, grid) for s in states]),
        census=np.array([census(s, census_threshold) for s in states]),
        cfl=cfl,
        meta=meta,
    )


def write_pgm(path, field2d, invert: bool = False) -> None:
    """8-bit binary greyscale image of a field, min-max scaled (row 0 at the top)."""
    f = np.asarray(field2d, dtype=np.float64)
    lo, hi = float(f.min()), float(f.max())
    g = np.zeros_like(f) if hi == lo else (f - lo) / (hi - lo)
    if invert:
        g = 1.0 - g
    img = np.round(255.0 * g[::-1]).astype(np.uint8)  # y grows upward
    header = f"P5\n{f.shape[1]} {f.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())
