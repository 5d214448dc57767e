"""Full-order 1-D viscous Burgers solver.

    u_t + (u^2/2)_x = (1/Re) u_xx,   u(0,t) = u(L,t) = 0

Advection uses second-order upwind differences on the flux u^2/2 (direction
from the sign of u at the node, falling back to the in-domain one-sided
stencil next to the walls); diffusion uses second-order central differences.
Time stepping is SSP-RK3.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import InputError, ParameterError
from .integrate import integrate, ssp_rk3_step
from .storage import SnapshotMatrix

log = logging.getLogger(__name__)

STENCIL_OFFSETS = np.arange(-2, 3)


@dataclass(frozen=True)
class Grid1D:
    n: int = 128
    L: float = 1.0

    def __post_init__(self):
        if self.n < 4:
            raise ParameterError(f"Grid1D needs n >= 4, got {self.n}")
        if not self.L > 0:
            raise ParameterError(f"domain length must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.n) * self.dx


@dataclass(frozen=True)
class BurgersConfig:
    Re: float = 1000.0
    n: int = 128
    t_final: float = 2.0
    n_steps: int = 300
    L: float = 1.0

    def __post_init__(self):
        if not self.Re > 0:
            raise ParameterError(f"Re must be positive, got {self.Re}")
        if self.n_steps < 0:
            raise ParameterError(f"n_steps must be >= 0, got {self.n_steps}")
        if self.n_steps > 0 and not self.t_final > 0:
            raise ParameterError(f"t_final must be positive, got {self.t_final}")

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.n, self.L)

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps if self.n_steps else 0.0

    def cfl(self, u_max: float) -> float:
        return u_max * self.dt / self.grid.dx

    def to_dict(self) -> dict:
        return asdict(self)


def analytic_solution(x, t, Re):
    """Closed-form solution matching the initial and boundary data.

    Evaluated in log space so that large ``Re * x^2`` does not overflow.
    """
    x = np.asarray(x, dtype=np.float64)
    tp1 = t + 1.0
    z = 0.5 * np.log(tp1) - Re / 16.0 + Re * x * x / (4.0 * tp1)
    return (x / tp1) * np.exp(-np.logaddexp(0.0, z))


def initial_condition(grid: Grid1D, Re: float) -> np.ndarray:
    u = analytic_solution(grid.x, 0.0, Re)
    u[0] = 0.0
    u[-1] = 0.0
    return u


def _check_finite(u):
    if not np.all(np.isfinite(u)):
        raise InputError("Burgers state contains non-finite values")


def stencil_values(u, points, n) -> np.ndarray:
    """Gather u at offsets -2..+2 around each point (clipped at the walls)."""
    idx = np.clip(np.asarray(points)[:, None] + STENCIL_OFFSETS[None, :], 0, n - 1)
    return np.asarray(u)[idx]


def nonlinear_at(u5, points, grid: Grid1D) -> np.ndarray:
    """Advection term -d(u^2/2)/dx at ``points`` from their 5-point neighbourhoods."""
    return kernels.advection_points(
        np.ascontiguousarray(u5, dtype=np.float64), np.asarray(points, dtype=np.int64), grid.n, grid.dx
    )


def nonlinear_term(u, grid: Grid1D) -> np.ndarray:
    """Advection term on the whole grid (zero at the boundary nodes)."""
    u = np.asarray(u, dtype=np.float64)
    _check_finite(u)
    pts = np.arange(grid.n)
    return nonlinear_at(stencil_values(u, pts, grid.n), pts, grid)


def advection_matrix(u, grid: Grid1D) -> np.ndarray:
    """Matrix D with D @ (u^2/2) = d(u^2/2)/dx for the upwind choices taken at ``u``.

    The stencil direction is frozen at ``u``; used to build the nonlinear
    term on a differentiation tape.
    """
    n, dx = grid.n, grid.dx
    D = np.zeros((n, n))
    for i in range(1, n - 1):
        if i == 1:
            back = False
        elif i == n - 2:
            back = True
        else:
            back = u[i] >= 0.0
        if back:
            D[i, i], D[i, i - 1], D[i, i - 2] = 3.0, -4.0, 1.0
        else:
            D[i, i], D[i, i + 1], D[i, i + 2] = -3.0, 4.0, -1.0
    return D / (2.0 * dx)


def diffusion_matrix(grid: Grid1D) -> np.ndarray:
    """Central second difference with Dirichlet-pinned boundary rows."""
    n, dx = grid.n, grid.dx
    D2 = np.zeros((n, n))
    i = np.arange(1, n - 1)
    D2[i, i - 1] = 1.0
    D2[i, i] = -2.0
    D2[i, i + 1] = 1.0
    return D2 / (dx * dx)


def linear_term(u, grid: Grid1D, Re: float) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / (grid.dx * grid.dx * Re)
    return out


def fom_rhs(u, grid: Grid1D, Re: float) -> np.ndarray:
    """Full right-hand side: advection plus diffusion, zero at the walls."""
    return nonlinear_term(u, grid) + linear_term(u, grid, Re)


def pin_boundaries(u):
    u[0] = 0.0
    u[-1] = 0.0


def step(u, dt, grid: Grid1D, Re: float):
    return ssp_rk3_step(u, dt, lambda v: fom_rhs(v, grid, Re), pin_boundaries)


@dataclass
class FomResult:
    states: SnapshotMatrix
    nonlinear: SnapshotMatrix
    squared_error: np.ndarray  # n x (n_steps+1), against the analytic solution
    cfl: float

    @property
    def max_squared_error(self) -> float:
        return float(np.max(self.squared_error))


def run_fom(config: BurgersConfig, advection: bool = True) -> FomResult:
    """Integrate the FOM and collect state and nonlinear-term snapshots.

    ``advection=False`` switches the nonlinear term off (pure diffusion);
    used for energy checks.
    """
    grid = config.grid
    Re = config.Re
    u0 = initial_condition(grid, Re)
    cfl = config.cfl(float(np.max(np.abs(u0))))
    if cfl > 1.0:
        warnings.warn(f"CFL number {cfl:.3f} exceeds 1", RuntimeWarning, stacklevel=2)
    log.info("Burgers FOM: n=%d steps=%d dt=%.4g CFL=%.3f", grid.n, config.n_steps, config.dt, cfl)

    if advection:
        rhs = lambda v: fom_rhs(v, grid, Re)  # noqa: E731
    else:
        rhs = lambda v: linear_term(v, grid, Re)  # noqa: E731
    if config.n_steps:
        traj = integrate(u0, rhs, config.dt, config.n_steps, enforce=pin_boundaries)
        states = traj.states
    else:
        states = [u0]
    times = np.arange(len(states)) * config.dt
    U = np.stack(states, axis=1)
    NL = np.stack([nonlinear_term(s, grid) for s in states], axis=1)
    exact = np.stack([analytic_solution(grid.x, t, Re) for t in times], axis=1)
    meta = {"model": "burgers", "config": config.to_dict(), "cfl": cfl}
    return FomResult(
        states=SnapshotMatrix(U, times, (grid.n,), dict(meta, kind="state")),
        nonlinear=SnapshotMatrix(NL, times, (grid.n,), dict(meta, kind="nonlinear")),
        squared_error=(U - exact) ** 2,
        cfl=cfl,
    )
