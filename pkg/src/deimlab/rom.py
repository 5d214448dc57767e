"""POD bases, Galerkin ROM, greedy DEIM and the hyper-reduced rollout."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .burgers import Grid1D, diffusion_matrix, nonlinear_at, nonlinear_term, stencil_values, STENCIL_OFFSETS
from .errors import DimensionError, InstabilityError, ParameterError, SingularMatrixError
from .integrate import ssp_rk3_step
from .linalg import orthonormality_error, solve_small, thin_svd
from .storage import SnapshotMatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal modes ``Psi`` (n x m) with the full singular spectrum."""

    Psi: np.ndarray
    sigma: np.ndarray
    energy_fractions: np.ndarray

    @property
    def m(self) -> int:
        return self.Psi.shape[1]

    @property
    def n(self) -> int:
        return self.Psi.shape[0]


NonlinearBasis = PodBasis


def build_pod(snapshots, modes: int | None = None, energy: float | None = None, rank_tol: float = 1e-12) -> PodBasis:
    """Truncated POD of a snapshot matrix.

    Exactly one of ``modes`` (fixed count) or ``energy`` (smallest count whose
    cumulative squared-singular-value fraction reaches the threshold) must
    be given.
    """
    U = snapshots.data if isinstance(snapshots, SnapshotMatrix) else np.asarray(snapshots, dtype=np.float64)
    if U.size == 0:
        raise DimensionError("empty snapshot matrix")
    if (modes is None) == (energy is None):
        raise ParameterError("give exactly one of modes= or energy=")
    svd = thin_svd(U)
    s2 = svd.sigma**2
    total = s2.sum()
    cum = np.cumsum(s2) / total if total > 0 else np.ones_like(s2)
    cum[-1] = 1.0
    rank = int(np.sum(svd.sigma > rank_tol * svd.sigma[0])) if svd.sigma[0] > 0 else 0
    if energy is not None:
        if not 0.0 < energy <= 1.0:
            raise ParameterError(f"energy threshold must lie in (0, 1], got {energy}")
        # small slack so thresholds hit exactly by rounding still count
        modes = int(np.searchsorted(cum, energy - 1e-14) + 1)
    if modes < 1 or modes > rank:
        raise ParameterError(f"requested {modes} modes but the snapshot rank is {rank}")
    return PodBasis(Psi=svd.U[:, :modes].copy(), sigma=svd.sigma.copy(), energy_fractions=cum)


# ---------------------------------------------------------------------------
# DEIM
# ---------------------------------------------------------------------------


def greedy_indices(Phi) -> np.ndarray:
    """Classical greedy DEIM point selection (lowest index wins ties)."""
    Phi = np.asarray(Phi, dtype=np.float64)
    if Phi.ndim != 2 or Phi.shape[1] < 1:
        raise DimensionError(f"DEIM basis must be n x l with l >= 1, got {Phi.shape}")
    n, l = Phi.shape
    if l > n:
        raise DimensionError(f"cannot pick {l} points from {n} rows")
    p = [int(np.argmax(np.abs(Phi[:, 0])))]
    for k in range(1, l):
        try:
            c = solve_small(Phi[p, :k], Phi[p, k])
        except SingularMatrixError as exc:
            raise SingularMatrixError(
                exc.pivot_index, exc.pivot, f"DEIM greedy step {k + 1}: interpolation matrix is singular"
            ) from exc
        r = Phi[:, k] - Phi[:, :k] @ c
        p.append(int(np.argmax(np.abs(r))))
    idx = np.asarray(p, dtype=np.int64)
    assert len(set(p)) == l, "greedy DEIM produced a repeated index"
    return idx


@dataclass(frozen=True)
class DeimOperator:
    """Sampling indices plus the precomputed map from sampled values to reduced tendencies."""

    indices: np.ndarray
    projector: np.ndarray  # m x l: Psi^T Phi (P^T Phi)^{-1}
    Phi_rows: np.ndarray  # l x l: P^T Phi

    @property
    def l(self) -> int:
        return int(self.indices.size)


def deim_operator(Phi, indices, Psi=None) -> DeimOperator:
    """Operator for given indices. Without ``Psi`` the projector is Phi (P^T Phi)^{-1}."""
    Phi = np.asarray(Phi, dtype=np.float64)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size != Phi.shape[1]:
        raise DimensionError(f"{idx.size} indices for {Phi.shape[1]} DEIM modes")
    if len(set(idx.tolist())) != idx.size:
        raise ParameterError("DEIM indices must be pairwise distinct")
    if np.any(idx < 0) or np.any(idx >= Phi.shape[0]):
        raise ParameterError("DEIM index out of range")
    rows = Phi[idx]
    left = Phi if Psi is None else np.asarray(Psi).T @ Phi
    # projector = left @ rows^{-1}  <=>  rows^T projector^T = left^T
    projector = solve_small(rows.T, left.T).T
    return DeimOperator(indices=idx, projector=projector, Phi_rows=rows)


def deim_select(Phi, Psi=None) -> DeimOperator:
    Phi = Phi.Psi if isinstance(Phi, PodBasis) else Phi
    Psi = Psi.Psi if isinstance(Psi, PodBasis) else Psi
    return deim_operator(Phi, greedy_indices(Phi), Psi)


def deim_interpolate(Phi, indices, v) -> np.ndarray:
    """Phi (P^T Phi)^{-1} P^T v."""
    Phi = np.asarray(Phi)
    idx = np.asarray(indices)
    return Phi @ solve_small(Phi[idx], np.asarray(v)[idx])


class EvalCounter:
    """Counts nonlinear-term point evaluations.

    ``per_stage`` adds ``l`` on every DEIM right-hand-side call;
    ``per_step`` adds one ``l``-point batch per time step, regardless of
    how many Runge-Kutta stages reuse the same sampling points.
    """

    def __init__(self):
        self.per_stage = 0
        self.per_step = 0
        self.rhs_calls = 0
        self._fresh_step = True

    def new_step(self):
        self._fresh_step = True

    def record(self, l: int):
        self.per_stage += l
        self.rhs_calls += 1
        if self._fresh_step:
            self.per_step += l
            self._fresh_step = False

    def as_dict(self) -> dict:
        return {"per_step_batch": self.per_step, "per_stage": self.per_stage, "rhs_calls": self.rhs_calls}


def deim_apply(op: DeimOperator, sampled_values, counter: EvalCounter | None = None) -> np.ndarray:
    """Reduced nonlinear tendency from the ``l`` sampled nonlinear values."""
    v = np.asarray(sampled_values, dtype=np.float64)
    if v.shape != (op.l,):
        raise DimensionError(f"expected {op.l} sampled values, got shape {v.shape}")
    if counter is not None:
        counter.record(op.l)
    return op.projector @ v


# ---------------------------------------------------------------------------
# Galerkin ROM
# ---------------------------------------------------------------------------


class GalerkinRom:
    """POD-Galerkin model of the Burgers FOM on a fixed basis."""

    def __init__(self, grid: Grid1D, Re: float, Psi):
        self.grid = grid
        self.Re = float(Re)
        self.Psi = np.ascontiguousarray(Psi.Psi if isinstance(Psi, PodBasis) else Psi, dtype=np.float64)
        if self.Psi.shape[0] != grid.n:
            raise DimensionError(f"basis has {self.Psi.shape[0]} rows, grid has {grid.n} points")
        self.L_r = self.Psi.T @ diffusion_matrix(grid) @ self.Psi / self.Re
        self._footprints: dict[bytes, np.ndarray] = {}

    @property
    def m(self) -> int:
        return self.Psi.shape[1]

    def project(self, u) -> np.ndarray:
        return self.Psi.T @ u

    def reconstruct(self, a) -> np.ndarray:
        return self.Psi @ a

    def _stencil_rows(self, indices) -> np.ndarray:
        key = np.asarray(indices, dtype=np.int64).tobytes()
        rows = self._footprints.get(key)
        if rows is None:
            rows = np.clip(np.asarray(indices)[:, None] + STENCIL_OFFSETS[None, :], 0, self.grid.n - 1)
            if len(self._footprints) > 4096:
                self._footprints.clear()
            self._footprints[key] = rows
        return rows

    def sampled_nonlinear(self, a, indices) -> np.ndarray:
        """N_f at the given indices, reconstructing u only on their stencils."""
        rows = self._stencil_rows(indices)
        u5 = self.Psi[rows] @ a  # (l, 5)
        return nonlinear_at(u5, indices, self.grid)

    def rhs_full(self, a) -> np.ndarray:
        return self.L_r @ a + self.Psi.T @ nonlinear_term(self.Psi @ a, self.grid)

    def rhs_deim(self, a, op: DeimOperator, counter: EvalCounter | None = None) -> np.ndarray:
        return self.L_r @ a + deim_apply(op, self.sampled_nonlinear(a, op.indices), counter)

    def galerkin_rhs(self, a, deim: DeimOperator | None = None, counter: EvalCounter | None = None):
        """Reduced tendency; ``deim=None`` evaluates the nonlinear term exactly."""
        if deim is None:
            return self.rhs_full(a)
        return self.rhs_deim(a, deim, counter)


Sampler = Union[str, DeimOperator, Callable[[np.ndarray, int], DeimOperator]]


@dataclass
class RomResult:
    coefficients: np.ndarray  # m x (N+1)
    reconstruction: SnapshotMatrix
    mse: np.ndarray  # per step, against the FOM states
    counter: EvalCounter
    indices: np.ndarray | None = None  # N x l sampling points used at each step
    meta: dict = field(default_factory=dict)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))


def run_rom(rom: GalerkinRom, fom_states, dt: float, n_steps: int, sampler: Sampler = "full") -> RomResult:
    """Roll the reduced model forward with SSP-RK3 and score it against the FOM.

    ``sampler`` is ``"full"`` (exact projected nonlinearity), a fixed
    :class:`DeimOperator`, or a callable ``(a, step) -> DeimOperator`` invoked
    once per step whose points are reused by all three stages.
    """
    U = fom_states.data if isinstance(fom_states, SnapshotMatrix) else np.asarray(fom_states)
    if U.shape[0] != rom.grid.n or U.shape[1] < n_steps + 1:
        raise DimensionError(f"FOM snapshots {U.shape} do not cover {n_steps} steps on {rom.grid.n} points")
    counter = EvalCounter()
    a = rom.project(U[:, 0])
    coeffs = [a.copy()]
    used = []
    for k in range(n_steps):
        counter.new_step()
        if isinstance(sampler, str):
            if sampler != "full":
                raise ParameterError(f"unknown sampler '{sampler}'")
            rhs = rom.rhs_full
        else:
            op = sampler if isinstance(sampler, DeimOperator) else sampler(a, k)
            used.append(op.indices.copy())
            rhs = lambda v, op=op: rom.rhs_deim(v, op, counter)  # noqa: E731
        a = ssp_rk3_step(a, dt, rhs)
        if not np.all(np.isfinite(a)):
            raise InstabilityError(k + 1)
        coeffs.append(a.copy())
    A = np.stack(coeffs, axis=1)
    R = rom.Psi @ A
    mse = np.mean((R - U[:, : n_steps + 1]) ** 2, axis=0)
    times = np.arange(n_steps + 1) * dt
    return RomResult(
        coefficients=A,
        reconstruction=SnapshotMatrix(R, times, (rom.grid.n,), {"kind": "rom_reconstruction"}),
        mse=mse,
        counter=counter,
        indices=np.stack(used) if used else None,
    )


def check_basis(basis: PodBasis, tol: float = 1e-10) -> float:
    err = orthonormality_error(basis.Psi)
    if err >= tol:
        raise AssertionError(f"basis not orthonormal: {err:.2e}")
    return err
