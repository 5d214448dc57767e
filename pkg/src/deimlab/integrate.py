"""Shu-Osher SSP-RK3 stepping shared by every solver in the package.

The vortex solver and the neural-ODE rollout go through the same
:func:`integrate` loop, so feeding the true right-hand side to the rollout
reproduces the solver bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError, InstabilityError, ParameterError

log = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray], np.ndarray]


def ssp_rk3_step(u, dt: float, rhs: Rhs, enforce: Callable | None = None, r0=None):
    """One SSP-RK3 step.

    u1 = u + dt R(u); u2 = 3/4 u + 1/4 (u1 + dt R(u1)); u+ = 1/3 u + 2/3 (u2 + dt R(u2)).
    ``enforce`` (if given) reimposes boundary values in place after each
    stage; ``r0`` lets the caller pass an already evaluated R(u).
    """
    if not dt > 0.0:
        raise ParameterError(f"time step must be positive, got {dt}")
    k0 = rhs(u) if r0 is None else r0
    u1 = u + dt * k0
    if enforce is not None:
        enforce(u1)
    u2 = 0.75 * u + 0.25 * (u1 + dt * rhs(u1))
    if enforce is not None:
        enforce(u2)
    u3 = u / 3.0 + (2.0 / 3.0) * (u2 + dt * rhs(u2))
    if enforce is not None:
        enforce(u3)
    return u3


@dataclass
class Trajectory:
    states: list
    rhs: list = field(default_factory=list)
    truncated: bool = False
    stopped_at: int | None = None


def integrate(
    u0,
    rhs: Rhs,
    dt: float,
    n_steps: int,
    *,
    enforce: Callable | None = None,
    record_rhs: bool = False,
    abort: Callable[[np.ndarray, int], bool] | None = None,
) -> Trajectory:
    """March ``n_steps`` SSP-RK3 steps from ``u0``.

    States are kept for steps 0..n_steps. With ``record_rhs`` the first-stage
    tendency R(u_k) of every step k < n_steps is kept as well. ``abort(u, k)``
    returning True stops the march after state k and flags the result as
    truncated. A non-finite state raises InstabilityError, unless ``abort``
    is given, in which case the march stops at the last finite state.
    """
    u = np.array(u0, dtype=np.float64, copy=True)
    traj = Trajectory(states=[u.copy()])
    for k in range(n_steps):
        r0 = rhs(u)
        if record_rhs:
            traj.rhs.append(np.array(r0, copy=True))
        try:
            u = ssp_rk3_step(u, dt, rhs, enforce, r0=r0)
        except InputError:
            # an intermediate stage went non-finite and the rhs refused it
            u = np.full_like(u, np.nan)
        if not np.all(np.isfinite(u)):
            if abort is None:
                raise InstabilityError(k + 1)
            if record_rhs:
                traj.rhs.pop()
            traj.truncated = True
            traj.stopped_at = k
            log.warning("integration produced non-finite values at step %d; trajectory truncated", k + 1)
            break
        traj.states.append(u.copy())
        if abort is not None and abort(u, k + 1):
            traj.truncated = True
            traj.stopped_at = k + 1
            log.warning("integration stopped early at step %d", k + 1)
            break
    return traj
