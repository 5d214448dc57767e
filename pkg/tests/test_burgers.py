import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deimlab.burgers import (
    BurgersConfig,
    Grid1D,
    analytic_solution,
    fom_rhs,
    initial_condition,
    linear_term,
    nonlinear_term,
    run_fom,
)
from deimlab.errors import InputError, InstabilityError, ParameterError
from deimlab.integrate import integrate, ssp_rk3_step

# 40-digit mpmath evaluation of the closed form at (x=0.5, t=1, Re=1000)
U_HALF = 0.2499999999999905212199235


def test_analytic_zero_at_origin():
    for t in (0.0, 0.7, 2.0):
        assert analytic_solution(0.0, t, 1000.0) == 0.0


def test_analytic_high_precision_point():
    assert analytic_solution(0.5, 1.0, 1000.0) == pytest.approx(U_HALF, rel=1e-13)


def test_analytic_t0_is_initial_profile():
    grid = Grid1D(128)
    x = grid.x
    Re = 1000.0
    direct = x / (1.0 + np.sqrt(1.0 / np.exp(Re / 8.0)) * np.exp(Re * x**2 / 4.0))
    u0 = initial_condition(grid, Re)
    np.testing.assert_allclose(u0[:-1], direct[:-1], rtol=1e-12, atol=1e-300)
    assert u0[0] == 0.0 and u0[-1] == 0.0


def brute_rhs(u, n, L, Re):
    """Node-by-node stencil tables, assembled without the package helpers."""
    dx = L / (n - 1)
    f = [0.5 * v * v for v in u]
    back = {0: 3.0, -1: -4.0, -2: 1.0}
    fwd = {0: -3.0, 1: 4.0, 2: -1.0}
    out = [0.0] * n
    for i in range(1, n - 1):
        if i == 1:
            table = fwd
        elif i == n - 2:
            table = back
        else:
            table = back if u[i] >= 0 else fwd
        adv = sum(c * f[i + o] for o, c in table.items()) / (2 * dx)
        dif = (u[i + 1] - 2 * u[i] + u[i - 1]) / (dx * dx)
        out[i] = -adv + dif / Re
    return np.array(out)


def test_zero_state_zero_tendency(backend):
    g = Grid1D(16)
    np.testing.assert_array_equal(fom_rhs(np.zeros(16), g, 100.0), 0.0)
    np.testing.assert_array_equal(nonlinear_term(np.zeros(16), g), 0.0)


def test_linear_ramp_has_no_interior_diffusion():
    g = Grid1D(20)
    u = g.x.copy()
    u[-1] = 0.0
    lin = linear_term(u, g, 10.0)
    np.testing.assert_allclose(lin[1:-2], 0.0, atol=1e-10)


def test_constant_interior_has_no_advection(backend):
    g = Grid1D(20)
    u = np.full(20, 0.3)
    u[0] = u[-1] = 0.0
    nl = nonlinear_term(u, g)
    np.testing.assert_allclose(nl[3:-3], 0.0, atol=1e-14)


@pytest.mark.parametrize("seed", range(4))
def test_rhs_matches_brute_stencil(backend, seed):
    rng = np.random.default_rng(seed)
    n = 33
    x = np.linspace(0, 1, n)
    u = sum(rng.normal() * np.sin((k + 1) * np.pi * x) for k in range(4))
    u[0] = u[-1] = 0.0
    np.testing.assert_allclose(fom_rhs(u, Grid1D(n), 250.0), brute_rhs(u, n, 1.0, 250.0), rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(5, 64))
def test_rhs_decomposition(seed, n):
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, n)
    g = Grid1D(n)
    diff = fom_rhs(u, g, 300.0) - (nonlinear_term(u, g) + linear_term(u, g, 300.0))
    assert np.max(np.abs(diff)) < 1e-13


def test_rhs_rejects_nonfinite():
    u = np.zeros(8)
    u[3] = np.nan
    with pytest.raises(InputError):
        fom_rhs(u, Grid1D(8), 1.0)


def test_grid_and_config_validation():
    with pytest.raises(ParameterError):
        Grid1D(3)
    with pytest.raises(ParameterError):
        BurgersConfig(Re=0.0)
    assert BurgersConfig().dt == pytest.approx(2.0 / 300)


def test_rk3_zero_rhs_is_identity():
    u = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(ssp_rk3_step(u, 0.1, lambda v: np.zeros_like(v)), u)


def test_rk3_linear_scalar_matches_cubic_taylor():
    lam, dt = -1.0, 1e-2
    z = lam * dt
    got = ssp_rk3_step(np.array([1.0]), dt, lambda v: lam * v)[0]
    assert got == pytest.approx(1 + z + z**2 / 2 + z**3 / 6, abs=1e-15)
    # the remaining gap to exp is the fourth-order Taylor term
    assert abs(got - np.exp(z)) == pytest.approx(z**4 / 24, rel=0.01)


def test_rk3_rejects_nonpositive_dt():
    with pytest.raises(ParameterError):
        ssp_rk3_step(np.ones(2), 0.0, lambda v: v)


def test_integrate_records_first_stage_rhs():
    traj = integrate(np.array([1.0]), lambda v: -v, 0.1, 3, record_rhs=True)
    assert len(traj.states) == 4 and len(traj.rhs) == 3
    for s, r in zip(traj.states, traj.rhs):
        np.testing.assert_array_equal(r, -s)


def test_integrate_abort_truncates():
    traj = integrate(np.array([1.0]), lambda v: v, 0.1, 10, abort=lambda u, k: k == 4)
    assert traj.truncated and traj.stopped_at == 4 and len(traj.states) == 5


def test_zero_steps_returns_initial_condition(backend):
    res = run_fom(BurgersConfig(n_steps=0))
    assert res.states.n_cols == 1
    np.testing.assert_array_equal(res.states.data[:, 0], initial_condition(Grid1D(128), 1000.0))


@pytest.fixture(scope="module")
def reference_run():
    return run_fom(BurgersConfig())


def test_reference_run_is_finite_with_pinned_walls(reference_run):
    U = reference_run.states.data
    assert U.shape == (128, 301)
    assert np.all(np.isfinite(U))
    assert np.all(U[0] == 0.0) and np.all(U[-1] == 0.0)
    assert reference_run.nonlinear.data.shape == U.shape


def test_nonlinear_snapshots_match_states(reference_run):
    g = Grid1D(128)
    for k in (0, 150, 300):
        np.testing.assert_array_equal(reference_run.nonlinear.data[:, k], nonlinear_term(reference_run.states.data[:, k], g))


def test_no_new_overshoot(reference_run):
    U = reference_run.states.data
    assert U.max() <= U[:, 0].max() + 1e-12
    # second-order upwind is not TVD; the small undershoot behind the front stays bounded
    assert U.min() > -0.01 * U[:, 0].max()


def test_pure_diffusion_energy_nonincreasing():
    res = run_fom(BurgersConfig(Re=100.0, n=64, n_steps=200), advection=False)
    energy = np.sum(res.states.data**2, axis=0)
    assert np.all(np.diff(energy) <= 1e-15)


def test_instability_reports_step():
    # far beyond the diffusive limit of the explicit scheme
    with pytest.warns(RuntimeWarning, match="CFL number"), pytest.raises(InstabilityError) as info:
        run_fom(BurgersConfig(Re=5.0, n=128, n_steps=20))
    assert info.value.step >= 1


def test_time_order_about_three():
    def final(ns):
        return run_fom(BurgersConfig(Re=100.0, n=64, t_final=0.5, n_steps=ns)).states.data[:, -1]

    ref = final(3200)
    e1 = np.max(np.abs(final(200) - ref))
    e2 = np.max(np.abs(final(400) - ref))
    assert 2.6 < np.log2(e1 / e2) < 3.4
