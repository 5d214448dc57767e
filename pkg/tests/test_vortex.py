import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deimlab.errors import InputError, ParameterError
from deimlab.vortex import (
    INIT_TAGS,
    Grid2D,
    Vortex,
    VortexInit,
    census,
    enstrophy,
    fd_laplacian,
    fd_laplacian_eigenvalue,
    fft2,
    ifft2,
    init_config,
    jacobian,
    make_initial,
    poisson_solve,
    run_vortex,
    spectral_laplacian,
    vortex_rhs,
    write_pgm,
)


def arakawa_oracle(w, p, dx, dy):
    """The three component Jacobians, node by node with explicit wrap-around."""
    ny, nx = w.shape
    out = np.zeros_like(w)
    for j in range(ny):
        for i in range(nx):
            def W(di, dj):
                return w[(j + dj) % ny, (i + di) % nx]

            def P(di, dj):
                return p[(j + dj) % ny, (i + di) % nx]

            j1 = (W(1, 0) - W(-1, 0)) * (P(0, 1) - P(0, -1)) - (W(0, 1) - W(0, -1)) * (P(1, 0) - P(-1, 0))
            j2 = (
                W(1, 0) * (P(1, 1) - P(1, -1))
                - W(-1, 0) * (P(-1, 1) - P(-1, -1))
                - W(0, 1) * (P(1, 1) - P(-1, 1))
                + W(0, -1) * (P(1, -1) - P(-1, -1))
            )
            j3 = (
                W(1, 1) * (P(0, 1) - P(1, 0))
                - W(-1, -1) * (P(-1, 0) - P(0, -1))
                - W(-1, 1) * (P(0, 1) - P(-1, 0))
                + W(1, -1) * (P(1, 0) - P(0, -1))
            )
            out[j, i] = (j1 + j2 + j3) / (12.0 * dx * dy)
    return out


def zero_mean(rng, shape):
    f = rng.standard_normal(shape)
    return f - f.mean()


def test_grid_validation():
    with pytest.raises(ParameterError):
        Grid2D(8, 16)
    with pytest.raises(ParameterError):
        Grid2D(48, 64)
    g = Grid2D(32, 16)
    assert g.shape == (16, 32)
    assert g.dx == pytest.approx(2 * np.pi / 32)


def test_no_vortices_gives_zero_field():
    g = Grid2D(16, 16)
    f = make_initial(VortexInit("none", ()), g)
    np.testing.assert_array_equal(f.omega, 0.0)
    np.testing.assert_array_equal(f.psi, 0.0)


def test_horizontal_mirror_symmetry():
    g = Grid2D(64, 64)
    w = make_initial("horizontal", g).omega
    # rows j and (64 - j) sit at y = pi -/+ s
    j = np.arange(1, 32)
    np.testing.assert_allclose(w[32 + j], w[32 - j], atol=1e-12)


@pytest.mark.parametrize("tag", INIT_TAGS)
def test_initial_mean_zero(tag):
    assert abs(make_initial(tag, Grid2D(32, 32)).omega.mean()) < 1e-14


def test_init_config_layouts():
    a = init_config("asymmetric")
    assert [v.amplitude for v in a.vortices] == [1.0, 0.8]
    c = init_config("close-horizontal")
    assert c.vortices[1].x - c.vortices[0].x == pytest.approx(np.pi / 4)
    with pytest.raises(ParameterError):
        init_config("diagonal")
    with pytest.raises(ParameterError):
        Vortex(1.0, 1.0, rho=0.0)
    with pytest.raises(ParameterError):
        Vortex(7.0, 1.0)


# ---------------------------------------------------------------------------
# FFT and Poisson
# ---------------------------------------------------------------------------


def test_fft_matches_numpy(backend, rng):
    f = rng.standard_normal((16, 32))
    np.testing.assert_allclose(fft2(f), np.fft.fft2(f), atol=1e-11)
    np.testing.assert_allclose(ifft2(fft2(f)).real, f, atol=1e-13)


def test_poisson_eigenfunction(backend):
    g = Grid2D(32, 32)
    X, Y = g.mesh()
    w = np.sin(X) * np.sin(Y)
    np.testing.assert_allclose(poisson_solve(w, g), w / 2, atol=1e-13)


def test_poisson_zero(backend):
    g = Grid2D(16, 16)
    np.testing.assert_array_equal(poisson_solve(np.zeros(g.shape), g), 0.0)


def test_poisson_random_residual(backend, rng):
    g = Grid2D(32, 64)
    w = zero_mean(rng, g.shape)
    psi = poisson_solve(w, g)
    assert np.max(np.abs(spectral_laplacian(psi, g) + w)) < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([16, 32]))
def test_poisson_inverts_spectral_laplacian(seed, n):
    g = Grid2D(n, n)
    w = zero_mean(np.random.default_rng(seed), g.shape)
    back = poisson_solve(-spectral_laplacian(w, g), g)
    assert np.max(np.abs(back - (w - w.mean()))) < 1e-10


def test_poisson_rejects_nonzero_mean():
    g = Grid2D(16, 16)
    with pytest.raises(InputError):
        poisson_solve(np.ones(g.shape), g)
    with pytest.raises(InputError):
        poisson_solve(np.zeros((8, 8)), g)


def test_fd_laplacian_symbol(backend):
    g = Grid2D(32, 32)
    X, Y = g.mesh()
    mode = np.cos(3 * X + 2 * Y)
    np.testing.assert_allclose(fd_laplacian(mode, g), fd_laplacian_eigenvalue(3, 2, g) * mode, atol=1e-11)


# ---------------------------------------------------------------------------
# Jacobian
# ---------------------------------------------------------------------------


def test_jacobian_constant_psi(backend, rng):
    g = Grid2D(16, 16)
    np.testing.assert_allclose(jacobian(rng.standard_normal(g.shape), np.full(g.shape, 2.0), g), 0.0, atol=1e-14)


def test_jacobian_self(backend, rng):
    g = Grid2D(16, 16)
    w = rng.standard_normal(g.shape)
    np.testing.assert_allclose(jacobian(w, w, g), 0.0, atol=1e-12)


@pytest.mark.parametrize("shape", [(16, 16), (16, 32)])
def test_arakawa_matches_component_oracle(backend, rng, shape):
    g = Grid2D(shape[1], shape[0])
    w = rng.standard_normal(shape)
    p = rng.standard_normal(shape)
    assert np.max(np.abs(jacobian(w, p, g) - arakawa_oracle(w, p, g.dx, g.dy))) < 1e-13


def test_backends_agree_on_arakawa(rng):
    from deimlab import kernels

    if not kernels.NUMBA_AVAILABLE:
        pytest.skip("numba not installed")
    w = rng.standard_normal((32, 32))
    p = rng.standard_normal((32, 32))
    np.testing.assert_allclose(kernels._arakawa_numpy(w, p, 0.2, 0.2), kernels._arakawa_numba(w, p, 0.2, 0.2), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_arakawa_discrete_invariants(seed):
    rng = np.random.default_rng(seed)
    g = Grid2D(32, 32)
    w = zero_mean(rng, g.shape)
    psi = poisson_solve(w, g)
    J = jacobian(w, psi, g)
    assert abs(J.sum()) < 1e-10
    assert abs(np.sum(w * J)) < 1e-10
    assert abs(np.sum(psi * J)) < 1e-10


def test_central_jacobian_close_to_arakawa_on_smooth_field():
    g = Grid2D(64, 64)
    f = make_initial("asymmetric", g)
    a = jacobian(f.omega, f.psi, g)
    c = jacobian(f.omega, f.psi, g, scheme="central")
    assert np.max(np.abs(a - c)) < 0.05 * np.max(np.abs(a))


# ---------------------------------------------------------------------------
# right-hand side and runs
# ---------------------------------------------------------------------------


def test_rhs_of_zero(backend):
    g = Grid2D(16, 16)
    np.testing.assert_array_equal(vortex_rhs(np.zeros(g.shape), g, 1000.0), 0.0)


def test_taylor_green_pure_decay(backend):
    g = Grid2D(32, 32)
    X, Y = g.mesh()
    w = np.sin(X) * np.sin(Y)
    Re = 1000.0
    np.testing.assert_allclose(vortex_rhs(w, g, Re, lap="spectral"), -(2.0 / Re) * w, atol=1e-10)
    lam = fd_laplacian_eigenvalue(1, 1, g)
    np.testing.assert_allclose(vortex_rhs(w, g, Re, lap="fd"), lam * w / Re, atol=1e-10)


@pytest.fixture(scope="module")
def short_run():
    return run_vortex("asymmetric", Grid2D(32, 32), n_steps=60)


def test_run_shapes_and_rhs_alignment(short_run):
    r = short_run
    assert r.omega.n_cols == 61 and r.rhs.n_cols == 60
    g = Grid2D(32, 32)
    for k in (0, 30, 59):
        np.testing.assert_array_equal(r.rhs.field(k), vortex_rhs(r.omega.field(k), g, 1000.0))


def test_run_invariants(short_run):
    r = short_run
    assert np.all(np.diff(r.enstrophy) < 0)
    assert np.all(np.diff(r.energy) <= 0)
    assert np.max(np.abs(r.omega.data.mean(axis=0))) < 1e-9
    assert r.enstrophy[0] == pytest.approx(enstrophy(r.omega.field(0)))


def test_time_refinement_ratio_about_eight():
    g = Grid2D(32, 32)

    def final(dt):
        return run_vortex("horizontal", g, dt=dt, n_steps=int(round(1.0 / dt))).omega.field(-1)

    ref = final(0.0025)
    ratio = np.max(np.abs(final(0.02) - ref)) / np.max(np.abs(final(0.01) - ref))
    assert 6.5 < ratio < 9.5


def test_run_is_deterministic():
    g = Grid2D(16, 16)
    a = run_vortex("vertical", g, n_steps=10)
    b = run_vortex("vertical", g, n_steps=10)
    assert a.omega.data.tobytes() == b.omega.data.tobytes()


def test_census_counts_peaks():
    g = Grid2D(64, 64)
    assert census(make_initial("horizontal", g).omega) == 2
    assert census(np.zeros(g.shape)) == 0
    one = make_initial(VortexInit("one", (Vortex(np.pi, np.pi),)), g).omega
    assert census(one) == 1


def test_pgm_export(tmp_path):
    path = tmp_path / "w.pgm"
    f = np.arange(12.0).reshape(3, 4)
    write_pgm(path, f)
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n")
    pix = np.frombuffer(raw[len(b"P5\n4 3\n255\n") :], dtype=np.uint8).reshape(3, 4)
    assert pix[0, 3] == 255 - 0 * 0 and pix[2, 0] == 0  # top row holds the largest y
