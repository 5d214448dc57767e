import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deimlab import autodiff as ad
from deimlab.errors import DimensionError, ParameterError
from deimlab.node import CnnRhs, NodeTrainConfig, l2_error_series, rollout_node, train_node
from deimlab.storage import SnapshotMatrix
from deimlab.vortex import Grid2D, run_vortex, vortex_rhs


@pytest.fixture(scope="module")
def small_run():
    return run_vortex("horizontal", Grid2D(16, 16), n_steps=30)


def test_zero_output_net_predicts_mean_tendency():
    net = CnnRhs.initialize(4, seed=0, zero_output=True)
    net.norm = {"w_mean": 0.0, "w_std": 1.0, "r_mean": 0.25, "r_std": 2.0}
    np.testing.assert_allclose(net(np.random.default_rng(0).standard_normal((8, 8))), 0.25)


def test_batch_equals_single(rng):
    net = CnnRhs.initialize(4, seed=1)
    w = rng.standard_normal((3, 8, 16))
    batch = net(w)
    for b in range(3):
        np.testing.assert_allclose(batch[b], net(w[b]), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-7, 7), st.integers(-7, 7))
def test_periodic_translation_equivariance(seed, sy, sx):
    rng = np.random.default_rng(seed)
    net = CnnRhs.initialize(6, seed=seed % 97)
    net.norm = {"w_mean": 0.1, "w_std": 0.7, "r_mean": -0.2, "r_std": 1.3}
    w = rng.standard_normal((16, 16))
    shifted = net(np.roll(w, (sy, sx), axis=(0, 1)))
    assert np.max(np.abs(shifted - np.roll(net(w), (sy, sx), axis=(0, 1)))) < 1e-10


def test_shape_guard():
    net = CnnRhs.initialize(2)
    net.shape = (8, 8)
    with pytest.raises(DimensionError):
        net(np.zeros((16, 16)))
    with pytest.raises(DimensionError):
        CnnRhs.initialize(2)(np.zeros(5))


def test_save_load_roundtrip(tmp_path):
    net = CnnRhs.initialize(3, seed=2)
    net.norm = {"w_mean": 0.5, "w_std": 2.0, "r_mean": 0.0, "r_std": 1.0}
    net.shape = (8, 8)
    net.save(tmp_path / "n.ckpt", {"seed": 2})
    back, meta = CnnRhs.load(tmp_path / "n.ckpt")
    assert meta["seed"] == 2 and back.shape == (8, 8) and back.norm == net.norm
    w = np.random.default_rng(1).standard_normal((8, 8))
    np.testing.assert_array_equal(back(w), net(w))


def test_forward_gradcheck(rng):
    net = CnnRhs.initialize(3, seed=3)
    x = rng.standard_normal((2, 6, 6))
    target = rng.standard_normal((2, 6, 6))

    def build(tape, leaves):
        named = dict(zip(net.names, leaves))
        return ad.mse(net.forward(named, tape.constant(x)), tape.constant(target))

    assert ad.gradcheck(build, net.param_list(), n_probe=25, rng=rng) < 1e-4


def test_true_rhs_rollout_is_bit_identical_to_solver(small_run):
    g = Grid2D(16, 16)
    ro = rollout_node(lambda w: vortex_rhs(w, g, 1000.0), small_run.omega.field(0), 0.02, 30)
    assert not ro.truncated
    assert ro.omega.data.tobytes() == small_run.omega.data.tobytes()
    assert ro.rhs.data.tobytes() == small_run.rhs.data.tobytes()
    np.testing.assert_array_equal(l2_error_series(ro.omega, small_run.omega), 0.0)


def test_rollout_truncates_on_blowup():
    ro = rollout_node(lambda w: 50.0 * w, np.ones((4, 4)), 0.1, 100)
    assert ro.truncated and ro.stopped_at is not None
    assert ro.omega.n_cols == ro.stopped_at + 1


def test_l2_series_shape_mismatch():
    with pytest.raises(DimensionError):
        l2_error_series(np.zeros((4, 3)), np.zeros((4, 2)))


def test_config_validation():
    with pytest.raises(ParameterError):
        NodeTrainConfig(loss_mode="adjoint")
    with pytest.raises(ParameterError):
        NodeTrainConfig(batch_size=0)


def test_too_many_training_samples(small_run):
    with pytest.raises(ParameterError):
        train_node(CnnRhs.initialize(2), small_run.omega, small_run.rhs, NodeTrainConfig(n_train=31))


@pytest.mark.parametrize("mode", ["derivative", "one-step"])
def test_training_reduces_loss_and_is_deterministic(small_run, mode):
    conf = NodeTrainConfig(n_train=20, epochs=15, lr=3e-3, batch_size=5, loss_mode=mode)
    r1 = train_node(CnnRhs.initialize(4, seed=0), small_run.omega, small_run.rhs, conf)
    r2 = train_node(CnnRhs.initialize(4, seed=0), small_run.omega, small_run.rhs, conf)
    assert r1.history == r2.history
    assert r1.final_loss < r1.initial_loss
    assert r1.net.shape == (16, 16)


def test_training_ignores_input_memory_layout(small_run):
    """Snapshots read back from disk are column-major; results must not change."""
    conf = NodeTrainConfig(n_train=20, epochs=5, lr=3e-3, batch_size=5)
    om, rh = small_run.omega, small_run.rhs
    fortran = [SnapshotMatrix(np.asfortranarray(m.data), m.times, m.field_shape) for m in (om, rh)]
    assert fortran[0].data.flags["F_CONTIGUOUS"] != om.data.flags["F_CONTIGUOUS"]
    r1 = train_node(CnnRhs.initialize(4, seed=0), om, rh, conf)
    r2 = train_node(CnnRhs.initialize(4, seed=0), *fortran, conf)
    assert r1.history == r2.history
    for k in r1.net.names:
        assert np.array_equal(r1.net.params[k], r2.net.params[k])
