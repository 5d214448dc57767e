import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deimlab.errors import DimensionError, InputError, ParameterError
from deimlab.windowed import (
    PointTrajectory,
    WindowSpec,
    compare_streams,
    index_to_xy,
    point_set_distance,
    revisit_count,
    trajectories,
    window_count,
    window_points,
    window_snapshots,
    winding,
)


def oracle_points(window, k):
    """numpy LAPACK SVD followed by a textbook greedy selection."""
    U = np.linalg.svd(window, full_matrices=False)[0][:, :k]
    first = np.abs(U[:, 0])
    p = [int(np.flatnonzero(first == first.max())[0])]
    for j in range(1, k):
        c = np.linalg.solve(U[p][:, :j], U[p, j])
        r = np.abs(U[:, j] - U[:, :j] @ c)
        p.append(int(np.flatnonzero(r == r.max())[0]))
    return p


def test_window_count_reference_parameters():
    assert window_count(200, WindowSpec(20, 1, 16)) == 181
    assert window_count(20, WindowSpec(20, 1, 16)) == 1
    assert window_count(45, WindowSpec(20, 5, 4)) == 6
    with pytest.raises(InputError):
        window_count(19, WindowSpec(20, 1, 4))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(1, 6), st.integers(0, 60))
def test_window_count_formula(w, s, extra):
    T = w + extra
    wins = window_snapshots(np.arange(T, dtype=float)[None, :], WindowSpec(w, s, 1))
    assert len(wins) == window_count(T, WindowSpec(w, s, 1)) == extra // s + 1
    assert all(b.shape == (1, w) for b in wins)
    assert wins[-1][0, -1] <= T - 1


def test_spec_validation():
    with pytest.raises(ParameterError):
        WindowSpec(20, 0, 4)
    with pytest.raises(ParameterError):
        WindowSpec(3, 1, 4)


@pytest.mark.parametrize("seed", range(8))
def test_points_match_composed_oracle(backend, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(16, 65))
    k = int(rng.integers(2, 7))
    W = rng.standard_normal((n, 12))
    assert window_points(W, k).indices.tolist() == oracle_points(W, k)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 64), st.integers(1, 6))
def test_points_oracle_property(seed, n, k):
    W = np.random.default_rng(seed).standard_normal((n, 10))
    res = window_points(W, k)
    assert not res.degraded
    assert res.indices.tolist() == oracle_points(W, k)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_column_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((40, 9))
    perm = rng.permutation(9)
    assert np.array_equal(window_points(W, 5).indices, window_points(W[:, perm], 5).indices)


def test_deterministic():
    W = np.random.default_rng(3).standard_normal((64, 20))
    assert np.array_equal(window_points(W, 8).indices, window_points(W.copy(), 8).indices)


def test_degraded_rank():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((30, 2)) @ rng.standard_normal((2, 10))
    res = window_points(W, 5)
    assert res.degraded and res.rank == 2 and res.indices.size == 2
    zero = window_points(np.zeros((10, 6)), 3)
    assert zero.degraded and zero.indices.size == 0


def test_index_to_xy():
    xy = index_to_xy([0, 5, 4 * 3 + 1], (4, 4))
    np.testing.assert_allclose(xy, [[0, 0], [np.pi / 2, np.pi / 2], [np.pi / 2, 3 * np.pi / 2]])


def test_point_set_distance_periodic():
    # rows 0 and 7 on an 8-cell axis are neighbours through the wrap
    assert point_set_distance([0], [7 * 8], (8, 8)) == pytest.approx(1.0)
    assert point_set_distance([1, 2], [2, 1], (8, 8)) == 0.0


@pytest.fixture(scope="module")
def stream():
    rng = np.random.default_rng(7)
    # slowly drifting low-rank stream on a 6 x 8 grid
    t = np.arange(40)
    modes = rng.standard_normal((48, 5))
    return modes @ np.stack([np.cos(0.1 * (j + 1) * t) for j in range(5)]) + 0.05 * rng.standard_normal((48, 40))


def test_trajectory_modes_share_point_sets(stream):
    spec = WindowSpec(10, 2, 4)
    a = trajectories(stream, spec, (6, 8), "slot")
    b = trajectories(stream, spec, (6, 8), "nearest")
    assert a.n_windows == b.n_windows == window_count(40, spec)
    for w in range(a.n_windows):
        assert sorted(a.indices[w]) == sorted(b.indices[w])
    np.testing.assert_array_equal(a.starts, np.arange(a.n_windows) * 2)
    assert len(list(a.rows())) == 4 * a.n_windows


def test_trajectory_grid_mismatch(stream):
    with pytest.raises(DimensionError):
        trajectories(stream, WindowSpec(10, 1, 4), (7, 8))
    with pytest.raises(ParameterError):
        trajectories(stream, WindowSpec(10, 1, 4), (6, 8), mode="fastest")


def test_identical_streams_do_not_diverge(stream):
    rep = compare_streams(stream, stream.copy(), WindowSpec(10, 1, 4), (6, 8))
    np.testing.assert_array_equal(rep.matched_distance, 0.0)
    np.testing.assert_array_equal(rep.slot_displacement, 0.0)


def manual_traj(points, grid_shape=(8, 8)):
    idx = np.asarray(points, dtype=np.int64)[:, None]
    n = idx.shape[0]
    return PointTrajectory(np.arange(n), idx, (idx[:, 0] >= 0).astype(np.int64), np.zeros(n, bool), grid_shape)


def test_revisit_count():
    assert revisit_count(manual_traj([1, 1, 1, 2, 2])) == 0
    assert revisit_count(manual_traj([1, 2, 1, 2, 3])) == 2
    assert revisit_count(manual_traj([4, 4, 9, 4, 4, 9])) == 2
    # a gap resets the notion of staying put but not the memory of seen cells
    assert revisit_count(manual_traj([3, -1, 3])) == 1


def test_winding_full_circle():
    # cells around the centre (4, 4) of an 8 x 8 grid, walked counter-clockwise twice
    ring = [4 * 8 + 6, 6 * 8 + 6, 6 * 8 + 4, 6 * 8 + 2, 4 * 8 + 2, 2 * 8 + 2, 2 * 8 + 4, 2 * 8 + 6]
    ang = winding(manual_traj(ring * 2 + ring[:1]))
    assert ang[-1] - ang[0] == pytest.approx(4 * np.pi)
