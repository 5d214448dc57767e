"""Sliding-window DEIM over streams of right-hand-side snapshots.

Each window of consecutive tendency fields is compressed by a thin SVD and
the greedy DEIM points of its leading left singular vectors are recorded.
Following a slot (greedy rank) across windows gives a sampling-point
trajectory; comparing the point sets of two streams window by window
measures how far a learned model's dynamics drift from the reference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DimensionError, InputError, ParameterError
from .linalg import thin_svd
from .rom import greedy_indices
from .storage import SnapshotMatrix

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class WindowSpec:
    window_size: int = 20
    stride: int = 1
    n_points: int = 16

    def __post_init__(self):
        if self.stride < 1:
            raise ParameterError(f"stride must be >= 1, got {self.stride}")
        if self.n_points < 1:
            raise ParameterError(f"n_points must be >= 1, got {self.n_points}")
        if self.window_size < self.n_points:
            raise ParameterError(f"window_size {self.window_size} is smaller than n_points {self.n_points}")


def window_count(n_snapshots: int, spec: WindowSpec) -> int:
    if n_snapshots < spec.window_size:
        raise InputError(f"stream of {n_snapshots} snapshots is shorter than the window ({spec.window_size})")
    return (n_snapshots - spec.window_size) // spec.stride + 1


def _data(stream) -> np.ndarray:
    return stream.data if isinstance(stream, SnapshotMatrix) else np.asarray(stream, dtype=np.float64)


def window_snapshots(stream, spec: WindowSpec) -> list[np.ndarray]:
    """Column blocks ``[i*stride, i*stride + window_size)`` of the stream."""
    D = _data(stream)
    count = window_count(D.shape[1], spec)
    return [D[:, i * spec.stride : i * spec.stride + spec.window_size] for i in range(count)]


@dataclass(frozen=True)
class WindowPoints:
    indices: np.ndarray  # greedy order
    rank: int
    degraded: bool


def window_points(window, n_points: int, rank_tol: float = 1e-10) -> WindowPoints:
    """Greedy DEIM points of the leading left singular vectors of a window.

    When the window's numerical rank (singular values above
    ``rank_tol * sigma_max``) is below ``n_points`` only that many points
    are returned and the result is flagged as degraded.
    """
    W = np.asarray(window, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError(f"window must be 2-D, got {W.shape}")
    # The left singular vectors do not depend on column order, but rounding
    # does; a canonical order makes the result bit-identical under any
    # permutation of the snapshots.
    order = sorted(range(W.shape[1]), key=lambda j: W[:, j].tobytes())
    svd = thin_svd(np.ascontiguousarray(W[:, order]))
    smax = float(svd.sigma[0]) if svd.sigma.size else 0.0
    rank = int(np.sum(svd.sigma > rank_tol * smax)) if smax > 0 else 0
    k = min(n_points, rank)
    if k == 0:
        return WindowPoints(np.zeros(0, dtype=np.int64), 0, True)
    idx = greedy_indices(svd.U[:, :k])
    return WindowPoints(idx, rank, k < n_points)


def index_to_xy(indices, grid_shape) -> np.ndarray:
    """Flat C-order indices of an ``(ny, nx)`` field to ``(x, y)`` on [0, 2pi)^2."""
    ny, nx = grid_shape
    j, i = np.divmod(np.asarray(indices, dtype=np.int64), nx)
    return np.stack([i * (TWO_PI / nx), j * (TWO_PI / ny)], axis=-1)


def _cell_distance(a, b, grid_shape) -> np.ndarray:
    """Periodic Euclidean distance in grid cells between index arrays (broadcast)."""
    ny, nx = grid_shape
    ja, ia = np.divmod(np.asarray(a), nx)
    jb, ib = np.divmod(np.asarray(b), nx)
    di = np.abs(ia - ib)
    dj = np.abs(ja - jb)
    di = np.minimum(di, nx - di)
    dj = np.minimum(dj, ny - dj)
    return np.sqrt(di**2 + dj**2)


@dataclass
class PointTrajectory:
    """Per-window sampling points; ``indices[w, s]`` is -1 where a window has fewer points."""

    starts: np.ndarray
    indices: np.ndarray
    counts: np.ndarray
    degraded: np.ndarray
    grid_shape: tuple
    mode: str = "slot"

    @property
    def n_windows(self) -> int:
        return int(self.starts.size)

    def coordinates(self) -> np.ndarray:
        xy = index_to_xy(np.where(self.indices >= 0, self.indices, 0), self.grid_shape)
        xy[self.indices < 0] = np.nan
        return xy

    def slot(self, s: int) -> np.ndarray:
        return self.indices[:, s]

    def rows(self):
        """``(window_index, slot, grid_index, x, y)`` records for CSV export."""
        xy = self.coordinates()
        for w in range(self.n_windows):
            for s in range(int(self.counts[w])):
                yield (w, s, int(self.indices[w, s]), float(xy[w, s, 0]), float(xy[w, s, 1]))


def _reassociate(prev, cur, grid_shape) -> np.ndarray:
    """Reorder ``cur`` so each slot continues the nearest point of ``prev``."""
    k = min(prev.size, cur.size)
    if k == 0:
        return cur
    cost = _cell_distance(prev[:k, None], cur[None, :], grid_shape)
    rows, cols = linear_sum_assignment(cost)
    order = list(cols[np.argsort(rows)])
    rest = [c for c in range(cur.size) if c not in set(order)]
    return cur[order + rest]


def trajectories(stream, spec: WindowSpec, grid_shape, mode: str = "slot") -> PointTrajectory:
    """Windowed DEIM points of a tendency stream.

    ``mode="slot"`` keeps greedy rank as slot identity; ``mode="nearest"``
    re-orders each window's points to follow the previous window's points
    by minimum total periodic distance.
    """
    if mode not in ("slot", "nearest"):
        raise ParameterError(f"mode must be 'slot' or 'nearest', got {mode!r}")
    D = _data(stream)
    if D.shape[0] != int(np.prod(grid_shape)):
        raise DimensionError(f"stream rows {D.shape[0]} do not match grid {grid_shape}")
    wins = window_snapshots(D, spec)
    idx = -np.ones((len(wins), spec.n_points), dtype=np.int64)
    counts = np.zeros(len(wins), dtype=np.int64)
    degraded = np.zeros(len(wins), dtype=bool)
    prev = None
    for w, block in enumerate(wins):
        res = window_points(block, spec.n_points)
        pts = res.indices
        if mode == "nearest" and prev is not None:
            pts = _reassociate(prev, pts, grid_shape)
        idx[w, : pts.size] = pts
        counts[w] = pts.size
        degraded[w] = res.degraded
        prev = pts
    if degraded.any():
        log.info("%d of %d windows have rank below %d", int(degraded.sum()), len(wins), spec.n_points)
    starts = np.arange(len(wins)) * spec.stride
    return PointTrajectory(starts, idx, counts, degraded, tuple(grid_shape), mode)


@dataclass
class DivergenceReport:
    matched_distance: np.ndarray  # per window: mean matched periodic cell distance
    slot_displacement: np.ndarray  # windows x slots, nan where a slot is missing
    truth: PointTrajectory
    model: PointTrajectory
    meta: dict = field(default_factory=dict)

    def rows(self):
        for w, d in enumerate(self.matched_distance):
            yield (w, float(d), int(self.truth.counts[w]), int(self.model.counts[w]))


def point_set_distance(a, b, grid_shape) -> float:
    """Mean periodic cell distance under the minimum-cost matching of two point sets."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.size == 0 or b.size == 0:
        return float("nan") if a.size != b.size else 0.0
    cost = _cell_distance(a[:, None], b[None, :], grid_shape)
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean())


def compare_streams(truth_rhs, model_rhs, spec: WindowSpec, grid_shape) -> DivergenceReport:
    """Window-by-window comparison of the DEIM points of two tendency streams."""
    T = _data(truth_rhs)
    M = _data(model_rhs)
    if T.shape != M.shape:
        raise DimensionError(f"streams differ in shape: {T.shape} vs {M.shape}")
    tt = trajectories(T, spec, grid_shape)
    mt = trajectories(M, spec, grid_shape)
    dist = np.array(
        [
            point_set_distance(tt.indices[w, : tt.counts[w]], mt.indices[w, : mt.counts[w]], grid_shape)
            for w in range(tt.n_windows)
        ]
    )
    valid = (tt.indices >= 0) & (mt.indices >= 0)
    disp = np.full(tt.indices.shape, np.nan)
    disp[valid] = _cell_distance(tt.indices[valid], mt.indices[valid], grid_shape)
    return DivergenceReport(dist, disp, tt, mt, {"spec": [spec.window_size, spec.stride, spec.n_points]})


# ---------------------------------------------------------------------------
# trajectory metrics
# ---------------------------------------------------------------------------


def winding(traj: PointTrajectory, slot: int = 0, center=(np.pi, np.pi)) -> np.ndarray:
    """Unwrapped polar angle of a slot's point about ``center``, per window."""
    xy = traj.coordinates()[:, slot]
    ang = np.arctan2(xy[:, 1] - center[1], xy[:, 0] - center[0])
    ok = np.isfinite(ang)
    out = np.full(ang.shape, np.nan)
    out[ok] = np.unwrap(ang[ok])
    return out


def revisit_count(traj: PointTrajectory, slot: int = 0) -> int:
    """Windows whose slot point returns to a position held earlier and since left.

    Staying put across consecutive windows does not count; only returns do.
    """
    seen: set[int] = set()
    prev = None
    count = 0
    for p in traj.slot(slot):
        p = int(p)
        if p < 0:
            prev = None
            continue
        if p != prev:
            if p in seen:
                count += 1
            seen.add(p)
        prev = p
    return count
