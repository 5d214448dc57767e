"""Convolutional neural ODE for the vorticity equation.

A small periodic CNN maps a vorticity field to its full time derivative;
rollouts integrate it with the same SSP-RK3 loop as the reference solver.

Layout: a 3x3 lift 1 -> C with relu, three residual blocks
``h <- h + relu(conv3x3(h))`` at width C, and a 1x1 projection C -> 1.
Inputs and targets are optionally standardised by scalar mean/std pairs
stored with the weights, which keeps the map translation-equivariant.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import DimensionError, NonFiniteError, ParameterError, TrainingDivergedError
from .integrate import integrate
from .optim import Adam
from .storage import SnapshotMatrix, read_checkpoint, write_checkpoint

log = logging.getLogger(__name__)

N_RESIDUAL = 3
EVAL_CHUNK = 10  # samples per tape when scoring the whole training set


class CnnRhs:
    """Periodic CNN approximating ``d omega / dt``."""

    def __init__(self, channels: int = 32, params: dict | None = None, norm: dict | None = None, shape=None):
        self.channels = int(channels)
        self.names = ["K0", "b0"]
        for i in range(1, N_RESIDUAL + 1):
            self.names += [f"K{i}", f"b{i}"]
        self.names += ["Kp", "bp"]
        self.params = params if params is not None else {}
        self.norm = dict(norm or {"w_mean": 0.0, "w_std": 1.0, "r_mean": 0.0, "r_std": 1.0})
        self.shape = tuple(shape) if shape is not None else None

    @classmethod
    def initialize(cls, channels: int = 32, seed: int = 0, zero_output: bool = False) -> "CnnRhs":
        """Glorot-uniform kernels (fan = channels * taps), zero biases."""
        net = cls(channels)
        rng = np.random.default_rng(seed)
        c = net.channels

        def glorot(shape):
            fan_out = shape[0] * shape[2] * shape[3]
            fan_in = shape[1] * shape[2] * shape[3]
            lim = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-lim, lim, size=shape)

        net.params["K0"] = glorot((c, 1, 3, 3))
        net.params["b0"] = np.zeros(c)
        for i in range(1, N_RESIDUAL + 1):
            net.params[f"K{i}"] = glorot((c, c, 3, 3))
            net.params[f"b{i}"] = np.zeros(c)
        net.params["Kp"] = np.zeros((1, c, 1, 1)) if zero_output else glorot((1, c, 1, 1))
        net.params["bp"] = np.zeros(1)
        return net

    def param_list(self) -> list[np.ndarray]:
        return [self.params[k] for k in self.names]

    def copy(self) -> "CnnRhs":
        return CnnRhs(self.channels, {k: v.copy() for k, v in self.params.items()}, self.norm, self.shape)

    def set_normalization(self, omega, rhs) -> None:
        w = np.asarray(omega)
        r = np.asarray(rhs)
        self.norm = {
            "w_mean": float(w.mean()),
            "w_std": float(w.std()) or 1.0,
            "r_mean": float(r.mean()),
            "r_std": float(r.std()) or 1.0,
        }

    def forward_normalized(self, leaves: dict, x: ad.Var) -> ad.Var:
        """Tape forward on standardised input ``(1, B, H, W)``; returns standardised output."""
        h = ad.relu(ad.conv2d(x, leaves["K0"], leaves["b0"]))
        for i in range(1, N_RESIDUAL + 1):
            h = ad.add(h, ad.relu(ad.conv2d(h, leaves[f"K{i}"], leaves[f"b{i}"])))
        return ad.conv2d(h, leaves["Kp"], leaves["bp"])

    def forward(self, leaves: dict, omega: ad.Var) -> ad.Var:
        """Tape forward in physical units; ``omega`` is ``(B, H, W)``."""
        tape = omega.tape
        n = self.norm
        x = ad.scale(ad.add(omega, tape.constant(np.full(omega.shape, -n["w_mean"]))), 1.0 / n["w_std"])
        B, H, W = omega.shape
        y = self.forward_normalized(leaves, ad.reshape(x, (1, B, H, W)))
        y = ad.reshape(y, (B, H, W))
        return ad.add(ad.scale(y, n["r_std"]), tape.constant(np.full((B, H, W), n["r_mean"])))

    def __call__(self, omega) -> np.ndarray:
        """Predicted tendency for one field ``(H, W)`` or a batch ``(B, H, W)``."""
        return cnn_forward(self, omega)

    def save(self, path, meta: dict | None = None) -> str:
        info = {
            "kind": "node",
            "channels": self.channels,
            "residual_blocks": N_RESIDUAL,
            "residual_placement": "lift plain, blocks 2-4 residual",
            "norm": self.norm,
            "shape": list(self.shape) if self.shape else None,
        }
        info.update(meta or {})
        return write_checkpoint(path, {k: self.params[k] for k in self.names}, info)

    @classmethod
    def load(cls, path) -> tuple["CnnRhs", dict]:
        arrays, meta = read_checkpoint(path)
        if meta.get("kind") != "node":
            raise ParameterError(f"{path} is not a neural-ODE checkpoint")
        return cls(meta["channels"], arrays, meta["norm"], meta.get("shape")), meta


def cnn_forward(net: CnnRhs, omega) -> np.ndarray:
    w = np.asarray(omega, dtype=np.float64)
    single = w.ndim == 2
    if w.ndim not in (2, 3):
        raise DimensionError(f"expected a field (H, W) or batch (B, H, W), got {w.shape}")
    if net.shape is not None and w.shape[-2:] != net.shape:
        raise DimensionError(f"network trained on {net.shape} fields, got {w.shape[-2:]}")
    tape = ad.Tape(check_finite=False)
    leaves = {k: tape.constant(v) for k, v in net.params.items()}
    out = net.forward(leaves, tape.constant(w[None] if single else w)).value
    tape.release()
    return out[0] if single else out


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class NodeTrainConfig:
    n_train: int = 100
    epochs: int = 2000
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int | None = None  # None: full batch
    seed: int = 0
    loss_mode: str = "derivative"  # or "one-step"
    standardize: bool = True
    dt: float = 0.02  # used by the one-step loss

    def __post_init__(self):
        if self.loss_mode not in ("derivative", "one-step"):
            raise ParameterError(f"loss_mode must be 'derivative' or 'one-step', got {self.loss_mode!r}")
        if self.n_train < 1:
            raise ParameterError("n_train must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ParameterError("batch_size must be >= 1")


@dataclass
class NodeTrainResult:
    net: CnnRhs
    history: list[float] = field(default_factory=list)  # mean normalised loss per epoch
    target_variance: float = float("nan")  # variance of the standardised targets
    initial_loss: float = float("nan")
    final_loss: float = float("nan")


def _fields(snaps) -> np.ndarray:
    # C order regardless of how the snapshots were stored, so that training
    # rounds identically for in-memory and on-disk inputs
    if isinstance(snaps, SnapshotMatrix):
        return np.ascontiguousarray(snaps.data.T.reshape((snaps.n_cols, *snaps.field_shape)))
    return np.ascontiguousarray(snaps, dtype=np.float64)


def _rk3_tape(net: CnnRhs, leaves, w: ad.Var, dt: float) -> ad.Var:
    k0 = net.forward(leaves, w)
    u1 = ad.add(w, ad.scale(k0, dt))
    k1 = net.forward(leaves, u1)
    u2 = ad.add(ad.scale(w, 0.75), ad.scale(ad.add(u1, ad.scale(k1, dt)), 0.25))
    k2 = net.forward(leaves, u2)
    return ad.add(ad.scale(w, 1.0 / 3.0), ad.scale(ad.add(u2, ad.scale(k2, dt)), 2.0 / 3.0))


def batch_loss(net: CnnRhs, leaves, omega_b, target_b, config: NodeTrainConfig) -> ad.Var:
    """Mean squared error in standardised target units."""
    tape = leaves["K0"].tape
    w = tape.constant(omega_b)
    if config.loss_mode == "derivative":
        pred = net.forward(leaves, w)
        scale = net.norm["r_std"]
    else:
        pred = _rk3_tape(net, leaves, w, config.dt)
        scale = net.norm["w_std"]
    return ad.scale(ad.mse(pred, tape.constant(target_b)), 1.0 / scale**2)


def train_node(net: CnnRhs, omega_snaps, rhs_snaps, config: NodeTrainConfig) -> NodeTrainResult:
    """Fit the CNN to the first ``n_train`` (omega, target) pairs.

    Derivative mode targets the recorded tendencies; one-step mode targets
    the next vorticity field after one SSP-RK3 step of size ``config.dt``.
    """
    W = _fields(omega_snaps)
    R = _fields(rhs_snaps)
    need = config.n_train + (1 if config.loss_mode == "one-step" else 0)
    if config.n_train > R.shape[0] or need > W.shape[0]:
        raise ParameterError(f"n_train={config.n_train} exceeds the {R.shape[0]} available snapshots")
    X = W[: config.n_train]
    Y = R[: config.n_train] if config.loss_mode == "derivative" else W[1 : config.n_train + 1]
    if config.standardize:
        net.set_normalization(X, R[: config.n_train])
    net.shape = X.shape[1:]
    scale = net.norm["r_std"] if config.loss_mode == "derivative" else net.norm["w_std"]
    result = NodeTrainResult(net=net, target_variance=float(np.var(Y) / scale**2))

    rng = np.random.default_rng(config.seed)
    params = net.param_list()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    bs = config.batch_size or config.n_train

    def full_loss() -> float:
        total = 0.0
        for s in range(0, config.n_train, EVAL_CHUNK):
            sl = slice(s, min(s + EVAL_CHUNK, config.n_train))
            tape = ad.Tape(check_finite=False)
            leaves = {k: tape.constant(v) for k, v in net.params.items()}
            total += float(batch_loss(net, leaves, X[sl], Y[sl], config).value) * (sl.stop - sl.start)
            tape.release()
        return total / config.n_train

    result.initial_loss = full_loss()
    for epoch in range(config.epochs):
        order = rng.permutation(config.n_train)
        total = 0.0
        for s in range(0, config.n_train, bs):
            idx = np.sort(order[s : s + bs])
            tape = ad.Tape()
            leaves = {k: tape.var(net.params[k]) for k in net.names}
            try:
                loss = batch_loss(net, leaves, X[idx], Y[idx], config)
            except NonFiniteError as exc:
                tape.release()
                raise TrainingDivergedError(epoch + 1) from exc
            ad.backward(tape, loss)
            grads = [leaves[k].grad for k in net.names]
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(epoch + 1)
            opt.step(grads)
            total += float(loss.value) * idx.size
            tape.release()
        mean = total / config.n_train
        if not np.isfinite(mean):
            raise TrainingDivergedError(epoch + 1)
        result.history.append(mean)
        if (epoch + 1) % 10 == 0:
            log.info("node epoch %d: loss %.4e", epoch + 1, mean)
    result.final_loss = full_loss()
    return result


# ---------------------------------------------------------------------------
# rollout and error series
# ---------------------------------------------------------------------------


@dataclass
class NodeRollout:
    omega: SnapshotMatrix
    rhs: SnapshotMatrix
    truncated: bool = False
    stopped_at: int | None = None


def rollout_node(net, omega0, dt: float, n_steps: int, blowup_factor: float = 1e3, meta: dict | None = None) -> NodeRollout:
    """SSP-RK3 rollout with the learned tendency.

    ``net`` may be a :class:`CnnRhs` or any callable mapping a field to its
    tendency (e.g. the exact solver right-hand side). The march is
    truncated, with a warning, once ``max|omega|`` exceeds
    ``blowup_factor`` times its initial value or turns non-finite.
    """
    w0 = np.asarray(omega0, dtype=np.float64)
    if w0.ndim != 2:
        raise DimensionError(f"initial field must be 2-D, got {w0.shape}")
    shape = w0.shape
    limit = blowup_factor * max(float(np.max(np.abs(w0))), np.finfo(float).tiny)

    def rhs(v):
        return np.asarray(net(v.reshape(shape)), dtype=np.float64).reshape(-1)

    def abort(v, k):
        return float(np.max(np.abs(v))) > limit

    traj = integrate(w0.reshape(-1), rhs, dt, n_steps, record_rhs=True, abort=abort)
    n = len(traj.states)
    times = np.arange(n) * dt
    info = dict(meta or {}, model="node", dt=dt, truncated=traj.truncated)
    return NodeRollout(
        omega=SnapshotMatrix.from_fields([s.reshape(shape) for s in traj.states], times, dict(info, kind="omega")),
        rhs=SnapshotMatrix.from_fields([r.reshape(shape) for r in traj.rhs], times[: len(traj.rhs)], dict(info, kind="rhs"))
        if traj.rhs
        else SnapshotMatrix(np.zeros((w0.size, 0)), np.zeros(0), shape, dict(info, kind="rhs")),
        truncated=traj.truncated,
        stopped_at=traj.stopped_at,
    )


def l2_error_series(pred, truth) -> np.ndarray:
    """Per-snapshot 2-norm of the difference, summed over the grid."""
    P = pred.data if isinstance(pred, SnapshotMatrix) else np.asarray(pred)
    T = truth.data if isinstance(truth, SnapshotMatrix) else np.asarray(truth)
    if P.shape != T.shape:
        raise DimensionError(f"trajectories differ in shape: {P.shape} vs {T.shape}")
    return np.sqrt(np.sum((P - T) ** 2, axis=0))


def config_dict(config: NodeTrainConfig) -> dict:
    return asdict(config)
