"""Learned adaptive DEIM sampling for the Burgers ROM.

A fully connected network maps the current reconstruction ``u = Psi a`` and
the coefficients ``a`` to an ``n x l`` logit matrix, one column per sampling
slot. During training each column is relaxed with a temperature softmax
(optionally after adding Gumbel noise) and the relaxed selection replaces
the one-hot sampling matrix inside a differentiable SSP-RK3 rollout. At
inference each column is reduced to its argmax, giving an ordinary DEIM
operator with ``l`` distinct points.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .burgers import Grid1D
from .errors import DimensionError, NonFiniteError, ParameterError, SingularMatrixError, TrainingDivergedError
from .linalg import lu_factor
from .optim import Adam
from .rom import DeimOperator, GalerkinRom, deim_operator, run_rom
from .storage import SnapshotMatrix, read_checkpoint, write_checkpoint

log = logging.getLogger(__name__)

RIDGE = 1e-8
RIDGE_PIVOT_TOL = 1e-10


class SamplerNet:
    """Dense relu network ``(n + m) -> hidden... -> n * l``."""

    def __init__(self, n: int, m: int, l: int, hidden=(256, 256), params: dict | None = None):
        self.n, self.m, self.l = int(n), int(m), int(l)
        self.hidden = tuple(int(h) for h in hidden)
        widths = [self.n + self.m, *self.hidden, self.n * self.l]
        self.names = []
        for i in range(len(widths) - 1):
            self.names += [f"W{i}", f"b{i}"]
        self.widths = widths
        self.params = params if params is not None else {}

    @classmethod
    def initialize(
        cls,
        n,
        m,
        l,
        hidden=(256, 256),
        seed: int = 0,
        warm_indices=None,
        warm_logit: float = 0.0,
        warm_width: float = 0.0,
        zero_output: bool = False,
    ):
        """Glorot-uniform weights, zero biases.

        With ``warm_indices`` the output bias of slot ``s`` is a bump of
        height ``warm_logit`` centred on row ``warm_indices[s]`` (Gaussian
        profile of ``warm_width`` grid cells; zero width means a single
        row), so the untrained argmax reproduces those points while nearby
        rows keep some probability under relaxation. ``zero_output``
        zeroes the last weight matrix so the logits reduce to the bias.
        """
        net = cls(n, m, l, hidden)
        rng = np.random.default_rng(seed)
        for i in range(len(net.widths) - 1):
            fi, fo = net.widths[i], net.widths[i + 1]
            lim = np.sqrt(6.0 / (fi + fo))
            net.params[f"W{i}"] = rng.uniform(-lim, lim, size=(fi, fo))
            net.params[f"b{i}"] = np.zeros((1, fo))
        last = len(net.widths) - 2
        if zero_output:
            net.params[f"W{last}"][...] = 0.0
        if warm_indices is not None:
            bias = net.params[f"b{last}"].reshape(n, l)
            p = np.asarray(warm_indices)
            if warm_width > 0.0:
                d = np.arange(n)[:, None] - p[None, :]
                bias[...] = warm_logit * np.exp(-0.5 * (d / warm_width) ** 2)
            else:
                bias[p, np.arange(l)] = warm_logit
        return net

    def param_list(self) -> list[np.ndarray]:
        return [self.params[k] for k in self.names]

    def copy(self) -> "SamplerNet":
        return SamplerNet(self.n, self.m, self.l, self.hidden, {k: v.copy() for k, v in self.params.items()})

    def _check(self, u, a):
        if np.shape(u) != (self.n,) or np.shape(a) != (self.m,):
            raise DimensionError(f"sampler expects u ({self.n},) and a ({self.m},), got {np.shape(u)} and {np.shape(a)}")

    def logits(self, u, a) -> np.ndarray:
        """Plain numpy forward pass, ``(n, l)``."""
        self._check(u, a)
        h = np.concatenate([u, a])[None, :]
        last = len(self.widths) - 2
        for i in range(last + 1):
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < last:
                h = np.maximum(h, 0.0)
        return h.reshape(self.n, self.l)

    def forward(self, leaves: dict, u: ad.Var, a: ad.Var) -> ad.Var:
        """Tape forward pass; ``leaves`` maps parameter names to Vars."""
        self._check(u.value, a.value)
        h = ad.reshape(ad.concat([u, a]), (1, self.n + self.m))
        last = len(self.widths) - 2
        for i in range(last + 1):
            h = ad.add(ad.matmul(h, leaves[f"W{i}"]), leaves[f"b{i}"])
            if i < last:
                h = ad.relu(h)
        return ad.reshape(h, (self.n, self.l))

    def save(self, path, meta: dict | None = None) -> str:
        info = {"kind": "sampler", "n": self.n, "m": self.m, "l": self.l, "hidden": list(self.hidden)}
        info.update(meta or {})
        return write_checkpoint(path, {k: self.params[k] for k in self.names}, info)

    @classmethod
    def load(cls, path) -> tuple["SamplerNet", dict]:
        arrays, meta = read_checkpoint(path)
        if meta.get("kind") != "sampler":
            raise ParameterError(f"{path} is not a sampler checkpoint")
        return cls(meta["n"], meta["m"], meta["l"], meta["hidden"], arrays), meta


def relax(logits: ad.Var, tau: float, rng: np.random.Generator | None = None, noise: bool = False) -> ad.Var:
    """Column-wise (Gumbel-)softmax relaxation of a logit matrix."""
    if not tau > 0.0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    z = logits
    if noise:
        if rng is None:
            raise ParameterError("Gumbel noise requested without a generator")
        z = ad.add(z, logits.tape.constant(ad.gumbel_noise(logits.shape, rng)))
    return ad.softmax_temperature(z, tau, axis=0)


class SoftDeim:
    """Relaxed DEIM map ``Psi^T Phi (Pi^T Phi)^{-1} Pi^T N`` on a tape.

    The ``l x l`` system is built once per selection and reused for every
    nonlinear vector fed to :meth:`apply`.
    """

    def __init__(self, Pi: ad.Var, Phi, PsiT_Phi):
        tape = Pi.tape
        self.PiT = ad.transpose(Pi)
        M = ad.matmul(self.PiT, tape.constant(Phi))
        self.regularized = False
        try:
            self.factors = lu_factor(M.value, RIDGE_PIVOT_TOL)
        except SingularMatrixError:
            self.regularized = True
            log.debug("relaxed interpolation matrix near-singular; adding %.0e ridge", RIDGE)
            M = ad.add(M, tape.constant(RIDGE * np.eye(M.shape[0])))
            self.factors = lu_factor(M.value, 0.0)
        self.M = M
        self.left = tape.constant(PsiT_Phi)

    def apply(self, nonlinear_full: ad.Var) -> ad.Var:
        s = ad.matmul(self.PiT, nonlinear_full)
        return ad.matmul(self.left, ad.solve(self.M, s, self.factors))


def soft_deim_apply(Pi: ad.Var, Phi, Psi, nonlinear_full: ad.Var) -> ad.Var:
    return SoftDeim(Pi, Phi, np.asarray(Psi).T @ np.asarray(Phi)).apply(nonlinear_full)


def dedup_argmax(scores) -> np.ndarray:
    """Column argmaxes, taking the best untaken row when a row is already used.

    Columns are processed in slot order; ties go to the lowest row index.
    """
    scores = np.asarray(scores)
    n, l = scores.shape
    if l > n:
        raise DimensionError(f"cannot choose {l} distinct rows out of {n}")
    taken = np.zeros(n, dtype=bool)
    out = np.empty(l, dtype=np.int64)
    for s in range(l):
        for i in np.argsort(-scores[:, s], kind="stable"):
            if not taken[i]:
                out[s] = i
                taken[i] = True
                break
    return out


def infer_points(net: SamplerNet, u, a, Phi, Psi=None, fallback: DeimOperator | None = None):
    """Hard point selection for one step.

    Returns ``(operator, used_fallback)``. If the selected rows make
    ``P^T Phi`` singular the ``fallback`` operator is returned instead.
    """
    idx = dedup_argmax(net.logits(u, a))
    try:
        return deim_operator(Phi, idx, Psi), False
    except SingularMatrixError:
        if fallback is None:
            raise
        log.debug("adaptive points %s give a singular system; using static DEIM for this step", idx.tolist())
        return fallback, True


class AdaptiveSampler:
    """Per-step provider for :func:`deimlab.rom.run_rom`."""

    def __init__(self, net: SamplerNet, rom: GalerkinRom, Phi, fallback: DeimOperator):
        self.net = net
        self.rom = rom
        self.Phi = np.asarray(Phi)
        self.fallback = fallback
        self.fallbacks = 0

    def __call__(self, a, step: int) -> DeimOperator:
        op, used = infer_points(self.net, self.rom.reconstruct(a), a, self.Phi, self.rom.Psi, self.fallback)
        self.fallbacks += int(used)
        return op


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    segment: int = 20
    tau_start: float = 1.0
    tau_end: float = 0.3
    noise: bool = True
    seed: int = 0
    net_input: str = "rom"  # "rom": u = Psi a; "fom": FOM snapshot
    eval_every: int = 1
    shuffle: bool = True
    clip: float | None = 1.0  # global gradient-norm cap

    def __post_init__(self):
        if not (self.tau_start > 0 and self.tau_end > 0):
            raise ParameterError("temperatures must stay positive")
        if self.segment < 1:
            raise ParameterError("segment length must be >= 1")
        if self.net_input not in ("rom", "fom"):
            raise ParameterError(f"net_input must be 'rom' or 'fom', got {self.net_input!r}")

    def tau(self, epoch: int) -> float:
        if self.epochs <= 1:
            return self.tau_end
        frac = min(epoch / (self.epochs - 1), 1.0)
        return self.tau_start + (self.tau_end - self.tau_start) * frac


@dataclass
class EpochRecord:
    epoch: int
    tau: float
    train_loss: float
    eval_mse: float
    best_mse: float
    ridge_events: int
    skipped_segments: int


@dataclass
class TrainResult:
    net: SamplerNet
    history: list[EpochRecord] = field(default_factory=list)
    initial_mse: float = float("nan")
    best_mse: float = float("nan")
    best_epoch: int = -1
    initial_loss: float = float("nan")
    final_loss: float = float("nan")


def tape_nonlinear(u: ad.Var, grid: Grid1D) -> ad.Var:
    """-d(u^2/2)/dx with the upwind direction frozen at the current value."""
    D = advection_matrix_fast(u.value, grid)
    f = ad.scale(ad.mul(u, u), 0.5)
    return ad.scale(ad.matmul(u.tape.constant(D), f), -1.0)


def advection_matrix_fast(u, grid: Grid1D) -> np.ndarray:
    n, dx = grid.n, grid.dx
    i = np.arange(1, n - 1)
    back = u[i] >= 0.0
    back[0] = False
    back[-1] = True
    D = np.zeros((n, n))
    ib, iF = i[back], i[~back]
    D[ib, ib], D[ib, ib - 1], D[ib, ib - 2] = 3.0, -4.0, 1.0
    D[iF, iF], D[iF, iF + 1], D[iF, iF + 2] = -3.0, 4.0, -1.0
    return D / (2.0 * dx)


class DifferentiableRom:
    """Soft-DEIM Galerkin rollout built on a tape."""

    def __init__(self, rom: GalerkinRom, Phi):
        self.rom = rom
        self.Phi = np.asarray(Phi, dtype=np.float64)
        self.PsiT_Phi = rom.Psi.T @ self.Phi

    def rhs(self, a: ad.Var, soft: SoftDeim) -> ad.Var:
        tape = a.tape
        u = ad.matmul(tape.constant(self.rom.Psi), a)
        lin = ad.matmul(tape.constant(self.rom.L_r), a)
        return ad.add(lin, soft.apply(tape_nonlinear(u, self.rom.grid)))

    def step(self, a: ad.Var, soft: SoftDeim, dt: float) -> ad.Var:
        k0 = self.rhs(a, soft)
        u1 = ad.add(a, ad.scale(k0, dt))
        k1 = self.rhs(u1, soft)
        u2 = ad.add(ad.scale(a, 0.75), ad.scale(ad.add(u1, ad.scale(k1, dt)), 0.25))
        k2 = self.rhs(u2, soft)
        return ad.add(ad.scale(a, 1.0 / 3.0), ad.scale(ad.add(u2, ad.scale(k2, dt)), 2.0 / 3.0))

    def select(self, net: SamplerNet, leaves: dict, a: ad.Var, tau, rng, noise, u_input=None) -> SoftDeim:
        tape = a.tape
        u = ad.matmul(tape.constant(self.rom.Psi), a) if u_input is None else tape.constant(u_input)
        Pi = relax(net.forward(leaves, u, a), tau, rng, noise)
        return SoftDeim(Pi, self.Phi, self.PsiT_Phi)

    def rollout_loss(self, net, leaves, a0, targets, dt, tau, rng=None, noise=False, fom_inputs=None):
        """Mean over steps of MSE(Psi a_k, target_k), targets given column-wise.

        Returns ``(loss, ridge_events)``.
        """
        tape = leaves[net.names[0]].tape
        a = tape.constant(a0) if not isinstance(a0, ad.Var) else a0
        Psi = tape.constant(self.rom.Psi)
        terms = []
        ridge = 0
        for k in range(targets.shape[1]):
            soft = self.select(net, leaves, a, tau, rng, noise, None if fom_inputs is None else fom_inputs[:, k])
            ridge += int(soft.regularized)
            a = self.step(a, soft, dt)
            terms.append(ad.mse(ad.matmul(Psi, a), tape.constant(targets[:, k])))
        loss = terms[0]
        for t in terms[1:]:
            loss = ad.add(loss, t)
        return ad.scale(loss, 1.0 / len(terms)), ridge


def segment_loss(net: SamplerNet, fom_states, rom: GalerkinRom, Phi, dt: float, segment: int, tau: float) -> float:
    """Noise-free relaxed training loss averaged over all segments."""
    U = fom_states.data if isinstance(fom_states, SnapshotMatrix) else np.asarray(fom_states)
    n_steps = U.shape[1] - 1
    diff = DifferentiableRom(rom, Phi)
    losses = []
    for s0 in range(0, n_steps, segment):
        s1 = min(s0 + segment, n_steps)
        tape = ad.Tape()
        leaves = {name: tape.constant(net.params[name]) for name in net.names}
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                loss, _ = diff.rollout_loss(net, leaves, rom.project(U[:, s0]), U[:, s0 + 1 : s1 + 1], dt, tau)
        except (NonFiniteError, SingularMatrixError):
            tape.release()
            return float("inf")
        losses.append(float(loss.value))
        tape.release()
    return float(np.mean(losses))


def evaluate_hard(net: SamplerNet, rom: GalerkinRom, Phi, fom_states, dt, n_steps, fallback) -> float:
    sampler = AdaptiveSampler(net, rom, Phi, fallback)
    # a blow-up surfaces as InstabilityError from run_rom
    with np.errstate(over="ignore", invalid="ignore"):
        return run_rom(rom, fom_states, dt, n_steps, sampler).mean_mse


def train(
    net: SamplerNet,
    fom_states,
    rom: GalerkinRom,
    Phi,
    config: TrainConfig,
    dt: float,
    fallback: DeimOperator,
) -> TrainResult:
    """Fit the sampler by backpropagating through segmented soft-DEIM rollouts.

    Each epoch visits every segment of ``config.segment`` steps once (each
    segment restarts from the projected FOM state). Every ``eval_every``
    epochs the hard-argmax rollout over the full horizon is scored and the
    best parameters so far are kept; the returned net holds those.
    """
    U = fom_states.data if isinstance(fom_states, SnapshotMatrix) else np.asarray(fom_states)
    n_steps = U.shape[1] - 1
    rng = np.random.default_rng(config.seed)
    diff = DifferentiableRom(rom, Phi)
    params = net.param_list()
    opt = Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    starts = list(range(0, n_steps, config.segment))

    result = TrainResult(net=net)
    best = evaluate_hard(net, rom, Phi, U, dt, n_steps, fallback)
    result.initial_mse = result.best_mse = best
    result.best_epoch = 0
    best_params = [p.copy() for p in params]
    result.initial_loss = segment_loss(net, U, rom, Phi, dt, config.segment, config.tau_start)
    log.info("sampler training: initial hard-rollout MSE %.4e, relaxed loss %.4e", best, result.initial_loss)

    for epoch in range(config.epochs):
        tau = config.tau(epoch)
        order = list(rng.permutation(starts)) if config.shuffle else starts
        total = 0.0
        ridge = 0
        skipped = 0
        for s0 in order:
            s0 = int(s0)
            s1 = min(s0 + config.segment, n_steps)
            tape = ad.Tape()
            leaves = {name: tape.var(net.params[name]) for name in net.names}
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss, r = diff.rollout_loss(
                        net,
                        leaves,
                        rom.project(U[:, s0]),
                        U[:, s0 + 1 : s1 + 1],
                        dt,
                        tau,
                        rng,
                        config.noise,
                        U[:, s0:s1] if config.net_input == "fom" else None,
                    )
            except (NonFiniteError, SingularMatrixError):
                tape.release()
                skipped += 1
                continue
            ad.backward(tape, loss)
            tape.release()
            grads = [leaves[name].grad for name in net.names]
            if not all(np.all(np.isfinite(g)) for g in grads):
                skipped += 1
                continue
            if config.clip is not None:
                gnorm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if gnorm > config.clip:
                    grads = [g * (config.clip / gnorm) for g in grads]
            opt.step(grads)
            total += float(loss.value)
            ridge += r
        if skipped == len(order):
            raise TrainingDivergedError(epoch + 1)
        if skipped:
            log.warning("epoch %d: %d of %d segments blew up in the relaxed rollout and were skipped", epoch + 1, skipped, len(order))
        mean_loss = total / (len(order) - skipped)
        eval_mse = float("nan")
        if (epoch + 1) % config.eval_every == 0 or epoch + 1 == config.epochs:
            try:
                eval_mse = evaluate_hard(net, rom, Phi, U, dt, n_steps, fallback)
            except ArithmeticError:
                eval_mse = float("inf")
            if eval_mse < best:
                best = eval_mse
                best_params = [p.copy() for p in params]
                result.best_epoch = epoch + 1
        result.history.append(EpochRecord(epoch + 1, tau, mean_loss, eval_mse, best, ridge, skipped))
        log.debug("epoch %d tau %.3f loss %.4e eval %.4e best %.4e", epoch + 1, tau, mean_loss, eval_mse, best)

    for p, b in zip(params, best_params):
        p[...] = b
    result.best_mse = best
    result.final_loss = segment_loss(net, U, rom, Phi, dt, config.segment, config.tau_start)
    return result


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
