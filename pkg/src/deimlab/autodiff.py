"""Reverse-mode differentiation tape over dense float64 arrays.

A :class:`Tape` records every operation applied to its :class:`Var` objects in
append order, which is also a topological order.  :func:`backward` walks the
nodes once in reverse and accumulates gradients into the requires-grad
leaves.  Tensors are plain C-contiguous ``float64`` numpy arrays.

Only the operations the adaptive sampler and the CNN right-hand side need
are provided; shapes must match exactly (no implicit broadcasting).
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, NonFiniteError, ParameterError, UsageError
from .linalg import lu_factor, lu_solve, lu_solve_transposed

GUMBEL_CLAMP = 1e-12


def _as_tensor(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    # ascontiguousarray would promote 0-d scalars to shape (1,)
    return a if a.flags.c_contiguous else np.ascontiguousarray(a)


class _Node:
    __slots__ = ("tag", "parents", "backward")

    def __init__(self, tag: str, parents: tuple, backward: Callable | None):
        self.tag = tag
        self.parents = parents
        self.backward = backward


class Var:
    """A tensor value registered on a tape."""

    __slots__ = ("value", "node_id", "requires_grad", "tape", "grad")

    def __init__(self, value: np.ndarray, node_id: int, requires_grad: bool, tape: "Tape"):
        self.value = value
        self.node_id = node_id
        self.requires_grad = requires_grad
        self.tape = tape
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Var(id={self.node_id}, shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, _lift(self, other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _lift(self, other))

    def __rsub__(self, other):
        return sub(_lift(self, other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _lift(self, other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _lift(self, other))

    def __rmatmul__(self, other):
        return matmul(_lift(self, other), self)

    @property
    def T(self):
        return transpose(self)


def _lift(ref: Var, x) -> Var:
    return x if isinstance(x, Var) else ref.tape.constant(x)


class Tape:
    """Append-only record of operations."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[_Node] = []
        self.vars: list[Var] = []
        self.check_finite = check_finite

    def __len__(self) -> int:
        return len(self.nodes)

    def release(self) -> None:
        """Drop every recorded value and closure.

        Vars and their tape reference each other, so without this the
        arrays of a finished tape wait for the cyclic garbage collector.
        Leaf gradients already handed out stay valid.
        """
        self.nodes.clear()
        self.vars.clear()

    def var(self, value, requires_grad: bool = True) -> Var:
        """Register a leaf."""
        return self._push(_as_tensor(value), "leaf", (), None, requires_grad)

    def constant(self, value) -> Var:
        return self._push(_as_tensor(value), "const", (), None, False)

    def _push(self, value, tag, parents, backward, requires_grad) -> Var:
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(f"operation '{tag}' produced non-finite values")
        v = Var(value, len(self.nodes), requires_grad, self)
        self.nodes.append(_Node(tag, parents, backward if requires_grad else None))
        self.vars.append(v)
        return v

    def record(self, value, tag: str, parents: Sequence[Var], backward: Callable) -> Var:
        """Append an operation node.

        ``backward(g)`` must return one gradient (or None) per parent.
        """
        for p in parents:
            if p.tape is not self:
                raise UsageError(f"operand of '{tag}' belongs to a different tape")
        req = any(p.requires_grad for p in parents)
        return self._push(_as_tensor(value), tag, tuple(p.node_id for p in parents), backward, req)

    def leaves(self) -> list[Var]:
        return [v for v, n in zip(self.vars, self.nodes) if n.tag == "leaf" and v.requires_grad]


class _Product:
    """Deferred ``left @ right`` gradient contribution.

    Thin outer-product contributions to a leaf that is reused many times
    (a weight matrix applied once per time step) are collected and summed
    with a single stacked product at the end of the sweep.
    """

    __slots__ = ("left", "right")

    def __init__(self, left, right):
        self.left = left
        self.right = right

    def materialize(self) -> np.ndarray:
        return self.left @ self.right


def backward(tape: Tape, root: Var) -> dict[int, np.ndarray]:
    """Reverse-accumulate d(root)/d(leaf) for every requires-grad leaf.

    Gradients are stored on ``leaf.grad`` and returned keyed by node id.
    Leaves with no path to ``root`` receive zeros.
    """
    if root.tape is not tape:
        raise UsageError("root does not belong to this tape")
    if root.value.size != 1:
        raise UsageError(f"backward needs a scalar root, got shape {root.shape}")
    grads: dict[int, np.ndarray] = {root.node_id: np.ones_like(root.value)}
    owned: set[int] = set()  # accumulators allocated here, safe to update in place
    deferred: dict[int, list] = {}
    for nid in range(root.node_id, -1, -1):
        node = tape.nodes[nid]
        g = grads.pop(nid, None) if node.tag != "leaf" else grads.get(nid)
        if g is None or node.backward is None:
            continue
        pg = node.backward(g)
        for pid, gp in zip(node.parents, pg):
            if gp is None or not tape.vars[pid].requires_grad:
                continue
            if isinstance(gp, _Product):
                if tape.nodes[pid].tag == "leaf":
                    deferred.setdefault(pid, []).append(gp)
                    continue
                gp = gp.materialize()
            acc = grads.get(pid)
            if acc is None:
                grads[pid] = gp
            elif pid in owned and acc.shape == np.shape(gp):
                acc += gp
            else:
                grads[pid] = acc + gp
                owned.add(pid)
    for pid, items in deferred.items():
        total = np.concatenate([d.left for d in items], axis=1) @ np.concatenate([d.right for d in items], axis=0)
        grads[pid] = total if pid not in grads else grads[pid] + total
    out = {}
    for leaf in tape.leaves():
        g = grads.get(leaf.node_id)
        leaf.grad = np.zeros_like(leaf.value) if g is None else np.asarray(g).reshape(leaf.shape)
        out[leaf.node_id] = leaf.grad
    return out


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------


def _same_shape(tag, a: Var, b: Var):
    if a.shape != b.shape:
        raise DimensionError(f"{tag}: shapes {a.shape} and {b.shape} differ")


def add(a: Var, b: Var) -> Var:
    _same_shape("add", a, b)
    return a.tape.record(a.value + b.value, "add", (a, b), lambda g: (g, g))


def sub(a: Var, b: Var) -> Var:
    _same_shape("sub", a, b)
    return a.tape.record(a.value - b.value, "sub", (a, b), lambda g: (g, -g))


def mul(a: Var, b: Var) -> Var:
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return a.tape.record(av * bv, "mul", (a, b), lambda g: (g * bv, g * av))


def scale(a: Var, c: float) -> Var:
    c = float(c)
    return a.tape.record(a.value * c, "scale", (a,), lambda g: (g * c,))


def relu(a: Var) -> Var:
    mask = a.value > 0.0
    return a.tape.record(np.where(mask, a.value, 0.0), "relu", (a,), lambda g: (g * mask,))


def sum_all(a: Var) -> Var:
    shp = a.shape
    return a.tape.record(np.sum(a.value), "sum", (a,), lambda g: (np.full(shp, float(g)),))


def mse(a: Var, b: Var) -> Var:
    """Mean of squared differences, a scalar."""
    _same_shape("mse", a, b)
    d = a.value - b.value
    n = d.size

    def bw(g):
        ga = (2.0 * float(g) / n) * d
        return ga, -ga

    return a.tape.record(np.mean(d * d), "mse", (a, b), bw)


def transpose(a: Var) -> Var:
    if a.value.ndim != 2:
        raise DimensionError(f"transpose expects 2-D, got {a.shape}")
    return a.tape.record(a.value.T, "transpose", (a,), lambda g: (g.T,))


def reshape(a: Var, shape) -> Var:
    old = a.shape
    try:
        v = a.value.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {old} to {shape}") from exc
    return a.tape.record(v, "reshape", (a,), lambda g: (g.reshape(old),))


def gather_rows(a: Var, idx) -> Var:
    idx = np.asarray(idx, dtype=np.int64)
    shp = a.shape

    def bw(g):
        out = np.zeros(shp)
        np.add.at(out, idx, g)
        return (out,)

    return a.tape.record(a.value[idx], "gather_rows", (a,), bw)


def concat(parts: Sequence[Var], axis: int = 0) -> Var:
    if not parts:
        raise DimensionError("concat of an empty list")
    values = [p.value for p in parts]
    try:
        out = np.concatenate(values, axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: incompatible shapes {[v.shape for v in values]}") from exc
    cuts = np.cumsum([v.shape[axis] for v in values])[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return parts[0].tape.record(out, "concat", tuple(parts), bw)


def matmul(a: Var, b: Var) -> Var:
    """Matrix product of 2-D operands (1-D right operands act as column vectors)."""
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim not in (1, 2) or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
    need_a, need_b = a.requires_grad, b.requires_grad

    def bw(g):
        ga = gb = None
        if need_a:
            ga = np.outer(g, bv) if bv.ndim == 1 else g @ bv.T
        if need_b:
            gb = _Product(av.T, g) if g.ndim == 2 and av.shape[0] < 8 else av.T @ g
        return ga, gb

    return a.tape.record(av @ bv, "matmul", (a, b), bw)


def solve(M: Var, B: Var, factors=None) -> Var:
    """X = M^{-1} B by partial-pivot LU, differentiable in both operands.

    ``factors`` may pass a precomputed ``lu_factor(M.value)`` result so that
    several right-hand sides share one factorisation.
    """
    mv, bv = M.value, B.value
    if mv.ndim != 2 or mv.shape[0] != mv.shape[1] or bv.shape[0] != mv.shape[0]:
        raise DimensionError(f"solve: M {mv.shape} incompatible with B {bv.shape}")
    LU, perm = lu_factor(mv) if factors is None else factors
    X = lu_solve(LU, perm, bv)
    need_m = M.requires_grad

    def bw(g):
        gb = lu_solve_transposed(LU, perm, g)
        gm = None
        if need_m:
            gm = -np.outer(gb, X) if X.ndim == 1 else -(gb @ X.T)
        return gm, gb

    return M.tape.record(X, "solve", (M, B), bw)


def softmax_temperature(z: Var, tau: float, axis: int = 0) -> Var:
    """exp((z - max z)/tau) normalised along ``axis``."""
    if not tau > 0.0:
        raise ParameterError(f"softmax temperature must be positive, got {tau}")
    if z.value.size == 0:
        raise DimensionError("softmax of an empty tensor")
    zs = (z.value - np.max(z.value, axis=axis, keepdims=True)) / tau
    e = np.exp(zs)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)) / tau,)

    return z.tape.record(y, "softmax", (z,), bw)


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. standard Gumbel samples with the uniform draw clamped away from 0 and 1."""
    u = rng.random(shape)
    u = np.clip(u, GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -np.log(-np.log(u))


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------


def _shift_index(n: int, s: int, padding: str) -> np.ndarray:
    i = np.arange(n) + s
    return i % n if padding == "periodic" else np.clip(i, 0, n - 1)


def conv2d(x: Var, kernel: Var, bias: Var | None = None, padding: str = "periodic") -> Var:
    """Same-size 2-D cross-correlation.

    ``x`` is ``(C_in, H, W)`` or batched as ``(C_in, B, H, W)`` (channel
    first, so each tap is a single GEMM over all samples). ``kernel`` is
    ``(C_out, C_in, k, k)`` with odd ``k``; ``bias`` is ``(C_out,)``.
    ``padding`` is ``"periodic"`` (wrap) or ``"clamped"`` (edge replicate).
    """
    if padding not in ("periodic", "clamped"):
        raise ParameterError(f"unknown padding '{padding}'")
    xv, kv = x.value, kernel.value
    if kv.ndim != 4 or kv.shape[2] != kv.shape[3] or kv.shape[2] % 2 == 0:
        raise DimensionError(f"conv2d kernel must be (C_out, C_in, k, k) with odd k, got {kv.shape}")
    batched = xv.ndim == 4
    if xv.ndim not in (3, 4):
        raise DimensionError(f"conv2d input must be (C, H, W) or (C, B, H, W), got {xv.shape}")
    if xv.shape[0] != kv.shape[1]:
        raise DimensionError(f"conv2d channel mismatch: input {xv.shape} vs kernel {kv.shape}")
    k = kv.shape[2]
    r = k // 2
    H, W = xv.shape[-2], xv.shape[-1]
    if H < k or W < k:
        raise DimensionError(f"conv2d input {xv.shape} smaller than kernel {k}x{k}")
    if bias is not None and bias.shape != (kv.shape[0],):
        raise DimensionError(f"conv2d bias shape {bias.shape} != ({kv.shape[0]},)")

    x4 = xv if batched else xv[:, None]
    c_in, nb = x4.shape[0], x4.shape[1]
    c_out = kv.shape[0]
    npix = nb * H * W
    shifts = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]

    def shifted(f, dy, dx):
        if padding == "periodic":
            return np.roll(f, (-dy, -dx), axis=(2, 3)) if (dy or dx) else f
        iy = _shift_index(H, dy, padding)
        ix = _shift_index(W, dx, padding)
        return f[:, :, iy][:, :, :, ix]

    # im2col: row block t holds the input shifted by tap t, so the whole
    # convolution is one (C_out, k*k*C_in) x (k*k*C_in, pixels) product
    cols = np.empty((len(shifts) * c_in, npix))
    for t, (dy, dx) in enumerate(shifts):
        cols[t * c_in : (t + 1) * c_in] = shifted(x4, dy, dx).reshape(c_in, npix)
    kmat = np.ascontiguousarray(kv.transpose(0, 2, 3, 1)).reshape(c_out, -1)
    need_x = x.requires_grad
    out = kmat @ cols
    if bias is not None:
        out += bias.value[:, None]
    out = out.reshape((c_out, nb, H, W))
    if not batched:
        out = out[:, 0]

    def bw(g):
        g2 = g.reshape(c_out, npix)
        gk = (g2 @ cols.T).reshape(c_out, k, k, c_in).transpose(0, 3, 1, 2)
        gx = None
        if need_x:
            gcols = kmat.T @ g2
            gx = np.zeros((c_in, nb, H, W))
            for t, (dy, dx) in enumerate(shifts):
                back = gcols[t * c_in : (t + 1) * c_in].reshape(c_in, nb, H, W)
                if padding == "periodic":
                    gx += np.roll(back, (dy, dx), axis=(2, 3)) if (dy or dx) else back
                else:
                    iy = _shift_index(H, dy, padding)
                    ix = _shift_index(W, dx, padding)
                    tmp = np.zeros((c_in, nb, H, W))
                    np.add.at(tmp, (slice(None), slice(None), iy), back)
                    acc = np.zeros((c_in, nb, H, W))
                    np.add.at(acc, (slice(None), slice(None), slice(None), ix), tmp)
                    gx += acc
            if not batched:
                gx = gx[:, 0]
        grads = [gx, np.ascontiguousarray(gk)]
        if bias is not None:
            grads.append(g2.sum(axis=1))
        return tuple(grads)

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return x.tape.record(out, "conv2d", parents, bw)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


def relative_error(a, b, floor: float = 1e-3) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def gradcheck(
    build: Callable[[Tape, list[Var]], Var],
    params: Sequence[np.ndarray],
    *,
    n_probe: int = 20,
    eps: float = 1e-6,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare tape gradients with central differences at probed entries.

    ``build(tape, leaves)`` must return a scalar Var. Returns the worst
    relative error over the probed entries (all entries when fewer than
    ``n_probe`` exist).
    """
    rng = rng or np.random.default_rng(0)
    params = [np.array(p, dtype=np.float64) for p in params]

    tape = Tape()
    leaves = [tape.var(p) for p in params]
    root = build(tape, leaves)
    backward(tape, root)
    analytic = [leaf.grad.copy() for leaf in leaves]

    def evaluate(vals):
        t = Tape(check_finite=False)
        out = float(build(t, [t.var(v) for v in vals]).value)
        t.release()
        return out

    slots = [(pi, fi) for pi, p in enumerate(params) for fi in range(p.size)]
    if len(slots) > n_probe:
        pick = rng.choice(len(slots), size=n_probe, replace=False)
        slots = [slots[i] for i in sorted(pick)]
    worst = 0.0
    for pi, fi in slots:
        plus = [p.copy() for p in params]
        minus = [p.copy() for p in params]
        plus[pi].flat[fi] += eps
        minus[pi].flat[fi] -= eps
        fd = (evaluate(plus) - evaluate(minus)) / (2.0 * eps)
        worst = max(worst, float(relative_error(fd, analytic[pi].flat[fi])))
    return worst
