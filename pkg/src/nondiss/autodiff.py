"""Minimal reverse-mode gradient engine on numpy arrays.

A ``Tape`` records primitive operations in execution order; since every
tensor is created before its consumers, walking the record backwards visits
nodes in reverse topological order.  Tensors are thin wrappers around numpy
arrays with a gradient slot.  Parameters live in a ``ParamStore`` and enter
the tape through ``leaf``, which registers a closure that accumulates the
final adjoint into the store.

Primitives cover exactly what the layers need: matmul (tensor-tensor and
constant-operator), elementwise activations, add/sub/scale, bias broadcast,
edge gather/scatter, concat/slice, and guarded reciprocal roots for learned
degree normalization.  Constant operators may be scipy.sparse matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Activation",
    "ACTIVATIONS",
    "AdamState",
    "Param",
    "ParamStore",
    "StaleTapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "forward_mlp",
    "grad_check",
    "init_mlp",
    "mlp_dims",
]


class StaleTapeError(RuntimeError):
    """Raised when a tape is replayed backward without an explicit re-arm."""


class Tensor:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=float)
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape})"


def _accum(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=float)
    else:
        t.grad += g


# ---------------------------------------------------------------------------
# activations


@dataclass(frozen=True)
class Activation:
    """Pointwise nonlinearity with derivative and (where defined) antiderivative."""

    kind: str
    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]  # derivative as a function of the input
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz: float = 1.0


def _logcosh(x):
    # log(cosh(x)) computed as |x| + log1p(exp(-2|x|)) - log 2 to avoid overflow
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


ACTIVATIONS: dict[str, Activation] = {
    "tanh": Activation("tanh", np.tanh, lambda x: 1.0 - np.tanh(x) ** 2, _logcosh, 1.0),
    "identity": Activation(
        "identity", lambda x: x, lambda x: np.ones_like(x), lambda x: 0.5 * x * x, 1.0
    ),
    "relu": Activation(
        "relu",
        lambda x: np.maximum(x, 0.0),
        lambda x: (x > 0.0).astype(float),
        lambda x: 0.5 * x * x * (x > 0.0),
        1.0,
    ),
    "sin": Activation("sin", np.sin, np.cos, None, 1.0),
}


def _as_op(m):
    """Accept dense arrays or scipy.sparse matrices as constant operators."""
    if sp.issparse(m):
        return m
    return np.asarray(m, dtype=float)


class Tape:
    """Wengert list.  ``record=False`` gives a cheap inference-only path."""

    def __init__(self, record: bool = True):
        self.record = record
        self._ops: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []
        self._spent = False

    # -- recording ----------------------------------------------------------

    def _push(self, out: Tensor, backward: Callable[[np.ndarray], None] | None) -> Tensor:
        if self.record and backward is not None:
            self._ops.append((out, backward))
        return out

    def constant(self, value) -> Tensor:
        return Tensor(value)

    def leaf(self, param: "Param") -> Tensor:
        """Tensor view of a parameter; backward adds the adjoint to param.grad."""
        t = Tensor(param.value)

        def bw(g):
            param.grad += g.reshape(param.value.shape)

        return self._push(t, bw)

    # -- primitives ----------------------------------------------------------

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.value + b.value)

        def bw(g):
            _accum(a, g)
            _accum(b, g)

        return self._push(out, bw)

    def sub(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.value - b.value)

        def bw(g):
            _accum(a, g)
            _accum(b, -g)

        return self._push(out, bw)

    def scale(self, a: Tensor, c: float) -> Tensor:
        out = Tensor(c * a.value)

        def bw(g):
            _accum(a, c * g)

        return self._push(out, bw)

    def add_bias(self, x: Tensor, b: Tensor) -> Tensor:
        """x (n,d) plus row-broadcast bias b (d,)."""
        out = Tensor(x.value + b.value)

        def bw(g):
            _accum(x, g)
            _accum(b, g.sum(axis=0))

        return self._push(out, bw)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.value * b.value)

        def bw(g):
            _accum(a, g * b.value)
            _accum(b, g * a.value)

        return self._push(out, bw)

    def mul_colvec(self, x: Tensor, w: Tensor) -> Tensor:
        """Scale row i of x (n,d) by scalar w_i (shape (n,) or (n,1))."""
        wv = w.value.reshape(-1, 1)
        out = Tensor(x.value * wv)

        def bw(g):
            _accum(x, g * wv)
            _accum(w, (g * x.value).sum(axis=1).reshape(w.value.shape))

        return self._push(out, bw)

    def mul_rowvec(self, x: Tensor, w: Tensor) -> Tensor:
        """Scale column j of x (n,d) by scalar w_j (shape (d,))."""
        out = Tensor(x.value * w.value)

        def bw(g):
            _accum(x, g * w.value)
            _accum(w, (g * x.value).sum(axis=0))

        return self._push(out, bw)

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(a.value @ b.value)

        def bw(g):
            _accum(a, g @ b.value.T)
            _accum(b, a.value.T @ g)

        return self._push(out, bw)

    def const_mm(self, s, x: Tensor) -> Tensor:
        """Constant operator (dense or sparse) times tensor: S @ X."""
        s = _as_op(s)
        out = Tensor(s @ x.value)

        def bw(g):
            _accum(x, s.T @ g)

        return self._push(out, bw)

    def mm_const(self, x: Tensor, m) -> Tensor:
        """Tensor times constant matrix: X @ M."""
        m = _as_op(m)
        out = Tensor(x.value @ m)

        def bw(g):
            _accum(x, g @ m.T)

        return self._push(out, bw)

    def transpose(self, a: Tensor) -> Tensor:
        out = Tensor(a.value.T)

        def bw(g):
            _accum(a, g.T)

        return self._push(out, bw)

    def antisym(self, w: Tensor) -> Tensor:
        """W - W^T; adjoint is G - G^T."""
        out = Tensor(w.value - w.value.T)

        def bw(g):
            _accum(w, g - g.T)

        return self._push(out, bw)

    def sym(self, w: Tensor) -> Tensor:
        """W + W^T; adjoint is G + G^T."""
        out = Tensor(w.value + w.value.T)

        def bw(g):
            _accum(w, g + g.T)

        return self._push(out, bw)

    def act(self, x: Tensor, a: Activation) -> Tensor:
        out = Tensor(a.f(x.value))
        dfx = a.df(x.value) if self.record else None

        def bw(g):
            _accum(x, g * dfx)

        return self._push(out, bw)

    def concat_cols(self, a: Tensor, b: Tensor) -> Tensor:
        out = Tensor(np.concatenate([a.value, b.value], axis=1))
        na = a.value.shape[1]

        def bw(g):
            _accum(a, g[:, :na])
            _accum(b, g[:, na:])

        return self._push(out, bw)

    def slice_cols(self, x: Tensor, j0: int, j1: int) -> Tensor:
        out = Tensor(x.value[:, j0:j1].copy())

        def bw(g):
            full = np.zeros_like(x.value)
            full[:, j0:j1] = g
            _accum(x, full)

        return self._push(out, bw)

    def gather_rows(self, x: Tensor, idx: np.ndarray) -> Tensor:
        out = Tensor(x.value[idx])

        def bw(g):
            full = np.zeros_like(x.value)
            np.add.at(full, idx, g)
            _accum(x, full)

        return self._push(out, bw)

    def segment_sum(self, x: Tensor, idx: np.ndarray, n: int) -> Tensor:
        """Sum rows of x into n buckets given by idx (scatter-add)."""
        buckets = np.zeros((n,) + x.value.shape[1:])
        np.add.at(buckets, idx, x.value)
        out = Tensor(buckets)

        def bw(g):
            _accum(x, g[idx])

        return self._push(out, bw)

    def rsqrt_safe(self, x: Tensor) -> Tensor:
        """Elementwise x^{-1/2} with zeros mapped to zero (zero-row policy)."""
        mask = x.value > 0.0
        out_v = np.zeros_like(x.value)
        out_v[mask] = x.value[mask] ** -0.5
        out = Tensor(out_v)

        def bw(g):
            d = np.zeros_like(x.value)
            d[mask] = -0.5 * x.value[mask] ** -1.5
            _accum(x, g * d)

        return self._push(out, bw)

    def rinv_safe(self, x: Tensor) -> Tensor:
        """Elementwise 1/x with zeros mapped to zero (zero-row policy)."""
        mask = x.value != 0.0
        out_v = np.zeros_like(x.value)
        out_v[mask] = 1.0 / x.value[mask]
        out = Tensor(out_v)

        def bw(g):
            d = np.zeros_like(x.value)
            d[mask] = -1.0 / x.value[mask] ** 2
            _accum(x, g * d)

        return self._push(out, bw)

    def sum_cols(self, x: Tensor) -> Tensor:
        """Row sums: (n,d) -> (n,)."""
        out = Tensor(x.value.sum(axis=1))

        def bw(g):
            _accum(x, np.repeat(g.reshape(-1, 1), x.value.shape[1], axis=1))

        return self._push(out, bw)

    def sum(self, x: Tensor) -> Tensor:
        out = Tensor(np.array(x.value.sum()))

        def bw(g):
            _accum(x, np.full_like(x.value, float(g)))

        return self._push(out, bw)

    # -- backward ------------------------------------------------------------

    def backward(self, out: Tensor, seed: np.ndarray | None = None, replay: bool = False) -> None:
        """Reverse sweep seeding ``out`` with ``seed`` (default: ones).

        A tape may be walked again only with ``replay=True``, which clears
        every intermediate adjoint first (parameter grads are left alone;
        callers zero those through the ParamStore).
        """
        if not self.record:
            raise StaleTapeError("backward on a non-recording tape")
        if self._spent and not replay:
            raise StaleTapeError("tape already consumed; re-run forward or pass replay=True")
        if replay:
            for t, _ in self._ops:
                t.grad = None
        self._spent = True
        out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=float)
        for t, bw in reversed(self._ops):
            if t.grad is not None:
                bw(t.grad)


# ---------------------------------------------------------------------------
# parameters and optimizer


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    trainable: bool = True


class ParamStore:
    """Named dense parameters with gradient slots."""

    def __init__(self):
        self._entries: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Param:
        if name in self._entries:
            raise KeyError(f"duplicate parameter {name!r}")
        v = np.array(value, dtype=float)
        p = Param(v, np.zeros_like(v), trainable)
        self._entries[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grads(self) -> None:
        for p in self._entries.values():
            p.grad[...] = 0.0

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self._entries.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            self._entries[k].value[...] = v

    def n_scalars(self, trainable_only: bool = True) -> int:
        return sum(
            p.value.size
            for p in self._entries.values()
            if p.trainable or not trainable_only
        )


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: ParamStore,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> None:
    """Plain Adam; L2 applied by adding wd*param to the gradient."""
    state.t += 1
    t = state.t
    for name, p in params.items():
        if not p.trainable:
            continue
        g = p.grad
        if weight_decay:
            g = g + weight_decay * p.value
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        p.value -= lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# MLPs


def mlp_dims(d_in: int, d_out: int, hidden: list[int]) -> list[int]:
    return [d_in, *hidden, d_out]


def init_mlp(params: ParamStore, prefix: str, dims: list[int], rng: np.random.Generator) -> None:
    """Affine stack weights, uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    for i in range(len(dims) - 1):
        bound = 1.0 / math.sqrt(dims[i])
        params.add(f"{prefix}.w{i}", rng.uniform(-bound, bound, size=(dims[i], dims[i + 1])))
        params.add(f"{prefix}.b{i}", rng.uniform(-bound, bound, size=(dims[i + 1],)))


def forward_mlp(
    tape: Tape,
    params: ParamStore,
    prefix: str,
    n_layers: int,
    act: Activation,
    x: Tensor,
    final_activation: bool = False,
) -> Tensor:
    """Affine+activation stack; final layer affine unless final_activation."""
    h = x
    for i in range(n_layers):
        w = tape.leaf(params[f"{prefix}.w{i}"])
        b = tape.leaf(params[f"{prefix}.b{i}"])
        h = tape.add_bias(tape.matmul(h, w), b)
        if i < n_layers - 1 or final_activation:
            h = tape.act(h, act)
    return h


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    loss_fn: Callable[[Tape], Tensor],
    params: ParamStore,
    h: float = 1e-5,
    tol: float = 1e-4,
) -> dict:
    """Compare reverse-mode gradients against central finite differences.

    ``loss_fn`` must build the scalar loss from ``params`` on the given tape.
    Returns a report with per-parameter max relative error
    |g_ad - g_fd| / max(1, |g_fd|) and an overall pass flag.
    """
    params.zero_grads()
    tape = Tape()
    loss = loss_fn(tape)
    tape.backward(loss)
    ad = {k: p.grad.copy() for k, p in params.items() if p.trainable}

    def eval_loss() -> float:
        t = Tape(record=False)
        return float(loss_fn(t).value)

    per_param: dict[str, float] = {}
    worst = 0.0
    for name, p in params.items():
        if not p.trainable:
            continue
        flat = p.value.reshape(-1)
        g_ad = ad[name].reshape(-1)
        err = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = eval_loss()
            flat[i] = orig - h
            fm = eval_loss()
            flat[i] = orig
            g_fd = (fp - fm) / (2.0 * h)
            err = max(err, abs(g_ad[i] - g_fd) / max(1.0, abs(g_fd)))
        per_param[name] = err
        worst = max(worst, err)
    return {"per_param": per_param, "max_rel_err": worst, "tol": tol, "passed": worst < tol}
