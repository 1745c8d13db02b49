"""Reverse-mode automatic differentiation on an append-only tape.

Nodes carry float64 numpy values (scalars are 0-d arrays), so one tape
serves both the per-edge decoder computations and dense MLP layers.
Values are computed eagerly at record time, with the stability clips
(atanh, log) applied to the recorded inputs so forward values and
gradients always agree. The tape order is topological by construction,
which makes the backward sweep a single reverse pass, linear in tape
length.

Subgradient conventions: minimums route to the first argmin; sign() is
a detached constant; clamp and relu pass gradient only on their active
region (boundary included).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LengthMismatch, NonFinite

ATANH_EPS = 1e-7
LOG_EPS = 1e-12


class Tape:
    """Recording context; create nodes through its const/param methods."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.params: dict[str, Node] = {}

    def _register(self, node: "Node") -> "Node":
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def const(self, value) -> "Node":
        return self._register(Node(self, _as_value(value)))

    def param(self, value, key: str) -> "Node":
        if key in self.params:
            raise ValueError(f"parameter {key!r} already recorded on this tape")
        node = self._register(Node(self, _as_value(value)))
        node.param_key = key
        self.params[key] = node
        return node


class Node:
    __slots__ = ("tape", "value", "grad", "parents", "backward_fn",
                 "param_key", "index")

    # keep numpy from broadcasting over Node in mixed expressions;
    # the reflected operators below handle ndarray operands instead
    __array_ufunc__ = None

    def __init__(self, tape: Tape, value: np.ndarray,
                 parents: tuple = (), backward_fn=None):
        self.tape = tape
        self.value = value
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        self.param_key = None
        self.index = -1

    # arithmetic sugar; non-node operands become constants
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    @property
    def shape(self):
        return self.value.shape


def _as_value(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    return v


def _wrap(tape: Tape, x) -> Node:
    return x if isinstance(x, Node) else tape.const(x)


def _record(tape: Tape, value: np.ndarray, parents: tuple, backward_fn) -> Node:
    if not np.isfinite(value).all():
        raise NonFinite("recorded value is NaN or infinite")
    return tape._register(Node(tape, value, parents, backward_fn))


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _accum(node: Node, grad: np.ndarray):
    g = _unbroadcast(np.asarray(grad, dtype=np.float64), node.value.shape)
    node.grad = g if node.grad is None else node.grad + g


# ---------------------------------------------------------------------------
# elementwise operations


def add(a, b) -> Node:
    tape = (a if isinstance(a, Node) else b).tape
    a, b = _wrap(tape, a), _wrap(tape, b)
    out = _record(tape, a.value + b.value, (a, b), None)
    out.backward_fn = lambda g: (_accum(a, g), _accum(b, g))
    return out


def sub(a, b) -> Node:
    tape = (a if isinstance(a, Node) else b).tape
    a, b = _wrap(tape, a), _wrap(tape, b)
    out = _record(tape, a.value - b.value, (a, b), None)
    out.backward_fn = lambda g: (_accum(a, g), _accum(b, -g))
    return out


def mul(a, b) -> Node:
    tape = (a if isinstance(a, Node) else b).tape
    a, b = _wrap(tape, a), _wrap(tape, b)
    out = _record(tape, a.value * b.value, (a, b), None)
    out.backward_fn = lambda g: (_accum(a, g * b.value), _accum(b, g * a.value))
    return out


def div(a, b) -> Node:
    tape = (a if isinstance(a, Node) else b).tape
    a, b = _wrap(tape, a), _wrap(tape, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        quotient = a.value / b.value
    out = _record(tape, quotient, (a, b), None)
    out.backward_fn = lambda g: (
        _accum(a, g / b.value),
        _accum(b, -g * a.value / (b.value * b.value)),
    )
    return out


def neg(a: Node) -> Node:
    out = _record(a.tape, -a.value, (a,), None)
    out.backward_fn = lambda g: _accum(a, -g)
    return out


def tanh(a: Node) -> Node:
    t = np.tanh(a.value)
    out = _record(a.tape, t, (a,), None)
    out.backward_fn = lambda g: _accum(a, g * (1.0 - t * t))
    return out


def atanh(a: Node, eps: float = ATANH_EPS) -> Node:
    """atanh of the input clipped into (-1+eps, 1-eps) at record time."""
    clipped = np.clip(a.value, -1.0 + eps, 1.0 - eps)
    inside = (a.value > -1.0 + eps) & (a.value < 1.0 - eps)
    out = _record(a.tape, np.arctanh(clipped), (a,), None)
    out.backward_fn = lambda g: _accum(
        a, g * inside / (1.0 - clipped * clipped)
    )
    return out


def sigmoid(a: Node) -> Node:
    x = a.value
    s = np.empty_like(x)
    pos = x >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    s[~pos] = ex / (1.0 + ex)
    out = _record(a.tape, s, (a,), None)
    out.backward_fn = lambda g: _accum(a, g * s * (1.0 - s))
    return out


def log(a: Node, eps: float = LOG_EPS) -> Node:
    """log of the input clipped to [eps, inf) at record time."""
    clipped = np.maximum(a.value, eps)
    inside = a.value > eps
    out = _record(a.tape, np.log(clipped), (a,), None)
    out.backward_fn = lambda g: _accum(a, g * inside / clipped)
    return out


def abs_(a: Node) -> Node:
    """Absolute value; subgradient at 0 is +1 (matches sign(0) = +1)."""
    sgn = np.where(a.value < 0, -1.0, 1.0)
    out = _record(a.tape, np.abs(a.value), (a,), None)
    out.backward_fn = lambda g: _accum(a, g * sgn)
    return out


def sign_detached(a: Node) -> Node:
    """sign(x) with sign(0) = +1, treated as a constant (zero gradient)."""
    return a.tape.const(np.where(a.value < 0, -1.0, 1.0))


def relu(a: Node) -> Node:
    """max(x, 0); gradient passes for x >= 0 so zero-initialized
    reparameterized quantities stay trainable."""
    mask = a.value >= 0
    out = _record(a.tape, np.where(mask, a.value, 0.0), (a,), None)
    out.backward_fn = lambda g: _accum(a, g * mask)
    return out


def clamp(a: Node, lo: float, hi: float) -> Node:
    mask = (a.value >= lo) & (a.value <= hi)
    out = _record(a.tape, np.clip(a.value, lo, hi), (a,), None)
    out.backward_fn = lambda g: _accum(a, g * mask)
    return out


def minimum2(a: Node, b) -> Node:
    """Elementwise min; ties route the gradient to the first argument."""
    tape = a.tape
    b = _wrap(tape, b)
    take_a = a.value <= b.value
    out = _record(tape, np.where(take_a, a.value, b.value), (a, b), None)
    out.backward_fn = lambda g: (
        _accum(a, g * take_a),
        _accum(b, g * ~take_a),
    )
    return out


# ---------------------------------------------------------------------------
# shape, indexing and reduction operations


def matmul(a: Node, b: Node) -> Node:
    out = _record(a.tape, a.value @ b.value, (a, b), None)
    out.backward_fn = lambda g: (
        _accum(a, g @ b.value.T),
        _accum(b, a.value.T @ g),
    )
    return out


def gather_last(a: Node, idx: np.ndarray) -> Node:
    """Fancy-index the last axis: out = a[..., idx]."""
    idx = np.asarray(idx, dtype=np.int64)
    out = _record(a.tape, a.value[..., idx], (a,), None)

    def backward(g):
        ga = np.zeros_like(a.value)
        if a.value.ndim == 1:
            np.add.at(ga, idx, g)
        else:
            np.add.at(ga, (slice(None), idx), g)
        _accum(a, ga)

    out.backward_fn = backward
    return out


def scatter_sum_last(a: Node, dst: np.ndarray, size: int) -> Node:
    """Sum entries of the last axis into ``size`` bins given by ``dst``."""
    dst = np.asarray(dst, dtype=np.int64)
    val = np.zeros(a.value.shape[:-1] + (size,))
    if a.value.ndim == 1:
        np.add.at(val, dst, a.value)
    else:
        np.add.at(val, (slice(None), dst), a.value)
    out = _record(a.tape, val, (a,), None)
    out.backward_fn = lambda g: _accum(a, g[..., dst])
    return out


def prod_last(a: Node) -> Node:
    """Product along the last axis; backward uses prefix/suffix products,
    so exact zeros are handled without division."""
    x = a.value
    out = _record(a.tape, np.prod(x, axis=-1), (a,), None)

    def backward(g):
        ones = np.ones(x.shape[:-1] + (1,))
        prefix = np.concatenate([ones, np.cumprod(x, axis=-1)[..., :-1]], axis=-1)
        suffix = np.concatenate(
            [np.cumprod(x[..., ::-1], axis=-1)[..., ::-1][..., 1:], ones], axis=-1
        )
        _accum(a, g[..., None] * prefix * suffix)

    out.backward_fn = backward
    return out


def min_last(a: Node) -> Node:
    """Minimum along the last axis; ties route to the lowest index."""
    x = a.value
    arg = np.argmin(x, axis=-1)
    out = _record(a.tape, np.min(x, axis=-1), (a,), None)

    def backward(g):
        ga = np.zeros_like(x)
        np.put_along_axis(
            ga, arg[..., None], g[..., None], axis=-1
        )
        _accum(a, ga)

    out.backward_fn = backward
    return out


def sum_all(a: Node) -> Node:
    out = _record(a.tape, np.asarray(a.value.sum()), (a,), None)
    out.backward_fn = lambda g: _accum(a, np.broadcast_to(g, a.value.shape))
    return out


def mean_all(a: Node) -> Node:
    n = a.value.size
    out = _record(a.tape, np.asarray(a.value.mean()), (a,), None)
    out.backward_fn = lambda g: _accum(a, np.broadcast_to(g / n, a.value.shape))
    return out


def sum_axis(a: Node, axis: int) -> Node:
    out = _record(a.tape, a.value.sum(axis=axis), (a,), None)
    out.backward_fn = lambda g: _accum(a, np.expand_dims(g, axis))
    return out


# ---------------------------------------------------------------------------
# backward sweep and gradient utilities


def backward(tape: Tape, root: Node) -> dict[str, np.ndarray]:
    """Reverse sweep from a scalar root; returns gradients per parameter key."""
    if root.value.size != 1:
        raise ValueError("backward root must be a scalar")
    for node in tape.nodes:
        node.grad = None
    root.grad = np.ones_like(root.value)
    for node in reversed(tape.nodes[: root.index + 1]):
        if node.grad is None or node.backward_fn is None:
            continue
        node.backward_fn(node.grad)
    grads = {}
    for key, node in tape.params.items():
        g = node.grad if node.grad is not None else np.zeros_like(node.value)
        if not np.isfinite(g).all():
            raise NonFinite(f"gradient for {key!r} is not finite")
        grads[key] = g
    return grads


def finite_diff_check(build, params: dict[str, np.ndarray], h: float = 1e-4) -> float:
    """Max relative error between backward() and central finite differences.

    ``build(tape, params)`` must record the function and return its scalar
    root node using tape.param for every entry of ``params``.
    """
    tape = Tape()
    root = build(tape, params)
    grads = backward(tape, root)

    def value_at(p):
        t = Tape()
        return float(build(t, p).value)

    worst = 0.0
    for key in sorted(params):
        size = params[key].size
        for i in range(size):
            plus = {k: v.copy() for k, v in params.items()}
            plus[key].reshape(-1)[i] += h
            minus = {k: v.copy() for k, v in params.items()}
            minus[key].reshape(-1)[i] -= h
            fd = (value_at(plus) - value_at(minus)) / (2 * h)
            an = float(np.asarray(grads[key]).reshape(-1)[i])
            err = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Standard Adam with bias correction, keyed by parameter name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One Adam update; returns the new parameter dict (inputs untouched)."""
    if set(params) != set(grads):
        raise LengthMismatch(
            f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}"
        )
    state.t += 1
    t = state.t
    out = {}
    for key in sorted(params):
        p, g = params[key], grads[key]
        if p.shape != g.shape:
            raise LengthMismatch(f"shape mismatch for {key!r}: {p.shape} vs {g.shape}")
        m = state.m.get(key, np.zeros_like(p))
        v = state.v.get(key, np.zeros_like(p))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * (g * g)
        state.m[key] = m
        state.v[key] = v
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        out[key] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out
