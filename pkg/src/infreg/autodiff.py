"""Minimal reverse-mode differentiation engine on dense float64 arrays.

Design: every operation eagerly computes its numpy value and registers a
backward closure on the output node. `backward(loss)` linearizes the
recorded graph into a topologically ordered tape and walks it in reverse,
so each node's closure runs exactly once. Storage is dense row-major;
the only broadcasting is the bias row-add in `affine` and the obvious
expansions in reduction backwards, which keeps every rule auditable.

Elementwise activation forward/backward and the Adam update dispatch to
`infreg._kernels` (compiled when available, numpy otherwise).
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from infreg import _kernels as K
from infreg.errors import ConfigurationError, UsageError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Dense float64 array plus a slot in the recorded computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError("item() requires a single-element tensor")
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Elementwise conveniences; full rules live in the module functions.
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_scalar(self, other)

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_scalar(self, -other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def constant(data) -> Tensor:
    """Leaf tensor that never receives a gradient."""
    return Tensor(data, requires_grad=False)


def _node(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _buf(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


# ---------------------------------------------------------------------------
# Operations

def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b with row-broadcast bias."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ConfigurationError("affine expects 2-d input and weight")
    if x.data.shape[1] != w.data.shape[0]:
        raise ConfigurationError(
            f"affine shape mismatch: x {x.data.shape} @ w {w.data.shape}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ConfigurationError(
            f"affine bias shape {b.data.shape} != ({w.data.shape[1]},)"
        )
    out_data = x.data @ w.data + b.data

    def backward(g):
        if x.requires_grad:
            _buf(x).__iadd__(g @ w.data.T)
        if w.requires_grad:
            _buf(w).__iadd__(x.data.T @ g)
        if b.requires_grad:
            _buf(b).__iadd__(g.sum(axis=0))

    return _node(out_data, (x, w, b), backward)


def _same_shape(a: Tensor, b: Tensor, opname: str):
    if a.data.shape != b.data.shape:
        raise ConfigurationError(
            f"{opname} shape mismatch: {a.data.shape} vs {b.data.shape}"
        )


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g)
        if b.requires_grad:
            _buf(b).__iadd__(g)

    return _node(a.data + b.data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g)
        if b.requires_grad:
            _buf(b).__isub__(g)

    return _node(a.data - b.data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g * b.data)
        if b.requires_grad:
            _buf(b).__iadd__(g * a.data)

    return _node(a.data * b.data, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(c * g)

    return _node(c * a.data, (a,), backward)


def add_scalar(a: Tensor, c: float) -> Tensor:
    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g)

    return _node(a.data + float(c), (a,), backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g * out_data)

    return _node(out_data, (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(2.0 * a.data * g)

    return _node(a.data * a.data, (a,), backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through strictly inside (lo, hi)."""
    out_data = np.clip(a.data, lo, hi)
    mask = (a.data > lo) & (a.data < hi)

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g * mask)

    return _node(out_data, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_data = K.tanh_fwd(a.data)

    def backward(g):
        if a.requires_grad:
            K.tanh_bwd_acc(g, out_data, _buf(a))

    return _node(out_data, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    out_data = K.sigmoid_fwd(a.data)

    def backward(g):
        if a.requires_grad:
            K.sigmoid_bwd_acc(g, out_data, _buf(a))

    return _node(out_data, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_data = K.relu_fwd(a.data)

    def backward(g):
        if a.requires_grad:
            K.relu_bwd_acc(g, out_data, _buf(a))

    return _node(out_data, (a,), backward)


_ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}


def activation(a: Tensor, kind: str) -> Tensor:
    try:
        return _ACTIVATIONS[kind](a)
    except KeyError:
        raise ConfigurationError(f"unknown activation {kind!r}") from None


def concat_cols(parts: list[Tensor]) -> Tensor:
    """Column-wise concatenation of 2-d tensors with equal row counts."""
    rows = parts[0].data.shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.data.shape[0] != rows:
            raise ConfigurationError("concat_cols expects 2-d tensors with equal rows")
    widths = [p.data.shape[1] for p in parts]
    offsets = np.cumsum([0] + widths)
    out_data = np.concatenate([p.data for p in parts], axis=1)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                _buf(p).__iadd__(g[:, lo:hi])

    return _node(out_data, tuple(parts), backward)


def row_sum(a: Tensor) -> Tensor:
    """Sum over axis 1: (n, d) -> (n,)."""
    if a.data.ndim != 2:
        raise ConfigurationError("row_sum expects a 2-d tensor")

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g[:, None])

    return _node(a.data.sum(axis=1), (a,), backward)


def sum_all(a: Tensor) -> Tensor:
    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g)

    return _node(a.data.sum(), (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def backward(g):
        if a.requires_grad:
            _buf(a).__iadd__(g / n)

    return _node(a.data.mean(), (a,), backward)


# ---------------------------------------------------------------------------
# Backward pass

def _toposort(root: Tensor) -> list[Tensor]:
    """Ordered tape: every node's parents precede it; each node appears once."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate .grad on every tensor the scalar loss depends on."""
    if loss.data.size != 1:
        raise UsageError("backward requires a scalar loss node")
    if not loss.requires_grad:
        # Constant loss: nothing depends on parameters; gradients are zero
        # and stay wherever the caller initialized them.
        return
    tape = _toposort(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Parameters and the optimizer

def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class ParamStore:
    """Named parameter tensors plus per-parameter Adam state."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise ConfigurationError(f"parameter {name!r} already registered")
        t = Tensor(data, requires_grad=True)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def all_finite(self) -> bool:
        return all(np.isfinite(p.data).all() for p in self._params.values())

    def adam_step(
        self,
        lr: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        """Bias-corrected Adam update over every registered parameter."""
        missing = [n for n, p in self._params.items() if p.grad is None]
        if missing:
            raise UsageError(f"adam_step before backward: no gradient for {missing}")
        self.step_count += 1
        bc1 = 1.0 - beta1 ** self.step_count
        bc2 = 1.0 - beta2 ** self.step_count
        for name, p in self._params.items():
            K.adam_update(
                p.data.reshape(-1),
                p.grad.reshape(-1),
                self._m[name].reshape(-1),
                self._v[name].reshape(-1),
                lr,
                beta1,
                beta2,
                eps,
                bc1,
                bc2,
            )

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.data.copy() for n, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for n, arr in state.items():
            p = self._params[n]
            if p.data.shape != arr.shape:
                raise ConfigurationError(f"shape mismatch loading {n!r}")
            p.data[...] = arr


# ---------------------------------------------------------------------------
# Gated recurrent cell

class GruParams:
    """Update/reset/candidate weight blocks of one GRU cell."""

    def __init__(self, w_update, b_update, w_reset, b_reset, w_cand, b_cand):
        self.w_update = w_update
        self.b_update = b_update
        self.w_reset = w_reset
        self.b_reset = b_reset
        self.w_cand = w_cand
        self.b_cand = b_cand


def init_gru(
    rng: np.random.Generator, d_in: int, d_h: int, store: ParamStore, prefix: str
) -> GruParams:
    def block(tag):
        w = store.add(f"{prefix}.w_{tag}", glorot_uniform(rng, d_in + d_h, d_h))
        b = store.add(f"{prefix}.b_{tag}", np.zeros(d_h))
        return w, b

    wu, bu = block("update")
    wr, br = block("reset")
    wc, bc = block("cand")
    return GruParams(wu, bu, wr, br, wc, bc)


def gru_cell(h_prev: Tensor, u: Tensor, params: GruParams) -> Tensor:
    """One gated update: h = (1 - g) * h_prev + g * candidate.

    Composed from primitive ops, so backward-through-time comes from the
    engine rather than a hand-derived rule.
    """
    d_h = h_prev.data.shape[1]
    if params.w_update.data.shape != (u.data.shape[1] + d_h, d_h):
        raise ConfigurationError(
            f"gru_cell weight shape {params.w_update.data.shape} does not match "
            f"input {u.data.shape[1]} + hidden {d_h}"
        )
    uh = concat_cols([u, h_prev])
    g = sigmoid(affine(uh, params.w_update, params.b_update))
    r = sigmoid(affine(uh, params.w_reset, params.b_reset))
    cand = tanh(affine(concat_cols([u, mul(r, h_prev)]), params.w_cand, params.b_cand))
    return add(sub(h_prev, mul(g, h_prev)), mul(g, cand))
