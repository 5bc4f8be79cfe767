"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run: while a :class:`Tape` is active, every operation on tensors
that require gradients appends a node (output, inputs, backward closure) to
the tape. :func:`backward` walks the recorded nodes once, in reverse order,
accumulating gradients into a table; shared subexpressions therefore sum
their contributions. Arrays are float64 by default (switchable via
:func:`set_default_dtype` for single-precision builds).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

_DTYPE = np.float64


class DimensionError(ValueError):
    """Raised when operand shapes cannot be combined."""


def set_default_dtype(dtype) -> None:
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def default_dtype():
    return _DTYPE


class Tensor:
    """A dense numeric array plus a gradient-tracking flag.

    ``data`` is always a numpy array of the default float dtype; shape and
    size are whatever numpy reports for it. ``requires_grad`` marks leaves
    the caller wants gradients for; it propagates automatically to results
    of recorded operations.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # operator sugar; all arithmetic funnels through the module-level ops
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


_TAPES: list["Tape"] = []


class Tape:
    """Ordered record of the operations executed while it was active.

    A fresh tape is built for every forward pass; use as a context manager.
    Nodes are appended in execution order, which is a valid topological
    order of the graph, so the backward pass can visit each node exactly
    once in reverse.
    """

    def __init__(self):
        self._nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _TAPES.pop()
        assert popped is self

    def __len__(self) -> int:
        return len(self._nodes)


def _record(out: Tensor, inputs: tuple[Tensor, ...], bwd: Callable) -> None:
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1]._nodes.append((out, inputs, bwd))


class Gradients:
    """Mapping from tensors (by identity) to their gradient arrays.

    Parameters unreachable from the loss read back as zeros. Returned
    arrays may be read-only views; copy before mutating.
    """

    def __init__(self, table: dict[int, np.ndarray]):
        self._table = table

    def of(self, t: Tensor) -> np.ndarray:
        arr = self._table.get(id(t))
        if arr is None:
            return np.zeros_like(t.data)
        return arr

    def __contains__(self, t: Tensor) -> bool:
        return id(t) in self._table


def backward(tape: Tape, loss: Tensor) -> Gradients:
    """Reverse sweep over ``tape`` from scalar ``loss``; returns gradients.

    Each recorded node is visited exactly once, in reverse execution order.
    When several nodes feed the same tensor the contributions are summed.
    """
    if loss.size != 1:
        raise DimensionError(f"loss must be scalar, got shape {loss.shape}")
    table: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    owned: set[int] = set()
    for out, inputs, bwd in reversed(tape._nodes):
        g = table.pop(id(out), None)
        owned.discard(id(out))
        if g is None:
            continue
        grads_in = bwd(g)
        for inp, gi in zip(inputs, grads_in):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key not in table:
                table[key] = gi
            elif key in owned:
                table[key] += gi
            else:
                # first stored array may alias node internals; copy on write
                table[key] = table[key] + gi
                owned.add(key)
    return Gradients(table)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data + b.data)
    except ValueError as e:
        raise DimensionError(f"add: shapes {a.shape} and {b.shape}") from e

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    _record(out, (a, b), bwd)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data - b.data)
    except ValueError as e:
        raise DimensionError(f"sub: shapes {a.shape} and {b.shape}") from e

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    _record(out, (a, b), bwd)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data * b.data)
    except ValueError as e:
        raise DimensionError(f"mul: shapes {a.shape} and {b.shape}") from e

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    _record(out, (a, b), bwd)
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        out = Tensor(a.data / b.data)
    except ValueError as e:
        raise DimensionError(f"div: shapes {a.shape} and {b.shape}") from e

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    _record(out, (a, b), bwd)
    return out


def matmul(a, b) -> Tensor:
    """Matrix product. Supports 2-D operands, a stacked left operand against
    a shared 2-D right operand, and fully matched stacked operands."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    if b.ndim == 2:
        out = Tensor(a.data @ b.data)

        def bwd(g):
            ga = g @ b.data.T
            k, n = b.shape
            gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb

    elif a.shape[:-2] == b.shape[:-2]:
        out = Tensor(a.data @ b.data)

        def bwd(g):
            ga = g @ np.swapaxes(b.data, -1, -2)
            gb = np.swapaxes(a.data, -1, -2) @ g
            return ga, gb

    else:
        raise DimensionError(f"matmul: batch dims differ, {a.shape} @ {b.shape}")
    _record(out, (a, b), bwd)
    return out


def _sigmoid_arr(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(_sigmoid_arr(t.data))

    def bwd(g):
        return (g * out.data * (1.0 - out.data),)

    _record(out, (t,), bwd)
    return out


def tanh(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(np.tanh(t.data))

    def bwd(g):
        return (g * (1.0 - out.data * out.data),)

    _record(out, (t,), bwd)
    return out


def exp(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(np.exp(t.data))

    def bwd(g):
        return (g * out.data,)

    _record(out, (t,), bwd)
    return out


def log(t) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(np.log(t.data))

    def bwd(g):
        return (g / t.data,)

    _record(out, (t,), bwd)
    return out


def tensor_sum(t, axis=None, keepdims: bool = False) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(t.data.sum(axis=axis, keepdims=keepdims))
    shape = t.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape),)
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            for ax in sorted(a % len(shape) for a in axes):
                g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, shape),)

    _record(out, (t,), bwd)
    return out


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of zero tensors")
    try:
        out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    except ValueError as e:
        raise DimensionError(f"concat: {[t.shape for t in tensors]}") from e
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, offsets, axis=axis))

    _record(out, tuple(tensors), bwd)
    return out


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack of zero tensors")
    out = Tensor(np.stack([t.data for t in tensors], axis=axis))

    def bwd(g):
        return tuple(np.take(g, j, axis=axis) for j in range(len(tensors)))

    _record(out, tuple(tensors), bwd)
    return out


def reshape(t, shape) -> Tensor:
    t = _as_tensor(t)
    out = Tensor(t.data.reshape(shape))
    orig = t.shape

    def bwd(g):
        return (g.reshape(orig),)

    _record(out, (t,), bwd)
    return out


def transpose(t, axes: Sequence[int]) -> Tensor:
    t = _as_tensor(t)
    axes = tuple(axes)
    out = Tensor(np.transpose(t.data, axes))
    inv = np.argsort(axes)

    def bwd(g):
        return (np.transpose(g, inv),)

    _record(out, (t,), bwd)
    return out


def swap_last2(t) -> Tensor:
    t = _as_tensor(t)
    axes = tuple(range(t.ndim - 2)) + (t.ndim - 1, t.ndim - 2)
    return transpose(t, axes)


def take_index(t, index: int, axis: int) -> Tensor:
    """Select one slice along ``axis``; the gradient scatters back."""
    t = _as_tensor(t)
    out = Tensor(np.take(t.data, index, axis=axis))
    shape = t.shape
    sel = tuple(slice(None) for _ in range(axis)) + (index,)

    def bwd(g):
        z = np.zeros(shape, dtype=g.dtype)
        z[sel] = g
        return (z,)

    _record(out, (t,), bwd)
    return out


def embedding_lookup(table, ids) -> Tensor:
    """Gather rows of ``table`` ([count, d]) at integer ``ids`` (any shape)."""
    table = _as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids])
    shape = table.shape

    def bwd(g):
        z = np.zeros(shape, dtype=g.dtype)
        np.add.at(z, ids, g)
        return (z,)

    _record(out, (table,), bwd)
    return out


def softmax(t, axis: int = -1) -> Tensor:
    """Max-subtraction stabilized softmax along ``axis``."""
    t = _as_tensor(t)
    if t.size == 0 or t.shape[axis] == 0:
        raise DimensionError("softmax of empty input")
    shift = np.max(t.data, axis=axis, keepdims=True)  # constant shift
    e = exp(sub(t, Tensor(shift)))
    return div(e, tensor_sum(e, axis=axis, keepdims=True))


def masked_softmax(scores, mask: np.ndarray, axis: int) -> Tensor:
    """Softmax over the positions where ``mask`` is 1; masked positions are
    excluded from the normalization and read back as 0.

    Rows with no unmasked position get a uniform distribution (a sentinel
    value callers are expected to exclude downstream); no gradient flows
    through that filler.
    """
    scores = _as_tensor(scores)
    m = np.broadcast_to(np.asarray(mask, dtype=scores.data.dtype), scores.shape)
    with np.errstate(invalid="ignore"):
        masked_vals = np.where(m > 0, scores.data, -np.inf)
    shift = np.max(masked_vals, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(shift), shift, 0.0)
    e = mul(exp(sub(scores, Tensor(shift))), Tensor(m))
    denom = tensor_sum(e, axis=axis, keepdims=True)
    has_any = (m.sum(axis=axis, keepdims=True) > 0).astype(scores.data.dtype)
    alpha = div(e, add(denom, Tensor(1.0 - has_any)))
    if np.all(has_any > 0):
        return alpha
    fill = (1.0 - has_any) / scores.shape[axis]
    return add(alpha, Tensor(np.broadcast_to(fill, scores.shape)))


def dropout(t, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout: zero a ``rate`` fraction, scale the rest by 1/(1-rate)."""
    t = _as_tensor(t)
    if rate <= 0.0:
        return t
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    keep = (rng.random(t.shape) >= rate).astype(t.data.dtype) / (1.0 - rate)
    return mul(t, Tensor(keep))


def bce_with_logits(scores, targets) -> Tensor:
    """Summed binary cross-entropy computed directly from pre-sigmoid scores.

    Uses the log-sum-exp form max(s,0) - s*y + log(1 + exp(-|s|)), which is
    finite for any score; the gradient is sigmoid(s) - y.
    """
    scores = _as_tensor(scores)
    y = np.asarray(targets, dtype=scores.data.dtype)
    if y.shape != scores.shape:
        raise DimensionError(f"bce: targets {y.shape} vs scores {scores.shape}")
    s = scores.data
    elems = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
    out = Tensor(elems.sum())

    def bwd(g):
        return (g * (_sigmoid_arr(s) - y),)

    _record(out, (scores,), bwd)
    return out


@dataclass
class FiniteDiffReport:
    passed: bool
    max_rel_error: float
    worst_param: str
    worst_coord: tuple
    per_param: dict
    coords_checked: int


def finite_diff_check(
    build_loss: Callable[[], Tensor],
    params: dict[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
    sample: int | None = None,
    seed: int = 0,
) -> FiniteDiffReport:
    """Compare analytic gradients of ``build_loss`` against central differences.

    ``build_loss`` must be deterministic (it is evaluated twice at the base
    point and must agree bit-for-bit, otherwise the check is invalid) and
    must read parameter values from ``params`` on every call. Relative error
    uses denominator max(|analytic| + |numeric|, 1e-4), so coordinates where
    both gradients are tiny compare absolutely. ``sample`` limits the number
    of coordinates checked per parameter (seeded, without replacement);
    every parameter tensor is always visited.
    """
    with Tape() as tape:
        loss = build_loss()
    base = loss.item()
    analytic = backward(tape, loss)
    if build_loss().item() != base:
        raise ValueError("loss function is not deterministic; check invalid")

    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    worst = (-1.0, "", ())
    checked = 0
    for name, p in params.items():
        grad = analytic.of(p)
        flat = p.data.reshape(-1)
        n = flat.size
        if sample is not None and sample < n:
            coords = rng.choice(n, size=sample, replace=False)
        else:
            coords = range(n)
        worst_here = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + eps
            fp = build_loss().item()
            flat[c] = orig - eps
            fm = build_loss().item()
            flat[c] = orig
            numeric = (fp - fm) / (2.0 * eps)
            a = grad.reshape(-1)[c]
            rel = abs(a - numeric) / max(abs(a) + abs(numeric), 1e-4)
            checked += 1
            if rel > worst_here:
                worst_here = rel
            if rel > worst[0]:
                worst = (rel, name, np.unravel_index(c, p.shape))
        per_param[name] = worst_here
    return FiniteDiffReport(
        passed=worst[0] <= tol,
        max_rel_error=max(worst[0], 0.0),
        worst_param=worst[1],
        worst_coord=tuple(int(i) for i in worst[2]),
        per_param=per_param,
        coords_checked=checked,
    )
