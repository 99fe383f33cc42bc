"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is closed: add/sub/mul (with leading-axis batch broadcasting),
matmul, sum/mean, square, sqrt, silu, sigmoid, plus the structural ops
concat, take, scatter_sum, reshape and expand. Anything else is simply
absent. All data is float64 and row-major; gradients are exact reverse-mode
derivatives accumulated by a topological sweep from a scalar root.
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "ShapeMismatchError",
    "tensor",
    "constant",
    "parameter",
    "add",
    "sub",
    "mul",
    "matmul",
    "tsum",
    "tmean",
    "square",
    "sqrt",
    "silu",
    "sigmoid",
    "l2_norm",
    "linear",
    "no_grad",
    "concat",
    "take",
    "scatter_sum",
    "reshape",
    "expand",
    "backward",
    "evaluate_with_gradients",
    "grad_check",
    "grad_check_params",
]


class ShapeMismatchError(ValueError):
    """Raised when operand shapes are incompatible; names both shapes."""


# Finite checks are opt-in: they double memory traffic on the hot path, so
# only the gradient-verification entry points switch them on.
_FINITE_CHECKS = False

# Inside no_grad() every op result is a plain constant: no parents, no
# backward closures. Used by validation and evaluation passes.
_NO_GRAD = False


@contextmanager
def no_grad():
    global _NO_GRAD
    prev = _NO_GRAD
    _NO_GRAD = True
    try:
        yield
    finally:
        _NO_GRAD = prev


def _check_finite(data: np.ndarray, op: str) -> None:
    if _FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values produced by op '{op}'")


class Tensor:
    """A float64 array plus the bookkeeping for reverse-mode autodiff.

    Immutable after construction apart from gradient accumulation, which is
    confined to a single backward sweep per graph.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: tuple = (), backward_fn: Callable | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.op = op
        self._parents = parents
        self._backward = backward_fn

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    # operator sugar; scalars and arrays are lifted to constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __neg__(self):
        return mul(self, constant(-1.0))

    def __matmul__(self, other):
        return matmul(self, _lift(other))


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _node(data: np.ndarray, op: str, parents: Sequence[Tensor],
          backward_fn: Callable | None) -> Tensor:
    _check_finite(data, op)
    if _NO_GRAD or not any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=False, op=op)
    return Tensor(data, requires_grad=True, op=op, parents=tuple(parents),
                  backward_fn=backward_fn)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # Sharing g's buffer is safe: a node's grad is complete before its own
    # backward_fn runs, and accumulation allocates a fresh array.
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g if isinstance(g, np.ndarray) else np.asarray(g, dtype=np.float64)
    else:
        t.grad = t.grad + g


# ----------------------------------------------------------------------------
# elementwise arithmetic
# ----------------------------------------------------------------------------

def _broadcast_ok(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    """Equal shapes, a scalar operand, or one shape being a suffix of the other.

    This is leading-axis batch broadcasting: the smaller operand is repeated
    across the extra leading axes of the larger one.
    """
    if a == b or a == () or b == ():
        return True
    small, big = (a, b) if len(a) <= len(b) else (b, a)
    return big[len(big) - len(small):] == small


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    return g.sum(axis=tuple(range(extra))) if extra else g


def _binary(a: Tensor, b: Tensor, op: str):
    if not _broadcast_ok(a.shape, b.shape):
        raise ShapeMismatchError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary(a, b, "add")
    out_data = a.data + b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(out_data, "add", (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary(a, b, "sub")
    out_data = a.data - b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(out_data, "sub", (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a), _lift(b)
    _binary(a, b, "mul")
    out_data = a.data * b.data

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(out_data, "mul", (a, b), backward_fn)


# ----------------------------------------------------------------------------
# matmul
# ----------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product along the trailing two axes.

    Supported layouts: plain 2-D x 2-D, stacked left operand against 2-D
    weights ((..., n, m) @ (m, k)), and fully batched operands with equal
    leading axes.
    """
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"matmul: inner dimensions differ, {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ShapeMismatchError(f"matmul: batch axes differ, {a.shape} and {b.shape}")
    out_data = np.matmul(a.data, b.data)

    def backward_fn(g):
        if a.requires_grad:
            _accumulate(a, np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            if b.ndim == 2 and a.ndim > 2:
                m = a.shape[-1]
                k = g.shape[-1]
                gb = np.matmul(a.data.reshape(-1, m).T, g.reshape(-1, k))
            else:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            _accumulate(b, gb)

    return _node(out_data, "matmul", (a, b), backward_fn)


# ----------------------------------------------------------------------------
# reductions
# ----------------------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape: tuple[int, ...], axis, keepdims: bool) -> np.ndarray:
    if axis is None:
        return np.broadcast_to(g, shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(ax % len(shape) for ax in axes)
    if not keepdims:
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        _accumulate(a, _expand_reduced(np.asarray(g), a.shape, axis, keepdims))

    return _node(out_data, "sum", (a,), backward_fn)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in ((axis,) if isinstance(axis, int) else axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), constant(1.0 / float(count)))


# ----------------------------------------------------------------------------
# elementwise nonlinearities
# ----------------------------------------------------------------------------

def square(a: Tensor) -> Tensor:
    a = _lift(a)
    out_data = a.data * a.data

    def backward_fn(g):
        _accumulate(a, g * (2.0 * a.data))

    return _node(out_data, "square", (a,), backward_fn)


def sqrt(a: Tensor) -> Tensor:
    a = _lift(a)
    out_data = np.sqrt(a.data)

    def backward_fn(g):
        _accumulate(a, g * (0.5 / out_data))

    return _node(out_data, "sqrt", (a,), backward_fn)


def _sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.exp(np.negative(x))
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def sigmoid(a: Tensor) -> Tensor:
    a = _lift(a)
    out_data = _sigmoid_np(a.data)

    def backward_fn(g):
        tmp = 1.0 - out_data
        tmp *= out_data
        tmp *= g
        _accumulate(a, tmp)

    return _node(out_data, "sigmoid", (a,), backward_fn)


def silu(a: Tensor) -> Tensor:
    a = _lift(a)
    s = _sigmoid_np(a.data)
    out_data = a.data * s

    def backward_fn(g):
        tmp = 1.0 - s
        tmp *= a.data
        tmp += 1.0
        tmp *= s
        tmp *= g
        _accumulate(a, tmp)

    return _node(out_data, "silu", (a,), backward_fn)


def l2_norm(a: Tensor, axis: int = -1, keepdims: bool = True) -> Tensor:
    """Euclidean norm along one axis; composite of square, sum and sqrt."""
    return sqrt(tsum(square(a), axis=axis, keepdims=keepdims))


def linear(x: Tensor, w: Tensor, b: Tensor | None = None,
           activate: bool = False) -> Tensor:
    """Fused x @ w + b with optional SiLU: one graph node instead of three.

    Semantically identical to composing matmul, add and silu; fusing them
    keeps the training hot loop off the op-dispatch overhead. x is (R, n),
    w is (n, m), b is (m,).
    """
    x, w = _lift(x), _lift(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeMismatchError(f"linear: incompatible shapes {x.shape} and {w.shape}")
    z = np.matmul(x.data, w.data)
    if b is not None:
        b = _lift(b)
        if b.shape != (w.shape[1],):
            raise ShapeMismatchError(f"linear: bias {b.shape} does not match width {w.shape[1]}")
        z += b.data
    if activate:
        s = _sigmoid_np(z)
        out_data = z * s
    else:
        out_data = z

    def backward_fn(g):
        if activate:
            gz = 1.0 - s
            gz *= out_data
            gz += s
            gz *= g
        else:
            gz = g
        if x.requires_grad:
            _accumulate(x, np.matmul(gz, w.data.T))
        if w.requires_grad:
            _accumulate(w, np.matmul(x.data.T, gz))
        if b is not None and b.requires_grad:
            _accumulate(b, gz.sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out_data, "linear", parents, backward_fn)


# ----------------------------------------------------------------------------
# structural ops
# ----------------------------------------------------------------------------

def concat(parts: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = [_lift(p) for p in parts]
    if not parts:
        raise ValueError("concat: empty input")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        for p, gs in zip(parts, np.split(g, offsets, axis=axis)):
            _accumulate(p, gs)

    return _node(out_data, "concat", tuple(parts), backward_fn)


def take(a: Tensor, index: np.ndarray, axis: int = 0) -> Tensor:
    """Gather slices of `a` along `axis` by integer index."""
    a = _lift(a)
    index = np.asarray(index)
    out_data = np.take(a.data, index, axis=axis)

    def backward_fn(g):
        if axis == 0:
            ga = _segment_sum_np(g, index, a.shape[0])
        else:
            ga = np.zeros(a.shape)
            np.add.at(ga, (slice(None),) * (axis % a.ndim) + (index,), g)
        _accumulate(a, ga)

    return _node(out_data, "take", (a,), backward_fn)


def scatter_sum(values: Tensor, index: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of `values` into `num_segments` buckets selected by `index`.

    out[s] = sum of values[e] over all e with index[e] == s. Rows of unused
    segments are zero. Deterministic regardless of index order.
    """
    values = _lift(values)
    index = np.asarray(index)
    if index.shape != values.shape[:1]:
        raise ShapeMismatchError(
            f"scatter_sum: index shape {index.shape} does not match leading axis of {values.shape}")
    out_data = _segment_sum_np(values.data, index, num_segments)

    def backward_fn(g):
        _accumulate(values, g[index])

    return _node(out_data, "scatter_sum", (values,), backward_fn)


def _segment_sum_np(values: np.ndarray, index: np.ndarray, num: int) -> np.ndarray:
    out = np.zeros((num,) + values.shape[1:], dtype=np.float64)
    if values.shape[0] == 0:
        return out
    diffs = np.diff(index)
    if np.all(diffs >= 0):  # presorted, the common case for batched graphs
        sorted_idx, sorted_vals = index, values
        starts = np.concatenate(([0], np.flatnonzero(diffs) + 1))
    else:
        order = np.argsort(index, kind="stable")
        sorted_idx = index[order]
        sorted_vals = values[order]
        starts = np.concatenate(([0], np.flatnonzero(np.diff(sorted_idx)) + 1))
    out[sorted_idx[starts]] = np.add.reduceat(sorted_vals, starts, axis=0)
    return out


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = _lift(a)
    shape = tuple(shape)
    out_data = a.data.reshape(shape)

    def backward_fn(g):
        _accumulate(a, g.reshape(a.shape))

    return _node(out_data, "reshape", (a,), backward_fn)


def expand(a: Tensor, n: int, axis: int) -> Tensor:
    """Repeat a size-1 axis n times (the inverse of summing over it)."""
    a = _lift(a)
    ax = axis % max(a.ndim, 1)
    if a.shape[ax] != 1:
        raise ShapeMismatchError(f"expand: axis {axis} of {a.shape} must have extent 1")
    out_data = np.repeat(a.data, n, axis=ax)

    def backward_fn(g):
        _accumulate(a, g.sum(axis=ax, keepdims=True))

    return _node(out_data, "expand", (a,), backward_fn)


# ----------------------------------------------------------------------------
# backward sweep and gradient verification
# ----------------------------------------------------------------------------

def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root, accumulating leaf gradients."""
    if root.data.shape != ():
        raise ShapeMismatchError(f"backward: root must be scalar, got shape {root.data.shape}")
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    for node in topo:  # drop any grads left over from an earlier sweep
        node.grad = None
    root.grad = np.ones(())
    for node in reversed(topo):
        if node._backward is not None:
            node._backward(node.grad)


def evaluate_with_gradients(computation: Callable[[dict[str, Tensor]], Tensor],
                            inputs: dict[str, Tensor]) -> tuple[float, dict[str, np.ndarray]]:
    """Run a scalar-valued expression and return its value and exact gradients.

    `computation` maps the named input tensors to a scalar Tensor built from
    the supported op set. Gradients cover every input with requires_grad.
    """
    for name, t in inputs.items():
        if not np.all(np.isfinite(t.data)):
            raise FloatingPointError(f"input '{name}' contains non-finite values")
    out = computation(inputs)
    if out.data.shape != ():
        raise ShapeMismatchError(f"computation must be scalar-valued, got shape {out.data.shape}")
    backward(out)
    grads = {name: t.grad if t.grad is not None else np.zeros(t.shape)
             for name, t in inputs.items() if t.requires_grad}
    return float(out.data), grads


def grad_check_params(loss_fn: Callable[[], Tensor], params: dict[str, Tensor],
                      eps: float = 1e-5) -> float:
    """Like grad_check, but for closures over live parameter tensors.

    loss_fn rebuilds its graph on every call and reads the tensors in
    `params` directly; coordinates are perturbed in place for the central
    differences and restored afterwards.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"grad_check_params: eps {eps} outside [1e-7, 1e-3]")
    loss = loss_fn()
    if loss.data.shape != ():
        raise ShapeMismatchError(f"loss must be scalar, got shape {loss.data.shape}")
    backward(loss)
    grads = {name: (t.grad.copy() if t.grad is not None else np.zeros(t.shape))
             for name, t in params.items()}
    worst = 0.0
    with no_grad():  # the difference quotients only need forward values
        for name, t in params.items():
            flat = t.data.reshape(-1)
            gflat = grads[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = float(loss_fn().data)
                flat[i] = orig - eps
                f_minus = float(loss_fn().data)
                flat[i] = orig
                central = (f_plus - f_minus) / (2.0 * eps)
                worst = max(worst, abs(gflat[i] - central) / max(1.0, abs(central)))
    return worst


def grad_check(computation: Callable[[dict[str, Tensor]], Tensor],
               inputs: dict[str, Tensor], eps: float = 1e-5) -> float:
    """Max relative error of autodiff against central finite differences.

    Error metric per coordinate: |autodiff - central| / max(1, |central|).
    """
    global _FINITE_CHECKS
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"grad_check: eps {eps} outside [1e-7, 1e-3]")
    _FINITE_CHECKS = True
    try:
        _, grads = evaluate_with_gradients(computation, inputs)

        def value_at(arrays: dict[str, np.ndarray]) -> float:
            fresh = {name: Tensor(arrays[name], requires_grad=inputs[name].requires_grad)
                     for name in inputs}
            return float(computation(fresh).data)

        worst = 0.0
        base = {name: t.data.copy() for name, t in inputs.items()}
        for name, t in inputs.items():
            if not t.requires_grad:
                continue
            flat = base[name].reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                f_plus = value_at(base)
                flat[i] = orig - eps
                f_minus = value_at(base)
                flat[i] = orig
                central = (f_plus - f_minus) / (2.0 * eps)
                ad = grads[name].reshape(-1)[i]
                err = abs(ad - central) / max(1.0, abs(central))
                worst = max(worst, err)
        return worst
    finally:
        _FINITE_CHECKS = False
