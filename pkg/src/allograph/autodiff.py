"""Small reverse-mode automatic differentiation over dense float64 arrays.

Every operation evaluates eagerly and, when any input requires a gradient,
records a node holding its parents and a backward closure.  Nodes carry a
monotonically increasing sequence number, so the reverse of recording order
is always a valid topological order; :func:`backward` replays exactly that.

Only the handful of operations needed by the encoder, softmax, allophone
graph composition and CTC loss are provided.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

_sequence = itertools.count()


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class Tensor:
    """Dense float64 array with an optional gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_seq", "_consumed")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents = ()
        self._backward = None
        self._seq = next(_sequence)
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def is_leaf(self):
        return self._backward is None

    def zero_grad(self):
        self.grad = None

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def record(kind, inputs, data, backward_fn):
    """Register the result of an operation.

    ``backward_fn(grad_out)`` must return one gradient array (or None) per
    input, in input order.
    """
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._parents = tuple(inputs)
        out._backward = backward_fn
        out.name = kind
    return out


def _unbroadcast(grad, shape):
    # reduce a broadcast gradient back to the operand's shape
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a, b, kind):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot combine shapes {a.shape} and {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return record("add", (a, b), a.data + b.data,
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return record("mul", (a, b), a.data * b.data,
                  lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: expected (m, k) @ (k, n), got {a.shape} @ {b.shape}")
    return record("matmul", (a, b), a.data @ b.data,
                  lambda g: (g @ b.data.T, a.data.T @ g))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", (a,), out, lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore"):
        out = np.log(a.data)
    return record("log", (a,), out, lambda g: (g / a.data,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record("tanh", (a,), out, lambda g: (g * (1.0 - out ** 2),))


def relu(a):
    a = as_tensor(a)
    on = a.data > 0
    return record("relu", (a,), np.where(on, a.data, 0.0), lambda g: (g * on,))


def _lse(x, axis):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))


def logsumexp(a, axis=-1):
    a = as_tensor(a)
    out = _lse(a.data, axis)

    def backward(g):
        with np.errstate(invalid="ignore"):
            weights = np.exp(a.data - out)
        weights = np.nan_to_num(weights)
        return (np.expand_dims(g, axis) * weights,)

    return record("logsumexp", (a,), np.squeeze(out, axis=axis), backward)


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = a.data - _lse(a.data, axis)
    probs = np.exp(out)

    def backward(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return record("log_softmax", (a,), out, backward)


def softmax(a, axis=-1):
    a = as_tensor(a)
    with np.errstate(invalid="ignore"):
        out = np.exp(a.data - _lse(a.data, axis))

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return record("softmax", (a,), out, backward)


def reduce_sum(a, axis=None):
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis)

    def backward(g):
        if axis is None:
            return (np.full(a.shape, float(g)),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return record("sum", (a,), out, backward)


def take(a, index, axis=-1):
    """Gather entries of ``a`` along ``axis``; repeated indices are allowed."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    if index.size and (index.min() < 0 or index.max() >= a.shape[axis]):
        raise ShapeError(f"take: index out of range for axis {axis} of size {a.shape[axis]}")

    def backward(g):
        grad = np.zeros(a.shape)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (grad,)

    return record("take", (a,), np.take(a.data, index, axis=axis), backward)


def rows(a, start, stop):
    """Slice rows ``start:stop`` of a 2-D tensor."""
    a = as_tensor(a)

    def backward(g):
        grad = np.zeros(a.shape)
        grad[start:stop] = g
        return (grad,)

    return record("rows", (a,), a.data[start:stop], backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return tuple(np.take(g, np.arange(lo, hi), axis=axis) for lo, hi in zip(bounds[:-1], bounds[1:]))

    return record("concat", tuple(tensors), out, backward)


def masked_fill(a, mask, value):
    """Replace entries where ``mask`` is true by a constant; no gradient flows there."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return record("masked_fill", (a,), np.where(mask, value, a.data),
                  lambda g: (np.where(mask, 0.0, g),))


def segment_logsumexp(a, segment_ids, num_segments):
    """Log-sum-exp over groups of columns of a 2-D tensor.

    Column ``j`` of ``a`` contributes to output column ``segment_ids[j]``.
    Empty groups produce ``-inf``.
    """
    a = as_tensor(a)
    segment_ids = np.asarray(segment_ids, dtype=np.intp)
    if a.data.ndim != 2 or a.shape[1] != segment_ids.size:
        raise ShapeError(f"segment_logsumexp: {a.shape} does not match {segment_ids.size} segment ids")
    rows_, _ = a.shape
    peak = np.full((rows_, num_segments), -np.inf)
    np.maximum.at(peak.T, segment_ids, a.data.T)
    safe_peak = np.where(np.isfinite(peak), peak, 0.0)
    shifted = np.exp(a.data - safe_peak[:, segment_ids])
    total = np.zeros((rows_, num_segments))
    np.add.at(total.T, segment_ids, shifted.T)
    with np.errstate(divide="ignore"):
        out = safe_peak + np.log(total)

    def backward(g):
        with np.errstate(invalid="ignore"):
            weights = np.nan_to_num(np.exp(a.data - out[:, segment_ids]))
        return (g[:, segment_ids] * weights,)

    return record("segment_logsumexp", (a,), out, backward)


@dataclass
class Tape:
    """Operations reachable from a loss, in the order they were recorded."""

    nodes: list = field(default_factory=list)

    @classmethod
    def collect(cls, loss):
        seen, stack, nodes = set(), [loss], []
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            nodes.append(node)
            stack.extend(node._parents)
        nodes.sort(key=lambda n: n._seq)
        return cls(nodes)

    def replay(self, loss):
        grads = {id(loss): np.ones(loss.shape)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.is_leaf:
                if node.requires_grad:
                    node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if node._consumed:
                raise RuntimeError("backward through a graph that was already consumed")
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = np.asarray(pg, dtype=np.float64)
            node._consumed = True


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every trainable leaf."""
    if loss.data.size != 1 or loss.data.ndim != 0:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return {}
    tape = Tape.collect(loss)
    tape.replay(loss)
    return {id(n): n.grad for n in tape.nodes if n.is_leaf and n.requires_grad}


@dataclass
class GradcheckReport:
    max_rel_error: dict
    tolerance: float

    @property
    def passed(self):
        return all(err < self.tolerance for err in self.max_rel_error.values())

    @property
    def worst(self):
        return max(self.max_rel_error.values(), default=0.0)


def gradcheck(fn, leaves, step=1e-5, tolerance=1e-4, floor=1e-6):
    """Compare analytic gradients of ``fn()`` against central differences.

    ``fn`` takes no arguments and returns a scalar Tensor computed from
    ``leaves``.  Relative error is ``|a - n| / max(|a|, |n|, floor)``
    elementwise; ``floor`` keeps vanishing gradients from amplifying
    finite-difference noise.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    for leaf in leaves:
        leaf.requires_grad = True
        leaf.zero_grad()
    backward(fn())
    report = {}
    for i, leaf in enumerate(leaves):
        analytic = np.zeros(leaf.shape) if leaf.grad is None else leaf.grad
        numeric = np.zeros(leaf.shape)
        flat = leaf.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = fn().item()
            flat[j] = orig - step
            down = fn().item()
            flat[j] = orig
            numeric.reshape(-1)[j] = (up - down) / (2 * step)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        err = np.abs(analytic - numeric) / denom
        key = leaf.name or f"leaf{i}"
        if key in report:
            key = f"{key}#{i}"
        report[key] = float(err.max()) if err.size else 0.0
    return GradcheckReport(report, tolerance)
