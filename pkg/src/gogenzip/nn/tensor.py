"""Dense tensors with reverse-mode differentiation.

Every primitive computes its forward value eagerly with numpy and, when any
input requires a gradient, records a closure that maps the output gradient
to input gradients. :func:`backward` replays those closures in reverse
topological order.
"""

from __future__ import annotations

import math

import numpy as np

from ..exceptions import DimensionError, InvalidArgumentError

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


class Tensor:
    """A float64 array plus the bookkeeping needed for backpropagation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{tag})"

    def __len__(self):
        return self.shape[0]

    # operator sugar
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

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn, op):
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data / b.data, (a, b), backward, "div")


def power(a, exponent):
    a = as_tensor(a)
    exponent = float(exponent)

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return _node(a.data**exponent, (a,), backward, "pow")


def square(a):
    a = as_tensor(a)

    def backward(g):
        return (2.0 * g * a.data,)

    return _node(a.data * a.data, (a,), backward, "square")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return _node(out, (a,), backward, "exp")


def log(a):
    a = as_tensor(a)

    def backward(g):
        return (g / a.data,)

    return _node(np.log(a.data), (a,), backward, "log")


# ---------------------------------------------------------------------------
# linear algebra and shape


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes do not conform: {a.shape} @ {b.shape}")

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), backward, "matmul")


def linear(x, weight, bias=None):
    """``x @ weight + bias`` with the bias broadcast over the batch."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(
            f"linear: input shape {x.shape} does not conform to weight shape {weight.shape}"
        )
    if bias is None:
        return matmul(x, weight)
    bias = as_tensor(bias)
    if bias.shape != (weight.shape[1],):
        raise DimensionError(
            f"linear: bias shape {bias.shape} does not match weight shape {weight.shape}"
        )
    out = x.data @ weight.data + bias.data

    def backward(g):
        return g @ weight.data.T, x.data.T @ g, g.sum(axis=0)

    return _node(out, (x, weight, bias), backward, "linear")


def reshape(a, shape):
    a = as_tensor(a)
    src = a.shape

    def backward(g):
        return (g.reshape(src),)

    return _node(a.data.reshape(shape), (a,), backward, "reshape")


def getitem(a, index):
    """Basic (slice/integer) indexing. Fancy indexing goes through :func:`take_rows`."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _node(a.data[index], (a,), backward, "getitem")


def take_rows(table, indices):
    """Gather rows of a 2-D table; repeated indices accumulate gradient."""
    table = as_tensor(table)
    idx = np.asarray(indices, dtype=np.int64)

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        return (full,)

    return _node(table.data[idx], (table,), backward, "take_rows")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def tmax(a, axis=-1):
    """Maximum along ``axis``; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis).squeeze(axis)

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _node(out, (a,), backward, "max")


# ---------------------------------------------------------------------------
# activations


def elu(a, alpha=1.0):
    a = as_tensor(a)
    neg = alpha * np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, neg)

    def backward(g):
        return (g * np.where(a.data > 0, 1.0, neg + alpha),)

    return _node(out, (a,), backward, "elu")


def gelu(a):
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    inner = _SQRT_2_OVER_PI * (x + _GELU_C * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _node(out, (a,), backward, "gelu")


def identity(a):
    return as_tensor(a)


ACTIVATIONS = {"elu": elu, "gelu": gelu, "identity": identity}


def activation(kind, a):
    try:
        fn = ACTIVATIONS[kind.lower()]
    except KeyError:
        raise InvalidArgumentError(f"unsupported activation {kind!r}") from None
    return fn(a)


def softmax(a, axis=-1):
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _node(s, (a,), backward, "softmax")


def clamp(a, lo, hi):
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)

    def backward(g):
        return (g * inside,)

    return _node(np.clip(a.data, lo, hi), (a,), backward, "clamp")


# ---------------------------------------------------------------------------
# gradient routing


def stop_gradient(a):
    """Same value, detached from the graph."""
    return Tensor(as_tensor(a).data)


def straight_through(soft, hard):
    """Forward value ``hard``; backward passes the gradient to ``soft`` unchanged.

    This is ``hard + stop_gradient(soft) - soft`` evaluated without the
    floating-point residue, so the forward value is exactly ``hard``.
    """
    soft = as_tensor(soft)
    hard = np.asarray(hard, dtype=np.float64)
    if hard.shape != soft.shape:
        raise DimensionError(f"straight_through: soft {soft.shape} vs hard {hard.shape}")

    def backward(g):
        return (g,)

    return _node(hard.copy(), (soft,), backward, "straight_through")


def dropout(a, rate, training, rng):
    """Inverted dropout. Identity in eval mode or when ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {rate}")
    a = as_tensor(a)
    if not training or rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, keep)
