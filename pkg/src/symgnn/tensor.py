"""Reverse-mode autodiff over dense numpy arrays.

Eager execution: every primitive computes its value immediately and records
a closure that scatters the output gradient back to its inputs. A backward
pass walks the recorded graph in reverse topological order. 64-bit is the
default dtype (the verification profile); 32-bit is used by the training
profile.

Single-threaded per graph during backward; tensors with no pending backward
may be shared freely across threads.
"""

from __future__ import annotations

import numpy as np

# Default dtype for freshly created tensors. float64 for verification,
# float32 for the training profile.
DEFAULT_DTYPE = np.float64

# When True (default) every primitive validates that its output is finite.
GUARD_FINITE = True


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with a primitive."""


class NonFiniteError(FloatingPointError):
    """Raised when a primitive produces NaN or Inf."""


def _check_finite(arr, op):
    if GUARD_FINITE and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by '{op}'")


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """Dense n-dimensional array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False, dtype=None,
                 _parents=(), _backward=None, _op="leaf"):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._backward = _backward
        self._op = _op
        _check_finite(arr, _op)

    # -- introspection ------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, grad={self.requires_grad})"

    # -- graph mechanics ----------------------------------------------------

    def _needs_graph(self):
        return self.requires_grad or self._parents

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate gradients of self w.r.t. every reachable leaf.

        `grad` defaults to ones (scalar outputs get seed 1.0).
        """
        if grad is None:
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"backward seed shape {grad.shape} != value shape {self.shape}")

        topo, seen = [], set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): grad}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in node._backward(g):
                if pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        raise TypeError("tensor/tensor division is not a primitive; use pow_const")

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method aliases -----------------------------------------------------

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def abs(self):
        return absolute(self)

    def clip_min(self, floor):
        return clip_min(self, floor)

    def pow_const(self, p):
        return pow_const(self, p)

    def softmax(self):
        return softmax(self)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    @property
    def T(self):
        return transpose(self, None)

    def take(self, indices, axis):
        return take(self, indices, axis)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _make(data, parents, backward, op):
    parents = tuple(p for p in parents if p._needs_graph())
    if not parents:
        backward = None
    out = Tensor(data, _parents=parents, _backward=backward, _op=op)
    return out


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b, a.dtype if isinstance(a, Tensor) else None)
    try:
        data = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: cannot broadcast {a.shape} with {b.shape}") from e

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape)))

    return _make(data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as e:
        raise ShapeError(f"sub: cannot broadcast {a.shape} with {b.shape}") from e

    def backward(g):
        return ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(-g, b.shape)))

    return _make(data, (a, b), backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: cannot broadcast {a.shape} with {b.shape}") from e

    def backward(g):
        return ((a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape)))

    return _make(data, (a, b), backward, "mul")


def scale(a, s):
    a = as_tensor(a)
    s = float(s)
    data = a.data * s

    def backward(g):
        return ((a, g * s),)

    return _make(data, (a,), backward, "scale")


def relu(a):
    a = as_tensor(a)
    data = np.maximum(a.data, 0.0)

    def backward(g):
        return ((a, g * (a.data > 0)),)

    return _make(data, (a,), backward, "relu")


def sigmoid(a):
    a = as_tensor(a)
    data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return ((a, g * data * (1.0 - data)),)

    return _make(data, (a,), backward, "sigmoid")


def tanh(a):
    a = as_tensor(a)
    data = np.tanh(a.data)

    def backward(g):
        return ((a, g * (1.0 - data * data)),)

    return _make(data, (a,), backward, "tanh")


def exp(a):
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        data = np.exp(a.data)

    def backward(g):
        return ((a, g * data),)

    return _make(data, (a,), backward, "exp")


def log(a):
    a = as_tensor(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def backward(g):
        return ((a, g / a.data),)

    return _make(data, (a,), backward, "log")


def absolute(a):
    a = as_tensor(a)
    data = np.abs(a.data)

    def backward(g):
        return ((a, g * np.sign(a.data)),)

    return _make(data, (a,), backward, "abs")


def clip_min(a, floor):
    """max(a, floor); gradient is zero where the floor is active."""
    a = as_tensor(a)
    floor = float(floor)
    data = np.maximum(a.data, floor)

    def backward(g):
        return ((a, g * (a.data > floor)),)

    return _make(data, (a,), backward, "clip_min")


def pow_const(a, p):
    a = as_tensor(a)
    p = float(p)
    with np.errstate(divide="ignore", invalid="ignore"):
        data = a.data ** p

    def backward(g):
        return ((a, g * p * a.data ** (p - 1.0)),)

    return _make(data, (a,), backward, "pow_const")


# -- softmax ----------------------------------------------------------------

def softmax(a):
    """Softmax over the last axis, stabilised by per-row max subtraction."""
    a = as_tensor(a)
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return ((a, (g - dot) * data),)

    return _make(data, (a,), backward, "softmax")


# -- linear algebra ---------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 1:
        raise ShapeError("matmul: operands must have ndim >= 1")
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = gb = None
        if a._needs_graph():
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if b.ndim > 1 else \
                np.multiply.outer(g, b.data) if a.ndim > 1 else g * b.data
            ga = _unbroadcast(ga, a.shape)
        if b._needs_graph():
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if a.ndim > 1 else \
                np.multiply.outer(a.data, g)
            gb = _unbroadcast(gb, b.shape)
        return ((a, ga), (b, gb))

    return _make(data, (a, b), backward, "matmul")


# -- shape manipulation -----------------------------------------------------

def reshape(a, shape):
    a = as_tensor(a)
    data = a.data.reshape(shape)

    def backward(g):
        return ((a, g.reshape(a.shape)),)

    return _make(data, (a,), backward, "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    data = np.transpose(a.data, axes)
    inv = None if axes is None else np.argsort(axes)

    def backward(g):
        return ((a, np.transpose(g, inv)),)

    return _make(data, (a,), backward, "transpose")


def cat(tensors, axis):
    """Concatenate along `axis`."""
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(zip(tensors, np.split(g, splits, axis=axis)))

    return _make(data, tuple(tensors), backward, "cat")


def take(a, indices, axis):
    """Gather rows along `axis` by an index list; backward scatter-adds."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(a.data, idx, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        moved = np.moveaxis(ga, axis, 0)
        np.add.at(moved, idx, np.moveaxis(g, axis, 0))
        return ((a, ga),)

    return _make(data, (a,), backward, "take")


# -- reductions -------------------------------------------------------------

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return ((a, np.broadcast_to(g, a.shape).copy()),)

    return _make(data, (a,), backward, "sum")


def reduce_mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    data = a.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return ((a, np.broadcast_to(g, a.shape) / count),)

    return _make(data, (a,), backward, "mean")


# -- temporal convolution ---------------------------------------------------

def conv1d_time(x, w, stride=1):
    """1-D convolution along the time axis of an (N, T, M, C_in) tensor.

    The kernel `w` has shape (C_out, tau, C_in) and mixes channels while
    treating every node independently. Symmetric zero padding of
    (tau - 1) / 2 makes stride-1 outputs preserve T; output length is
    ceil(T / stride). `tau` must be odd.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4:
        raise ShapeError(f"conv1d_time: input must be (N,T,M,C), got {x.shape}")
    if w.ndim != 3:
        raise ShapeError(f"conv1d_time: kernel must be (C_out,tau,C_in), got {w.shape}")
    c_out, tau, c_in = w.shape
    if tau % 2 != 1:
        raise ShapeError(f"conv1d_time: kernel size {tau} must be odd")
    if x.shape[-1] != c_in:
        raise ShapeError(
            f"conv1d_time: channel mismatch, input {x.shape} vs kernel {w.shape}")
    n, t, m, _ = x.shape
    pad = (tau - 1) // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0), (0, 0)))
    t_out = -(-t // stride)
    # windows: (N, T_out, M, tau, C_in)
    win = np.lib.stride_tricks.sliding_window_view(xp, tau, axis=1)[:, ::stride]
    win = np.ascontiguousarray(np.moveaxis(win, -1, 3))
    cols = win.reshape(n, t_out, m, tau * c_in)
    w2 = w.data.reshape(c_out, tau * c_in)
    data = np.matmul(cols, w2.T)

    def backward(g):
        gx = gw = None
        if w._needs_graph():
            gw = np.tensordot(g, cols, axes=([0, 1, 2], [0, 1, 2])).reshape(w.shape)
        if x._needs_graph():
            dcols = np.matmul(g, w2).reshape(n, t_out, m, tau, c_in)
            gxp = np.zeros_like(xp)
            for j in range(tau):
                gxp[:, j:j + (t_out - 1) * stride + 1:stride] += dcols[:, :, :, j]
            gx = gxp[:, pad:pad + t] if pad else gxp
        return ((x, gx), (w, gw))

    return _make(data, (x, w), backward, "conv1d_time")


# -- parameter gradients ----------------------------------------------------

def gradients(loss, params):
    """Gradient of a scalar `loss` for each named parameter.

    `params` is an iterable of objects with `.name` and `.tensor`.
    Unreachable parameters get zero gradients of matching shape.
    """
    if loss.size != 1:
        raise ShapeError(f"gradients: loss must be scalar, got shape {loss.shape}")
    params = list(params)
    saved = {p.name: p.tensor.grad for p in params}
    for p in params:
        p.tensor.grad = None
    loss.backward(np.ones_like(loss.data))
    out = {}
    for p in params:
        g = p.tensor.grad
        out[p.name] = np.zeros_like(p.tensor.data) if g is None else g
        p.tensor.grad = saved[p.name]
    return out


# -- finite-difference checking ---------------------------------------------

def gradient_check(fn, shapes, seed, eps=1e-5):
    """Max relative error between analytic and central-difference gradients.

    `fn` maps a list of float64 Tensors (one per shape) to a Tensor; a fixed
    random linear functional reduces non-scalar outputs. Relative error per
    entry is |a - n| / max(1e-8, |a| + |n|); the max over all entries of all
    inputs is returned.
    """
    rng = np.random.default_rng(seed)
    inputs = [Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]

    def scalar(ts):
        out = fn(ts)
        if out.size == 1:
            return out
        probe = np.random.default_rng(seed + 104729).standard_normal(out.shape)
        return reduce_sum(mul(out, Tensor(probe)))

    out = scalar(inputs)
    for t in inputs:
        t.grad = None
    out.backward()
    analytic = [np.zeros(s) if t.grad is None else t.grad.copy()
                for s, t in zip(shapes, inputs)]

    worst = 0.0
    for k, t in enumerate(inputs):
        flat = t.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = float(scalar(inputs).data)
            flat[i] = orig - eps
            lo = float(scalar(inputs).data)
            flat[i] = orig
            numeric = (hi - lo) / (2 * eps)
            a = analytic[k].reshape(-1)[i]
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            worst = max(worst, err)
    return worst
