"""Layers and parameter management on top of the autodiff core.

Modules register parameters and submodules by attribute assignment; names
are dotted paths ("branch0.block2.sgc.W_str.1"). Initialisation draws from
an explicit numpy Generator so a model is reproducible bit-for-bit from a
seed. Dropout owns a seeded stream per module instance.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Parameter:
    """A named learnable tensor."""

    def __init__(self, data, dtype=None):
        self.tensor = Tensor(np.asarray(data, dtype=dtype), requires_grad=True)
        self.name = ""  # assigned when the owning model is finalised

    @property
    def data(self):
        return self.tensor.data

    @data.setter
    def data(self, value):
        self.tensor.data = np.asarray(value, dtype=self.tensor.data.dtype)

    @property
    def shape(self):
        return self.tensor.shape

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def xavier_uniform(rng, fan_out, fan_in, shape=None, dtype=np.float64):
    """Uniform in +-sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape or (fan_out, fan_in)).astype(dtype)


class Module:
    """Minimal container: tracks parameters, buffers, children, and mode."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        elif isinstance(value, (list, tuple)) and value and \
                all(isinstance(v, (Parameter, Module)) for v in value):
            for i, v in enumerate(value):
                if isinstance(v, Parameter):
                    self._params[f"{key}.{i}"] = v
                else:
                    self._children[f"{key}.{i}"] = v
        object.__setattr__(self, key, value)

    def register_buffer(self, key, value):
        """Non-learnable state saved in checkpoints (e.g. running stats)."""
        self._buffers[key] = np.asarray(value)
        object.__setattr__(self, key, self._buffers[key])

    def set_buffer(self, key, value):
        self._buffers[key] = np.asarray(value, dtype=self._buffers[key].dtype)
        object.__setattr__(self, key, self._buffers[key])

    def named_parameters(self, prefix=""):
        for key, p in self._params.items():
            yield (f"{prefix}{key}", p)
        for key, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{key}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for key, b in self._buffers.items():
            yield (f"{prefix}{key}", b)
        for key, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{key}.")

    def finalize(self, prefix=""):
        """Assign dotted names to every parameter; names must be unique."""
        names = set()
        for name, p in self.named_parameters(prefix):
            if name in names:
                raise ValueError(f"duplicate parameter name {name!r}")
            names.add(name)
            p.name = name
        return self

    def train(self):
        object.__setattr__(self, "training", True)
        for child in self._children.values():
            child.train()
        return self

    def eval(self):
        object.__setattr__(self, "training", False)
        for child in self._children.values():
            child.eval()
        return self

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def num_params(self):
        return sum(p.tensor.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.tensor.grad = None

    def astype(self, dtype):
        """Cast parameters and buffers in place (training profile uses f32)."""
        for p in self.parameters():
            p.tensor.data = p.tensor.data.astype(dtype)
        for mod in self.modules():
            for key in list(mod._buffers):
                if mod._buffers[key].dtype.kind == "f":
                    mod.set_buffer(key, mod._buffers[key].astype(dtype))
        return self


class Linear(Module):
    """y = x @ W.T + b with W of shape (out, in)."""

    def __init__(self, d_in, d_out, rng, bias=True, zero_init=False):
        super().__init__()
        if zero_init:
            self.W = Parameter(np.zeros((d_out, d_in)))
        else:
            self.W = Parameter(xavier_uniform(rng, d_out, d_in))
        self.bias = Parameter(np.zeros(d_out)) if bias else None

    def __call__(self, x):
        y = T.matmul(x, T.transpose(self.W.tensor))
        if self.bias is not None:
            y = T.add(y, self.bias.tensor)
        return y


class BatchNorm(Module):
    """Per-channel batch norm over the last axis.

    Training mode normalises by batch statistics over all leading axes and
    updates running stats; eval mode uses running stats. eps=1e-5,
    momentum=0.1.
    """

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels))
        self.register_buffer("running_var", np.ones(channels))
        self.eps = eps
        self.momentum = momentum

    def __call__(self, x):
        axes = tuple(range(x.ndim - 1))
        if self.training:
            mu = T.reduce_mean(x, axes, keepdims=True)
            centered = T.sub(x, mu)
            var = T.reduce_mean(T.mul(centered, centered), axes, keepdims=True)
            self.set_buffer("running_mean", (1 - self.momentum) * self.running_mean
                            + self.momentum * mu.data.reshape(-1))
            self.set_buffer("running_var", (1 - self.momentum) * self.running_var
                            + self.momentum * var.data.reshape(-1))
            inv = T.pow_const(T.add(var, self.eps * np.ones(1, dtype=x.dtype)), -0.5)
            xhat = T.mul(centered, inv)
        else:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = T.mul(T.sub(x, Tensor(self.running_mean.astype(x.dtype))),
                         Tensor((inv).astype(x.dtype)))
        return T.add(T.mul(xhat, self.gamma.tensor), self.beta.tensor)


class Dropout(Module):
    """Inverted dropout with an explicitly seeded Bernoulli stream."""

    def __init__(self, rate=0.5, seed=0):
        super().__init__()
        self.rate = float(rate)
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def __call__(self, x):
        if not self.training or self.rate == 0.0:
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return T.mul(x, Tensor(mask))


class MLP(Module):
    """Linear stack: linear(+relu between layers), optional dropout after the
    first activation and batch-norm after the last, mirroring the graph
    inference module's "linear-relu-dropout-linear-relu-bn" recipe."""

    def __init__(self, dims, rng, dropout=0.0, batch_norm=False, seed=0,
                 final_linear=None, zero_init_last=False):
        super().__init__()
        layers = []
        for i in range(len(dims) - 1):
            zero = zero_init_last and i == len(dims) - 2 and final_linear is None
            layers.append(Linear(dims[i], dims[i + 1], rng, zero_init=zero))
        self.layers = layers
        self.drop = Dropout(dropout, seed) if dropout > 0 else None
        self.bn = BatchNorm(dims[-1]) if batch_norm else None
        if final_linear is not None:
            self.out = Linear(dims[-1], final_linear, rng,
                              zero_init=zero_init_last)
        else:
            self.out = None

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = T.relu(layer(x))
            if i == 0 and self.drop is not None:
                x = self.drop(x)
        if self.bn is not None:
            x = self.bn(x)
        if self.out is not None:
            x = self.out(x)
        return x


class TemporalConv(Module):
    """Strided 1-D convolution along time, applied per node."""

    def __init__(self, c_in, c_out, tau, stride, rng):
        super().__init__()
        self.W = Parameter(xavier_uniform(rng, c_out, tau * c_in,
                                          shape=(c_out, tau, c_in)))
        self.stride = stride
        self.tau = tau

    def __call__(self, x):
        return T.conv1d_time(x, self.W.tensor, self.stride)


class GRUCell(Module):
    """Gated recurrent unit applied row-wise; weights shared across rows."""

    def __init__(self, d_in, d_hidden, rng):
        super().__init__()
        self.W_i = Parameter(xavier_uniform(rng, 3 * d_hidden, d_in))
        self.W_h = Parameter(xavier_uniform(rng, 3 * d_hidden, d_hidden))
        self.b_i = Parameter(np.zeros(3 * d_hidden))
        self.b_h = Parameter(np.zeros(3 * d_hidden))
        self.d_hidden = d_hidden

    def __call__(self, x, h):
        d = self.d_hidden
        gi = T.add(T.matmul(x, T.transpose(self.W_i.tensor)), self.b_i.tensor)
        gh = T.add(T.matmul(h, T.transpose(self.W_h.tensor)), self.b_h.tensor)

        def chunk(t, k):
            idx = np.arange(k * d, (k + 1) * d)
            return T.take(t, idx, axis=t.ndim - 1)

        r = T.sigmoid(T.add(chunk(gi, 0), chunk(gh, 0)))
        z = T.sigmoid(T.add(chunk(gi, 1), chunk(gh, 1)))
        n = T.tanh(T.add(chunk(gi, 2), T.mul(r, chunk(gh, 2))))
        one = Tensor(np.ones(1, dtype=z.dtype))
        return T.add(T.mul(T.sub(one, z), n), T.mul(z, h))
