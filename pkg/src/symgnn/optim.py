"""SGD with momentum and Adam, operating on named parameter/gradient maps."""

from __future__ import annotations

import numpy as np


def sgd_step(params, grads, lr, momentum=0.0, state=None):
    """One SGD update: v <- momentum*v + g; p <- p - lr*v.

    `params` is a list of Parameter, `grads` a name->ndarray map. Returns the
    velocity state (pass it back in for the next step).
    """
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not 0.0 <= momentum < 1.0:
        raise ValueError(f"momentum must be in [0,1), got {momentum}")
    state = state if state is not None else {}
    for p in params:
        g = grads[p.name]
        if g.shape != p.tensor.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} != param shape {p.shape} for {p.name!r}")
        v = state.get(p.name)
        v = g.copy() if v is None else momentum * v + g
        state[p.name] = v
        p.tensor.data = p.tensor.data - lr * v
    return state


def adam_step(params, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, state=None):
    """One Adam update with bias correction. Returns the moment state."""
    if lr <= 0:
        raise ValueError(f"lr must be positive, got {lr}")
    if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
        raise ValueError(f"betas must be in [0,1), got {beta1}, {beta2}")
    state = state if state is not None else {"t": 0}
    state["t"] += 1
    t = state["t"]
    for p in params:
        g = grads[p.name]
        if g.shape != p.tensor.data.shape:
            raise ValueError(
                f"gradient shape {g.shape} != param shape {p.shape} for {p.name!r}")
        m = state.get(p.name + ".m", np.zeros_like(p.tensor.data))
        v = state.get(p.name + ".v", np.zeros_like(p.tensor.data))
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        state[p.name + ".m"] = m
        state[p.name + ".v"] = v
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p.tensor.data = p.tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


class SGD:
    def __init__(self, params, lr, momentum=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.state = {}

    def step(self, grads):
        sgd_step(self.params, grads, self.lr, self.momentum, self.state)


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = {"t": 0}

    def step(self, grads):
        adam_step(self.params, grads, self.lr, self.beta1, self.beta2,
                  self.eps, self.state)
