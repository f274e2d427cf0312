"""Task heads: class posterior from fused branch features, and the
self-regressive GRU pose decoder.

The decoder starts from the last observed pose, updates its per-joint hidden
state with a joint-scale graph conv, feeds pose/velocity/acceleration plus
the (differentiable) class posterior into a row-wise GRU, and emits a
residual displacement per frame. Its final linear layer is zero-initialised,
so an untrained decoder repeats the last observed frame exactly - the
last-frame baseline.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .graphconv import JointGraphConv
from .nn import GRUCell, Linear, MLP, Module
from .tensor import Tensor


class RecognitionHead(Module):
    """concat branches -> fuse MLP -> mean over joints -> linear -> softmax."""

    def __init__(self, d_h, n_branches, n_classes, rng, hidden=256):
        super().__init__()
        if n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {n_classes}")
        self.fuse = MLP((n_branches * d_h, hidden), rng, final_linear=d_h)
        self.classifier = Linear(d_h, n_classes, rng)
        self.n_classes = n_classes

    def __call__(self, branch_features):
        h = T.cat(list(branch_features), axis=-1)
        h = self.fuse(h)
        pooled = T.reduce_mean(h, axis=-2)
        logits = self.classifier(pooled)
        return T.softmax(logits), logits


class PredictionHead(Module):
    """Residual GRU rollout conditioned on the class posterior."""

    def __init__(self, d_h, n_branches, n_classes, graphs, lambda_act, rng,
                 hidden=256, gamma=None):
        super().__init__()
        self.fuse = MLP((n_branches * d_h, hidden), rng, final_linear=d_h)
        self.state_gconv = JointGraphConv(d_h, d_h, graphs, lambda_act, rng)
        self.gru = GRUCell(9 + n_classes, d_h, rng)
        self.displace = MLP((d_h, hidden), rng, final_linear=3,
                            zero_init_last=True)
        self.n_classes = n_classes

    def __call__(self, branch_features, x_last, d1_last, d2_last, y_hat,
                 t_pred, a_act):
        """Roll out `t_pred` frames.

        x_last, d1_last, d2_last: (N, M, 3) current pose and its first two
        temporal differences. y_hat: (N, C) on the simplex (soft posterior
        or a teacher one-hot). Returns (N, t_pred, M, 3).
        """
        if t_pred < 1:
            raise ValueError(f"t_pred must be >= 1, got {t_pred}")
        y_arr = y_hat.data if isinstance(y_hat, Tensor) else np.asarray(y_hat)
        if np.max(np.abs(y_arr.sum(axis=-1) - 1.0)) > 1e-6 or np.min(y_arr) < -1e-6:
            raise ValueError("class posterior is not on the simplex")

        h = self.fuse(T.cat(list(branch_features), axis=-1))
        x = T.as_tensor(x_last)
        d1 = T.as_tensor(d1_last)
        d2 = T.as_tensor(d2_last)
        n, m = x.shape[0], x.shape[1]
        y = T.as_tensor(y_hat)
        y = T.reshape(y, (n, 1, self.n_classes))
        spread = Tensor(np.zeros((1, m, 1), dtype=x.dtype))
        y_joint = T.add(y, spread)  # broadcast the posterior to every joint row

        frames = []
        for _ in range(t_pred):
            h_tilde = self.state_gconv(h, a_act)
            inp = T.cat([x, d1, d2, y_joint], axis=-1)
            h = self.gru(inp, h_tilde)
            x_next = T.add(x, self.displace(h))
            d1_next = T.sub(x_next, x)
            d2 = T.sub(d1_next, d1)
            d1, x = d1_next, x_next
            frames.append(T.reshape(x, (n, 1, m, 3)))
        return T.cat(frames, axis=1)


def last_frame_differences(x_prev):
    """(X^(0), delta1 X^(0), delta2 X^(0)) from the tail of an observed clip.

    x_prev: (N, T, M, 3) with T >= 3.
    """
    x_prev = np.asarray(x_prev)
    if x_prev.shape[-3] < 3:
        raise ValueError("need at least 3 observed frames")
    x0 = x_prev[..., -1, :, :]
    x1 = x_prev[..., -2, :, :]
    x2 = x_prev[..., -3, :, :]
    return x0, x0 - x1, x0 - 2.0 * x1 + x2
