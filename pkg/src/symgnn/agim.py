"""Data-dependent graph inference: K rounds of joint<->edge feature
propagation over all ordered joint pairs, then an embedded-correlation
softmax that yields a row-stochastic (generally asymmetric) relation matrix.

Pure given parameters in eval mode; training mode follows the autodiff
core's single-thread-per-instance contract (batch-norm stats, dropout
streams).
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import MLP, Module
from .tensor import Tensor


def resample_matrix(t_in, t_out):
    """(t_out, t_in) linear-interpolation matrix along the time axis."""
    if t_in == t_out:
        return np.eye(t_in)
    if t_in == 1:
        return np.ones((t_out, 1))
    u = np.linspace(0.0, t_in - 1.0, t_out)
    lo = np.floor(u).astype(int)
    hi = np.minimum(lo + 1, t_in - 1)
    frac = u - lo
    r = np.zeros((t_out, t_in))
    r[np.arange(t_out), lo] += 1.0 - frac
    r[np.arange(t_out), hi] += frac
    return r


class GraphInference(Module):
    """Infers the per-sample relation matrix from an observed clip.

    Clips are linearly resampled to `t_resample` frames so the first joint
    MLP sees a fixed flattened trajectory width of 3 * t_resample.
    """

    def __init__(self, m, rng, t_resample=49, d_v=128, d_e=128, d_emb=128,
                 k=3, dropout=0.5, seed=0):
        super().__init__()
        if m < 2:
            raise ValueError(f"graph inference needs at least 2 joints, got {m}")
        self.m = m
        self.k = k
        self.t_resample = t_resample
        self.f_v0 = MLP((3 * t_resample, d_v, d_v), rng, dropout=dropout,
                        batch_norm=True, seed=seed * 97 + 1)
        self.f_e = [MLP((2 * d_v, d_e, d_e), rng, dropout=dropout,
                        batch_norm=True, seed=seed * 97 + 2 + i)
                    for i in range(k)]
        self.f_v = [MLP((d_e, d_v, d_v), rng, dropout=dropout,
                        batch_norm=True, seed=seed * 97 + 50 + i)
                    for i in range(k)]
        self.f_emb = MLP((d_v, d_emb, d_emb), rng, dropout=dropout,
                         batch_norm=True, seed=seed * 97 + 90,
                         final_linear=d_emb)
        self.g_emb = MLP((d_v, d_emb, d_emb), rng, dropout=dropout,
                         batch_norm=True, seed=seed * 97 + 91,
                         final_linear=d_emb)
        # ordered pairs (i, j), j != i, grouped by i so the incident-edge
        # mean is a reshape + axis mean
        self.src = np.array([i for i in range(m) for j in range(m) if j != i])
        self.dst = np.array([j for i in range(m) for j in range(m) if j != i])

    def _flatten_trajectories(self, x):
        """(N, T, M, 3) -> (N, M, 3*t_resample) per-joint trajectory vectors."""
        x = T.as_tensor(x)
        if x.ndim != 4:
            raise ValueError(f"expected (N, T, M, 3) clip, got shape {x.shape}")
        n, t, m, d = x.shape
        if m != self.m:
            raise ValueError(f"clip has {m} joints, module built for {self.m}")
        if t != self.t_resample:
            r = Tensor(resample_matrix(t, self.t_resample).astype(x.dtype))
            x = T.reshape(T.matmul(r, T.reshape(x, (n, t, m * d))),
                          (n, self.t_resample, m, d))
        x = T.transpose(x, (0, 2, 1, 3))
        return T.reshape(x, (n, m, self.t_resample * d))

    def propagate(self, x):
        """K propagation rounds; returns joint embeddings (N, M, d_v)."""
        p = self.f_v0(self._flatten_trajectories(x))
        n, m = p.shape[0], self.m
        for f_e, f_v in zip(self.f_e, self.f_v):
            pair = T.cat([T.take(p, self.src, axis=1),
                          T.take(p, self.dst, axis=1)], axis=2)
            q = f_e(pair)
            q = T.reshape(q, (n, m, m - 1, q.shape[-1]))
            p = f_v(T.reduce_mean(q, axis=2))
        return p

    def infer(self, x):
        """Relation matrix (N, M, M); each row is a softmax over targets."""
        p = self.propagate(x)
        f = self.f_emb(p)
        g = self.g_emb(p)
        logits = T.matmul(f, T.transpose(g, (0, 2, 1)))
        return T.softmax(logits)

    __call__ = infer


def perturbation_ratio(module, clip, sigma, rng, n_trials=5):
    """Response-vs-input perturbation ratio of the inferred graph.

    For noise X* = X + N(0, sigma^2): ratio = ||A* X* - A X||_F / ||X* - X||_F
    with the relation matrices applied frame-wise over the clip. Returns the
    per-trial ratios.
    """
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim == 3:
        clip = clip[None]
    a = module.infer(Tensor(clip)).data
    base = np.matmul(a[:, None], clip)
    ratios = []
    for _ in range(n_trials):
        noise = rng.normal(0.0, sigma, size=clip.shape)
        star = clip + noise
        a_star = module.infer(Tensor(star)).data
        num = np.linalg.norm(np.matmul(a_star[:, None], star) - base)
        den = np.linalg.norm(noise)
        ratios.append(num / den)
    return np.array(ratios)


def export_graph_csv(a_act, path):
    """Write an M x M relation matrix as CSV (row i = outgoing weights)."""
    a = np.asarray(a_act)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square matrix, got shape {a.shape}")
    np.savetxt(path, a, delimiter=",", fmt="%.10g")
