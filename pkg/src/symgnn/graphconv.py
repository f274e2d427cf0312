"""Spatial graph convolutions and the graph-temporal blocks.

Four spatial operators share one shape convention (nodes on axis -2,
channels last, any leading batch/time axes):

* relation-graph conv: A X W^T with a data-inferred, possibly asymmetric A
* structural conv: sum over hop orders of (A~^gamma ⊙ mask) X W_gamma^T
* joint conv: lambda * relation + structural
* part conv: (row-normalised part adjacency ⊙ mask) X W^T

A graph-temporal block runs the spatial conv frame-wise, then a strided
temporal convolution, with batch-norm, dropout, and a residual projection.
The stability verifier measures both sides of the contraction bound for the
activated joint conv.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import BatchNorm, Dropout, Module, Parameter, TemporalConv, xavier_uniform
from .skeleton import build_part_graph, normalize_adjacency, structural_supports
from .tensor import ShapeError, Tensor


class GraphSet(Module):
    """Everything a forward pass consumes besides layer weights: structural
    supports with their learnable edge masks, the part-scale support with its
    mask, and the pooling/matching matrices. Masks start at all-ones so the
    initial filters equal the plain normalised-adjacency filters."""

    def __init__(self, spec, gamma):
        super().__init__()
        self.spec = spec
        self.gamma = gamma
        a_tilde = normalize_adjacency(spec)
        self.supports = structural_supports(a_tilde, gamma)
        self.mask_str = [Parameter(np.ones((spec.m, spec.m)))
                         for _ in range(gamma)]
        pg = build_part_graph(spec)
        self.part_support = pg.support
        self.mask_part = Parameter(np.ones((pg.n_parts, pg.n_parts)))
        self.pool = pg.pool
        self.match = pg.match
        self.match_index = np.asarray(spec.parts, dtype=np.intp)

    def masked_supports(self):
        return [T.mul(Tensor(s.astype(m.data.dtype)), m.tensor)
                for s, m in zip(self.supports, self.mask_str)]

    def masked_part_support(self):
        return T.mul(Tensor(self.part_support.astype(self.mask_part.data.dtype)),
                     self.mask_part.tensor)


def agc(x, a_act, w_act):
    """Relation-graph conv A X W^T; `a_act` may carry leading batch axes."""
    x, a_act, w_act = T.as_tensor(x), T.as_tensor(a_act), T.as_tensor(w_act)
    if x.shape[-1] != w_act.shape[-1]:
        raise ShapeError(
            f"agc: input channels {x.shape} vs weight {w_act.shape}")
    return T.matmul(a_act, T.matmul(x, T.transpose(w_act)))


def sgc(x, supports, masks, weights):
    """Structural conv: sum over hop orders of (support ⊙ mask) X W^T."""
    if not (len(supports) == len(masks) == len(weights)):
        raise ShapeError(
            f"sgc: got {len(supports)} supports, {len(masks)} masks, "
            f"{len(weights)} weights")
    out = None
    for s, m, w in zip(supports, masks, weights):
        s, m, w = T.as_tensor(s), T.as_tensor(m), T.as_tensor(w)
        term = T.matmul(T.mul(s, m), T.matmul(x, T.transpose(w)))
        out = term if out is None else T.add(out, term)
    return out


def pgc(x_p, part_support, mask, w_part):
    """Part-scale conv: (normalised part adjacency ⊙ mask) X_p W^T."""
    x_p, w = T.as_tensor(x_p), T.as_tensor(w_part)
    if x_p.shape[-1] != w.shape[-1]:
        raise ShapeError(
            f"pgc: input channels {x_p.shape} vs weight {w.shape}")
    a = T.mul(T.as_tensor(part_support), T.as_tensor(mask))
    return T.matmul(a, T.matmul(x_p, T.transpose(w)))


class JointGraphConv(Module):
    """lambda * AGC + SGC with per-layer weights; masks/supports shared."""

    def __init__(self, d_in, d_out, graphs, lambda_act, rng):
        super().__init__()
        self.graphs = graphs
        self.lambda_act = float(lambda_act)
        self.W_act = Parameter(xavier_uniform(rng, d_out, d_in))
        self.W_str = [Parameter(xavier_uniform(rng, d_out, d_in))
                      for _ in range(graphs.gamma)]

    def __call__(self, x, a_act):
        out = None
        for masked, w in zip(self.graphs.masked_supports(), self.W_str):
            term = T.matmul(masked, T.matmul(x, T.transpose(w.tensor)))
            out = term if out is None else T.add(out, term)
        if self.lambda_act != 0.0:
            a = T.scale(agc(x, a_act, self.W_act.tensor), self.lambda_act)
            out = a if out is None else T.add(out, a)
        return out


class PartGraphConv(Module):
    def __init__(self, d_in, d_out, graphs, rng):
        super().__init__()
        self.graphs = graphs
        self.W_part = Parameter(xavier_uniform(rng, d_out, d_in))

    def __call__(self, x_p, a_act=None):
        return pgc(x_p, self.graphs.part_support, self.graphs.mask_part.tensor,
                   self.W_part.tensor)


def difference(x, beta, padding="zero"):
    """Discrete temporal differences along axis -3 of (..., T, M, D).

    Order 0 is the identity; each further order subtracts the previous
    frame, with the missing frame before t=0 taken as zero ("zero") or as a
    copy of the first frame ("replicate", making the first difference zero).
    """
    if beta not in (0, 1, 2):
        raise ValueError(f"difference order must be 0, 1, or 2, got {beta}")
    if padding not in ("zero", "replicate"):
        raise ValueError(f"unknown padding {padding!r}")
    out = np.asarray(x, dtype=np.asarray(x).dtype)
    for _ in range(beta):
        if padding == "zero":
            first = np.zeros_like(out[..., :1, :, :])
        else:
            first = out[..., :1, :, :]
        shifted = np.concatenate([first, out[..., :-1, :, :]], axis=-3)
        out = out - shifted
    return out


class GtcBlock(Module):
    """Spatial graph conv + strided temporal conv with residual.

    Pipeline: gconv -> bn -> relu -> temporal conv -> bn -> dropout,
    plus a projection of the block input (identity when shapes match,
    1x1 strided temporal conv otherwise), then the final relu. Output
    length is ceil(T / stride).
    """

    def __init__(self, gconv, c_in, c_gc, c_out, tau, stride, rng,
                 dropout=0.5, seed=0):
        super().__init__()
        self.gconv = gconv
        self.bn1 = BatchNorm(c_gc)
        self.tconv = TemporalConv(c_gc, c_out, tau, stride, rng)
        self.bn2 = BatchNorm(c_out)
        self.drop = Dropout(dropout, seed)
        self.stride = stride
        if c_in != c_out or stride != 1:
            self.residual = TemporalConv(c_in, c_out, 1, stride, rng)
        else:
            self.residual = None

    def __call__(self, x, a_act=None):
        y = T.relu(self.bn1(self.gconv(x, a_act)))
        z = self.drop(self.bn2(self.tconv(y)))
        r = x if self.residual is None else self.residual(x)
        return T.relu(T.add(z, r))


# -- stability verification ---------------------------------------------------

@dataclass
class StabilityReport:
    lhs: float
    rhs: float
    holds: bool
    actional_discrepancy: float
    input_discrepancy: float


def stability_check(jgc, x, x_star, a_act, a_act_star, tol=1e-9):
    """Measure both sides of the activated joint-conv contraction bound.

    lhs is the output distortion ||relu(JGC(X*)) - relu(JGC(X))||_F. rhs is
    the triangle/submultiplicativity chain with the measured relation-graph
    discrepancy ||A* X* - A X||_F in place of any assumed growth constant:

        rhs = lambda * ||A* X* - A X||_F * ||W_act||_F
            + sum_gamma ||support_gamma ⊙ mask_gamma||_F * ||X* - X||_F
                        * ||W_gamma||_F
    """
    x = np.asarray(x, dtype=np.float64)
    x_star = np.asarray(x_star, dtype=np.float64)
    if x.shape != x_star.shape:
        raise ShapeError(f"stability_check: {x.shape} vs {x_star.shape}")
    a_act = np.asarray(a_act, dtype=np.float64)
    a_act_star = np.asarray(a_act_star, dtype=np.float64)

    y = np.maximum(_jgc_numpy(jgc, x, a_act), 0.0)
    y_star = np.maximum(_jgc_numpy(jgc, x_star, a_act_star), 0.0)
    lhs = float(np.linalg.norm(y_star - y))

    act_gap = float(np.linalg.norm(a_act_star @ x_star - a_act @ x))
    in_gap = float(np.linalg.norm(x_star - x))
    rhs = jgc.lambda_act * act_gap * float(np.linalg.norm(jgc.W_act.data))
    for support, mask, w in zip(jgc.graphs.supports,
                                jgc.graphs.mask_str, jgc.W_str):
        rhs += float(np.linalg.norm(support * mask.data)) * in_gap \
            * float(np.linalg.norm(w.data))
    return StabilityReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs + tol,
                           actional_discrepancy=act_gap,
                           input_discrepancy=in_gap)


def _jgc_numpy(jgc, x, a_act):
    out = jgc.lambda_act * (a_act @ x @ jgc.W_act.data.T)
    for support, mask, w in zip(jgc.graphs.supports, jgc.graphs.mask_str,
                                jgc.W_str):
        out = out + (support * mask.data) @ x @ w.data.T
    return out


def relu_contraction_gap(a, b):
    """||relu(a) - relu(b)||_F and ||a - b||_F; the first never exceeds the
    second (elementwise 1-Lipschitz)."""
    a, b = np.asarray(a), np.asarray(b)
    return (float(np.linalg.norm(np.maximum(a, 0) - np.maximum(b, 0))),
            float(np.linalg.norm(a - b)))
