"""Multi-branch two-scale backbone.

Each branch (one per difference order) is a stack of joint-scale blocks with
a parallel part-scale stack seeded by pooling after the first block. At
fusion points the two streams exchange features: pooled joint features are
concatenated onto the part stream and matched part features onto the joint
stream, doubling both channel widths. After the last block the part stream
is matched back to joints and summed in, and temporal average pooling
removes the time axis, leaving one (M, D_h) matrix per branch.

The two shipped profiles:

* full9 - 9 joint blocks + 8 part blocks, graph-conv widths 64/64/64,
  128/128/128, 256/256/256, temporal stride 2 (with channel doubling and
  fusion) after blocks 3 and 6.
* light4 - 4 joint blocks + 3 part blocks, widths 32/32/128/256, strides
  1,2,2,2, fusion feeding the last three layers, final temporal kernel 7.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .graphconv import GtcBlock, JointGraphConv, PartGraphConv
from .nn import Module
from .tensor import Tensor


@dataclass(frozen=True)
class BlockSpec:
    """One block of both streams: graph-conv width, temporal-conv width,
    temporal kernel, stride, and whether bidirectional fusion follows."""

    gc_out: int
    tc_out: int
    tau: int = 9
    stride: int = 1
    fuse_after: bool = False


@dataclass(frozen=True)
class BranchConfig:
    blocks: tuple
    gamma: int = 3
    lambda_act: float = 1.0
    profile: str = "custom"

    @property
    def d_h(self):
        return self.blocks[-1].tc_out

    def input_channels(self, idx, data_channels=3):
        """Input width of block `idx`, accounting for fusion doubling."""
        if idx == 0:
            return data_channels
        prev = self.blocks[idx - 1]
        return prev.tc_out * (2 if prev.fuse_after else 1)

    @classmethod
    def full9(cls, gamma=4, lambda_act=0.5):
        blocks = (
            BlockSpec(64, 64, 9, 1),
            BlockSpec(64, 64, 9, 1),
            BlockSpec(64, 128, 9, 2, fuse_after=True),
            BlockSpec(128, 128, 9, 1),
            BlockSpec(128, 128, 9, 1),
            BlockSpec(128, 256, 9, 2, fuse_after=True),
            BlockSpec(256, 256, 9, 1),
            BlockSpec(256, 256, 9, 1),
            BlockSpec(256, 256, 9, 1),
        )
        return cls(blocks=blocks, gamma=gamma, lambda_act=lambda_act,
                   profile="full9")

    @classmethod
    def light4(cls, gamma=3, lambda_act=1.0):
        blocks = (
            BlockSpec(32, 32, 9, 1),
            BlockSpec(32, 64, 9, 2, fuse_after=True),
            BlockSpec(128, 128, 9, 2, fuse_after=True),
            BlockSpec(256, 256, 7, 2),
        )
        return cls(blocks=blocks, gamma=gamma, lambda_act=lambda_act,
                   profile="light4")

    @classmethod
    def by_name(cls, name, gamma=None, lambda_act=None):
        builders = {"full9": cls.full9, "light4": cls.light4}
        if name not in builders:
            raise ValueError(f"unknown profile {name!r}; expected full9|light4")
        kw = {}
        if gamma is not None:
            kw["gamma"] = gamma
        if lambda_act is not None:
            kw["lambda_act"] = lambda_act
        return builders[name](**kw)


def joint2part_pool(x, pool):
    """Average joint features per part: (..., M, C) -> (..., M_p, C)."""
    return T.matmul(Tensor(np.asarray(pool, dtype=x.dtype)), x)


def part2joint_match(x_p, part_of):
    """Copy each part row to its member joints: (..., M_p, C) -> (..., M, C)."""
    return T.take(x_p, np.asarray(part_of, dtype=np.intp), axis=x_p.ndim - 2)


class Branch(Module):
    """One difference-order branch of the backbone."""

    def __init__(self, config, graphs, rng, dropout=0.5, seed=0,
                 data_channels=3):
        super().__init__()
        self.config = config
        self.graphs = graphs
        joint_blocks, part_blocks = [], []
        for idx, spec in enumerate(config.blocks):
            c_in = config.input_channels(idx, data_channels)
            jgc = JointGraphConv(c_in, spec.gc_out, graphs,
                                 config.lambda_act, rng)
            joint_blocks.append(GtcBlock(jgc, c_in, spec.gc_out, spec.tc_out,
                                         spec.tau, spec.stride, rng,
                                         dropout, seed * 1009 + 2 * idx))
            if idx > 0:
                pgc_ = PartGraphConv(c_in, spec.gc_out, graphs, rng)
                part_blocks.append(GtcBlock(pgc_, c_in, spec.gc_out,
                                            spec.tc_out, spec.tau, spec.stride,
                                            rng, dropout,
                                            seed * 1009 + 2 * idx + 1))
        self.joint_blocks = joint_blocks
        self.part_blocks = part_blocks

    def __call__(self, x, a_act):
        """(N, T, M, C) clip -> (N, M, D_h) pooled features."""
        if x.ndim != 4:
            raise ValueError(f"branch input must be (N, T, M, C), got {x.shape}")
        pool, part_of = self.graphs.pool, self.graphs.match_index
        xj = self.joint_blocks[0](x, a_act)
        xp = joint2part_pool(xj, pool)
        for idx in range(1, len(self.config.blocks)):
            spec = self.config.blocks[idx]
            expected = self.config.input_channels(idx)
            if xj.shape[-1] != expected:
                raise ValueError(
                    f"block {idx}: joint stream has {xj.shape[-1]} channels, "
                    f"config expects {expected}")
            xj_new = self.joint_blocks[idx](xj, a_act)
            xp_new = self.part_blocks[idx - 1](xp)
            xj, xp = xj_new, xp_new
            if spec.fuse_after:
                # native-scale features first, cross-scale appended
                xj = T.cat([xj_new, part2joint_match(xp_new, part_of)], axis=-1)
                xp = T.cat([xp_new, joint2part_pool(xj_new, pool)], axis=-1)
        merged = T.add(xj, part2joint_match(xp, part_of))
        return T.reduce_mean(merged, axis=1)
