"""Full model assembly: graph set + graph inference + three difference-order
branches + both heads, rebuildable bit-for-bit from a config and seed."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .agim import GraphInference
from .backbone import Branch, BranchConfig
from .graphconv import GraphSet, difference
from .heads import PredictionHead, RecognitionHead, last_frame_differences
from .nn import Module
from .tensor import Tensor


@dataclass
class ModelConfig:
    classes: int
    profile: str = "light4"
    gamma: int | None = None
    lambda_act: float | None = None
    branch_orders: tuple = (0, 1, 2)
    dropout: float = 0.5
    agim_k: int = 3
    agim_dim: int = 128
    agim_t: int = 49
    head_hidden: int = 256
    t_pred: int = 10
    seed: int = 0
    dtype: str = "float64"
    difference_padding: str = "zero"

    def __post_init__(self):
        self.branch_orders = tuple(self.branch_orders)
        if not self.branch_orders or any(o not in (0, 1, 2)
                                         for o in self.branch_orders):
            raise ValueError(f"branch orders must be within 0..2, "
                             f"got {self.branch_orders}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64|float32, got {self.dtype}")

    def branch_config(self):
        return BranchConfig.by_name(self.profile, self.gamma, self.lambda_act)

    def to_json(self):
        return asdict(self) | {"branch_orders": list(self.branch_orders)}

    @classmethod
    def from_json(cls, obj):
        return cls(**{k: tuple(v) if k == "branch_orders" else v
                      for k, v in obj.items()})

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(json.load(fh))


@dataclass
class ModelOutput:
    posterior: Tensor     # (N, C)
    logits: Tensor        # (N, C)
    prediction: Tensor    # (N, t_pred, M, 3)
    relation_graph: Tensor  # (N, M, M)
    branch_features: tuple = field(default=())


class SymModel(Module):
    """Backbone + heads over one skeleton."""

    def __init__(self, skeleton, config):
        super().__init__()
        self.skeleton = skeleton
        self.config = config
        branch_cfg = config.branch_config()
        self.branch_cfg = branch_cfg
        rng = np.random.default_rng(config.seed)
        self.graphs = GraphSet(skeleton, branch_cfg.gamma)
        self.agim = GraphInference(
            skeleton.m, rng, t_resample=config.agim_t, d_v=config.agim_dim,
            d_e=config.agim_dim, d_emb=config.agim_dim, k=config.agim_k,
            dropout=config.dropout, seed=config.seed + 17)
        self.branches = [Branch(branch_cfg, self.graphs, rng,
                                dropout=config.dropout,
                                seed=config.seed + 100 + order)
                         for order in config.branch_orders]
        n_branches = len(config.branch_orders)
        self.recog = RecognitionHead(branch_cfg.d_h, n_branches,
                                     config.classes, rng,
                                     hidden=config.head_hidden)
        self.pred = PredictionHead(branch_cfg.d_h, n_branches, config.classes,
                                   self.graphs, branch_cfg.lambda_act, rng,
                                   hidden=config.head_hidden)
        self.finalize()
        if config.dtype == "float32":
            self.astype(np.float32)

    @property
    def np_dtype(self):
        return np.float32 if self.config.dtype == "float32" else np.float64

    def _as_batch(self, x_prev):
        x = np.asarray(x_prev, dtype=self.np_dtype)
        if x.ndim == 3:
            x = x[None]
        if x.ndim != 4 or x.shape[-1] != 3 or x.shape[-2] != self.skeleton.m:
            raise ValueError(
                f"expected (N, T, {self.skeleton.m}, 3) clip, got {x.shape}")
        if x.shape[1] < 3:
            raise ValueError("need at least 3 observed frames")
        return x

    def infer_graph(self, x_prev):
        """Per-sample relation matrix from the observed clip."""
        return self.agim.infer(Tensor(self._as_batch(x_prev)))

    def branch_inputs(self, x_prev):
        x = self._as_batch(x_prev)
        return [difference(x, order, self.config.difference_padding)
                for order in self.config.branch_orders]

    def forward(self, x_prev, t_pred=None, teacher_labels=None):
        """Run both heads on a batch of observed clips.

        `teacher_labels` (int array (N,)) substitutes ground-truth one-hots
        for the posterior fed to the decoder (training-time teacher flag);
        the classifier posterior is always returned.
        """
        x = self._as_batch(x_prev)
        t_pred = t_pred if t_pred is not None else self.config.t_pred
        a_act = self.agim.infer(Tensor(x))
        n, m = x.shape[0], self.skeleton.m
        a_frame = T.reshape(a_act, (n, 1, m, m))  # broadcast over time
        hs = []
        for branch, diff in zip(self.branches, self.branch_inputs(x)):
            hs.append(branch(Tensor(diff), a_frame))
        posterior, logits = self.recog(hs)
        if teacher_labels is not None:
            onehot = np.zeros((n, self.config.classes), dtype=x.dtype)
            onehot[np.arange(n), np.asarray(teacher_labels, dtype=int)] = 1.0
            feedback = Tensor(onehot)
        else:
            feedback = posterior
        x0, d1, d2 = last_frame_differences(x)
        prediction = self.pred(hs, x0, d1, d2, feedback, t_pred, a_act)
        return ModelOutput(posterior=posterior, logits=logits,
                           prediction=prediction, relation_graph=a_act,
                           branch_features=tuple(hs))

    __call__ = forward

    def backbone_parameters(self):
        """Shared trunk: graph masks, graph inference, and all blocks."""
        names = []
        for key in ("graphs", "agim"):
            names.extend(p for _, p in self._children[key].named_parameters(f"{key}."))
        for key, child in self._children.items():
            if key.startswith("branches."):
                names.extend(p for _, p in child.named_parameters(f"{key}."))
        return names

    def head_parameters(self):
        out = []
        for key in ("recog", "pred"):
            out.extend(p for _, p in self._children[key].named_parameters(f"{key}."))
        return out


def build_model(skeleton, config):
    return SymModel(skeleton, config)
