"""Static body topologies: skeleton adjacency, hop-power structural supports,
the part-scale graph, and the bone-line-graph dual.

All outputs are plain float64 numpy matrices, immutable after construction
and safe for concurrent reads. Joint counts stay small (M <= 64), so dense
storage throughout.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class SkeletonError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint count, bone list, joint->part map, and a root for orientation.

    Bones are unordered joint pairs. The subtraction direction for bone
    features (which endpoint is centripetal, i.e. closer to the root) comes
    from BFS depths measured from `root`; ties break toward the lower joint
    index.
    """

    m: int
    bones: tuple
    parts: tuple
    root: int = 0
    check_connected: bool = True
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "bones", tuple((min(i, j), max(i, j))
                                                for i, j in self.bones))
        object.__setattr__(self, "parts", tuple(int(p) for p in self.parts))
        if self.m < 1:
            raise SkeletonError(f"joint count must be positive, got {self.m}")
        if len(self.parts) != self.m:
            raise SkeletonError(
                f"parts map covers {len(self.parts)} joints, expected {self.m}")
        seen = set()
        for i, j in self.bones:
            if not (0 <= i < self.m and 0 <= j < self.m):
                raise SkeletonError(f"bone ({i},{j}) out of range for M={self.m}")
            if i == j:
                raise SkeletonError(f"bone ({i},{j}) is a self-pair")
            if (i, j) in seen:
                raise SkeletonError(f"duplicate bone ({i},{j})")
            seen.add((i, j))
        if not (0 <= self.root < self.m):
            raise SkeletonError(f"root {self.root} out of range")
        pids = set(self.parts)
        if pids != set(range(len(pids))):
            raise SkeletonError("part ids must be contiguous from 0")
        if self.check_connected and self.m > 1:
            depth = self.bfs_depths()
            if any(d < 0 for d in depth):
                raise SkeletonError("skeleton graph is not connected")

    @property
    def n_parts(self):
        return max(self.parts) + 1

    @property
    def n_bones(self):
        return len(self.bones)

    def neighbors(self):
        adj = [[] for _ in range(self.m)]
        for i, j in self.bones:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def bfs_depths(self):
        """Hop distance of every joint from the root (-1 if unreachable)."""
        depth = [-1] * self.m
        depth[self.root] = 0
        queue = deque([self.root])
        adj = self.neighbors()
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if depth[v] < 0:
                    depth[v] = depth[u] + 1
                    queue.append(v)
        return depth

    def bone_orientation(self):
        """Per bone, the (centripetal, centrifugal) joint pair."""
        depth = self.bfs_depths()
        oriented = []
        for i, j in self.bones:
            di = depth[i] if depth[i] >= 0 else self.m + i
            dj = depth[j] if depth[j] >= 0 else self.m + j
            if (di, i) <= (dj, j):
                oriented.append((i, j))
            else:
                oriented.append((j, i))
        return oriented

    def adjacency(self):
        """Binary adjacency with self-loops."""
        a = np.eye(self.m)
        for i, j in self.bones:
            a[i, j] = a[j, i] = 1.0
        return a

    def part_members(self):
        members = [[] for _ in range(self.n_parts)]
        for j, p in enumerate(self.parts):
            members[p].append(j)
        return members

    def to_json(self):
        return {"M": self.m, "bones": [list(b) for b in self.bones],
                "parts": list(self.parts), "root": self.root}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def from_json(cls, obj, **kw):
        missing = {"M", "bones", "parts", "root"} - set(obj)
        if missing:
            raise SkeletonError(f"skeleton file missing fields {sorted(missing)}")
        return cls(m=obj["M"], bones=tuple(map(tuple, obj["bones"])),
                   parts=tuple(obj["parts"]), root=obj["root"], **kw)

    @classmethod
    def load(cls, path, **kw):
        with open(path) as fh:
            return cls.from_json(json.load(fh), **kw)


def normalize_adjacency(spec):
    """Row-normalised adjacency D^-1 A (self loops included); rows sum to 1."""
    a = spec.adjacency()
    return a / a.sum(axis=1, keepdims=True)


def structural_supports(a_tilde, gamma_max):
    """Powers [A~^1 .. A~^Gamma] of the normalised adjacency."""
    if gamma_max < 1:
        raise SkeletonError(f"gamma_max must be >= 1, got {gamma_max}")
    supports = [np.asarray(a_tilde)]
    for _ in range(gamma_max - 1):
        supports.append(supports[-1] @ a_tilde)
    return supports


@dataclass(frozen=True)
class PartGraph:
    """Row-normalised part adjacency plus the joint->part pooling matrices."""

    support: np.ndarray      # (M_p, M_p), rows sum to 1
    pool: np.ndarray         # (M_p, M): averages member joints
    match: np.ndarray        # (M, M_p): copies part rows to joints
    part_of: tuple = field(default=())

    @property
    def n_parts(self):
        return self.support.shape[0]


def build_part_graph(spec):
    """Parts are adjacent iff some bone joins them (plus self-loops)."""
    mp = spec.n_parts
    ap = np.eye(mp)
    for i, j in spec.bones:
        pi, pj = spec.parts[i], spec.parts[j]
        ap[pi, pj] = ap[pj, pi] = 1.0
    support = ap / ap.sum(axis=1, keepdims=True)
    pool = np.zeros((mp, spec.m))
    for j, p in enumerate(spec.parts):
        pool[p, j] = 1.0
    sizes = pool.sum(axis=1, keepdims=True)
    if np.any(sizes == 0):
        raise SkeletonError("every part needs at least one joint")
    match = pool.T.copy()
    pool = pool / sizes
    return PartGraph(support=support, pool=pool, match=match,
                     part_of=tuple(spec.parts))


def build_bone_dual(spec):
    """Line-graph skeleton: nodes are bones, edges join bones sharing a joint.

    Bone order follows the source bone list. A dual bone inherits the part of
    its centripetal endpoint; the dual root is the first bone incident to the
    source root.
    """
    if spec.n_bones == 0:
        raise SkeletonError("bone dual needs at least one bone")
    bones = spec.bones
    dual_edges = []
    for a in range(len(bones)):
        for b in range(a + 1, len(bones)):
            if len(set(bones[a]) & set(bones[b])) == 1:
                dual_edges.append((a, b))
    oriented = spec.bone_orientation()
    parts = [spec.parts[centripetal] for centripetal, _ in oriented]
    # reindex part ids: only parts that own a bone survive
    kept = sorted(set(parts))
    remap = {p: k for k, p in enumerate(kept)}
    parts = tuple(remap[p] for p in parts)
    root = next((k for k, bone in enumerate(bones) if spec.root in bone), 0)
    return SkeletonSpec(m=len(bones), bones=tuple(dual_edges), parts=parts,
                        root=root, check_connected=False,
                        name=f"{spec.name}-bones" if spec.name else "bones")


def bone_features(x, spec):
    """Per-bone coordinate differences: centrifugal minus centripetal joint.

    `x` has shape (..., T, M, 3); the result swaps the joint axis for a bone
    axis of length B. Invariant under global translation of `x`.
    """
    x = np.asarray(x)
    if x.shape[-2] != spec.m:
        raise SkeletonError(
            f"joint axis has {x.shape[-2]} entries, expected {spec.m}")
    oriented = spec.bone_orientation()
    if not oriented:
        raise SkeletonError("skeleton has no bones")
    centripetal = [i for i, _ in oriented]
    centrifugal = [j for _, j in oriented]
    return x[..., centrifugal, :] - x[..., centripetal, :]


def bone_incidence(spec):
    """(B, M) matrix G with bone_features(x) = G @ x along the joint axis."""
    g = np.zeros((spec.n_bones, spec.m))
    for b, (i, j) in enumerate(spec.bone_orientation()):
        g[b, i] = -1.0
        g[b, j] = 1.0
    return g


# -- shipped skeletons --------------------------------------------------------

def synthetic_skeleton():
    """11-joint stick figure used by the synthetic data generator.

    Joints: 0 head, 1 neck, 2/3 shoulders (L/R), 4/5 elbows, 6 root,
    7/8 hips, 9/10 knees. Six part groups: head+neck, each arm, torso,
    each leg.
    """
    bones = ((0, 1), (1, 2), (1, 3), (2, 4), (3, 5),
             (1, 6), (6, 7), (6, 8), (7, 9), (8, 10))
    parts = (0, 0, 1, 2, 1, 2, 3, 4, 5, 4, 5)
    return SkeletonSpec(m=11, bones=bones, parts=parts, root=6,
                        name="synthetic-11")


def humanoid_skeleton():
    """15-joint humanoid with the 10-part partition: head, torso, paired
    upper arms / forearms / thighs / crura. The part graph is a tree."""
    # 0 head, 1 neck, 2 chest, 3 pelvis, 4/5 L/R shoulder, 6/7 L/R elbow,
    # 8/9 L/R wrist, 10/11 L/R hip, 12/13 L/R knee, 14 spine midpoint
    bones = ((0, 1), (1, 2), (2, 14), (14, 3),
             (2, 4), (4, 6), (6, 8),
             (2, 5), (5, 7), (7, 9),
             (3, 10), (10, 12),
             (3, 11), (11, 13))
    #          head torso  Lua Rua Lfa Rfa Lth Rth Lcr Rcr
    parts = (0,  # head
             1, 1, 1,      # neck, chest, pelvis -> torso
             2, 3,          # shoulders seed upper arms
             2, 3,          # elbows stay with upper arms
             4, 5,          # wrists -> forearms
             6, 7,          # hips seed thighs
             8, 9,          # knees -> crura
             1)             # spine midpoint -> torso
    return SkeletonSpec(m=15, bones=bones, parts=parts, root=3,
                        name="humanoid-15")


def chain_skeleton(m, n_parts=1, name="chain"):
    """Path graph over `m` joints with parts split into contiguous runs."""
    bones = tuple((i, i + 1) for i in range(m - 1))
    bounds = np.linspace(0, m, n_parts + 1).astype(int)
    parts = []
    for p in range(n_parts):
        parts.extend([p] * (bounds[p + 1] - bounds[p]))
    return SkeletonSpec(m=m, bones=bones, parts=tuple(parts), root=0, name=name)


def random_tree_skeleton(m, seed, n_parts=1):
    """Uniform random attachment tree, for property tests."""
    rng = np.random.default_rng(seed)
    bones = tuple((int(rng.integers(0, i)), i) for i in range(1, m))
    parts = tuple(int(p) for p in rng.integers(0, n_parts, size=m)) \
        if n_parts > 1 else (0,) * m
    # ensure surjectivity of the part map
    parts = list(parts)
    for p in range(n_parts):
        if p not in parts:
            parts[int(rng.integers(0, m))] = p
    pids = sorted(set(parts))
    remap = {p: k for k, p in enumerate(pids)}
    parts = tuple(remap[p] for p in parts)
    return SkeletonSpec(m=m, bones=bones, parts=parts, root=0,
                        name=f"tree-{m}-{seed}")
