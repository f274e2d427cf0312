"""Topology construction: normalised adjacency, hop supports, part graph,
bone dual, bone features."""

import json

import numpy as np
import pytest

from symgnn.skeleton import (
    SkeletonError,
    SkeletonSpec,
    bone_features,
    bone_incidence,
    build_bone_dual,
    build_part_graph,
    chain_skeleton,
    humanoid_skeleton,
    normalize_adjacency,
    random_tree_skeleton,
    structural_supports,
    synthetic_skeleton,
)


def path3():
    return SkeletonSpec(m=3, bones=((0, 1), (1, 2)), parts=(0, 0, 0), root=0)


# -- normalised adjacency -----------------------------------------------------

def test_two_joints_one_bone():
    spec = SkeletonSpec(m=2, bones=((0, 1),), parts=(0, 0), root=0)
    np.testing.assert_allclose(normalize_adjacency(spec),
                               [[0.5, 0.5], [0.5, 0.5]])


def test_three_joint_path():
    expected = [[1 / 2, 1 / 2, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 2, 1 / 2]]
    np.testing.assert_allclose(normalize_adjacency(path3()), expected)


def test_single_joint_self_loop():
    spec = SkeletonSpec(m=1, bones=(), parts=(0,), root=0)
    np.testing.assert_allclose(normalize_adjacency(spec), [[1.0]])


def test_permutation_equivariance():
    rng = np.random.default_rng(0)
    spec = random_tree_skeleton(9, seed=3)
    perm = rng.permutation(9)
    p = np.eye(9)[perm]
    relabeled = SkeletonSpec(
        m=9,
        bones=tuple((int(np.where(perm == i)[0][0]), int(np.where(perm == j)[0][0]))
                    for i, j in spec.bones),
        parts=tuple(spec.parts[perm[k]] for k in range(9)),
        root=int(np.where(perm == spec.root)[0][0]),
    )
    # relabeled joint k corresponds to original joint perm[k]
    np.testing.assert_allclose(normalize_adjacency(relabeled),
                               p @ normalize_adjacency(spec) @ p.T, atol=1e-12)


# -- structural supports ------------------------------------------------------

def test_gamma_one_is_identity_power():
    a = normalize_adjacency(path3())
    (s1,) = structural_supports(a, 1)
    np.testing.assert_array_equal(s1, a)


def test_gamma_two_matches_dense_matmul():
    a = normalize_adjacency(path3())
    s = structural_supports(a, 2)
    np.testing.assert_allclose(s[1], a @ a, atol=1e-15)


def test_supports_rows_sum_to_one():
    for seed in range(5):
        spec = random_tree_skeleton(12, seed)
        a = normalize_adjacency(spec)
        for s in structural_supports(a, 4):
            np.testing.assert_allclose(s.sum(axis=1), np.ones(12), atol=1e-9)


def test_support_sparsity_beyond_hop_distance():
    # (A~^gamma)_ij = 0 whenever graph distance(i,j) > gamma
    for seed in range(20):
        spec = random_tree_skeleton(10, seed)
        a = normalize_adjacency(spec)
        adj = spec.adjacency() - np.eye(10)
        dist = np.full((10, 10), 99)
        np.fill_diagonal(dist, 0)
        for _ in range(10):  # Floyd-ish relaxation on a small graph
            for i, j in spec.bones:
                dist = np.minimum(dist, dist[:, [i]] + 1 + dist[[j], :])
                dist = np.minimum(dist, dist[:, [j]] + 1 + dist[[i], :])
        for gamma, s in enumerate(structural_supports(a, 3), start=1):
            assert np.all(s[dist > gamma] == 0.0)
        del adj


def test_gamma_below_one_rejected():
    with pytest.raises(SkeletonError):
        structural_supports(np.eye(2), 0)


# -- part graph ---------------------------------------------------------------

def test_single_part_support():
    spec = SkeletonSpec(m=3, bones=((0, 1), (1, 2)), parts=(0, 0, 0), root=0)
    pg = build_part_graph(spec)
    np.testing.assert_allclose(pg.support, [[1.0]])


def test_two_parts_one_bone():
    spec = SkeletonSpec(m=2, bones=((0, 1),), parts=(0, 1), root=0)
    pg = build_part_graph(spec)
    np.testing.assert_allclose(pg.support, [[0.5, 0.5], [0.5, 0.5]])


def test_reference_humanoid_part_graph_is_tree():
    spec = humanoid_skeleton()
    assert spec.n_parts == 10
    pg = build_part_graph(spec)
    adj = (pg.support > 0).astype(int) - np.eye(10, dtype=int)
    n_edges = adj.sum() // 2
    assert n_edges == 9  # tree over 10 parts
    # connectivity via reachability
    reach = np.linalg.matrix_power(adj + np.eye(10, dtype=int), 10)
    assert np.all(reach > 0)
    np.testing.assert_allclose(pg.support.sum(axis=1), np.ones(10), atol=1e-9)


def test_pool_and_match_shapes():
    spec = synthetic_skeleton()
    pg = build_part_graph(spec)
    assert pg.pool.shape == (6, 11)
    assert pg.match.shape == (11, 6)
    np.testing.assert_allclose(pg.pool.sum(axis=1), np.ones(6))


# -- bone dual ----------------------------------------------------------------

def test_path_dual_two_nodes_one_edge():
    dual = build_bone_dual(path3())
    assert dual.m == 2
    assert dual.bones == ((0, 1),)


def test_star_dual_is_triangle():
    spec = SkeletonSpec(m=4, bones=((0, 1), (0, 2), (0, 3)),
                        parts=(0, 0, 0, 0), root=0)
    dual = build_bone_dual(spec)
    # brute force: every bone pair shares the hub joint
    expected = {(a, b) for a in range(3) for b in range(a + 1, 3)}
    assert set(dual.bones) == expected


def test_disjoint_bones_dual_has_no_edges():
    spec = SkeletonSpec(m=4, bones=((0, 1), (2, 3)), parts=(0, 0, 0, 0),
                        root=0, check_connected=False)
    dual = build_bone_dual(spec)
    assert dual.m == 2
    assert dual.bones == ()


def test_bones_sharing_both_endpoints_not_linked():
    # multi-edges are rejected at construction, so "exactly one shared joint"
    # is exercised through the triangle: each pair shares exactly one
    spec = SkeletonSpec(m=3, bones=((0, 1), (1, 2), (0, 2)),
                        parts=(0, 0, 0), root=0)
    dual = build_bone_dual(spec)
    assert len(dual.bones) == 3


def test_zero_bones_rejected():
    spec = SkeletonSpec(m=1, bones=(), parts=(0,), root=0)
    with pytest.raises(SkeletonError):
        build_bone_dual(spec)


# -- bone features ------------------------------------------------------------

def test_bone_feature_is_subtraction():
    spec = SkeletonSpec(m=2, bones=((0, 1),), parts=(0, 0), root=0)
    x = np.array([[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]])  # (T=1, M=2, 3)
    np.testing.assert_array_equal(bone_features(x, spec), [[[1.0, 2.0, 3.0]]])


def test_translation_invariance():
    spec = synthetic_skeleton()
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 11, 3))
    shift = rng.standard_normal(3)
    np.testing.assert_allclose(bone_features(x + shift, spec),
                               bone_features(x, spec), atol=1e-12)


def test_rotation_equivariance():
    spec = synthetic_skeleton()
    rng = np.random.default_rng(2)
    x = rng.standard_normal((4, 11, 3))
    theta = 0.7
    rot = np.array([[np.cos(theta), -np.sin(theta), 0],
                    [np.sin(theta), np.cos(theta), 0],
                    [0, 0, 1.0]])
    np.testing.assert_allclose(bone_features(x @ rot.T, spec),
                               bone_features(x, spec) @ rot.T, atol=1e-12)


def test_bone_features_match_loop_oracle():
    spec = synthetic_skeleton()
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 11, 3))
    feats = bone_features(x, spec)
    oriented = spec.bone_orientation()
    for t in range(5):
        for b, (i, j) in enumerate(oriented):
            np.testing.assert_allclose(feats[t, b], x[t, j] - x[t, i])


def test_incidence_matrix_matches_bone_features():
    spec = synthetic_skeleton()
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 11, 3))
    g = bone_incidence(spec)
    np.testing.assert_allclose(g @ x, bone_features(x, spec), atol=1e-12)


# -- spec validation and io ---------------------------------------------------

def test_duplicate_bone_rejected():
    with pytest.raises(SkeletonError, match="duplicate"):
        SkeletonSpec(m=2, bones=((0, 1), (1, 0)), parts=(0, 0), root=0)


def test_disconnected_rejected_by_default():
    with pytest.raises(SkeletonError, match="connected"):
        SkeletonSpec(m=4, bones=((0, 1), (2, 3)), parts=(0,) * 4, root=0)


def test_json_round_trip(tmp_path):
    spec = synthetic_skeleton()
    path = tmp_path / "skeleton.json"
    spec.save(path)
    loaded = SkeletonSpec.load(path)
    assert loaded.m == spec.m and loaded.bones == spec.bones
    assert loaded.parts == spec.parts and loaded.root == spec.root
    obj = json.loads(path.read_text())
    assert set(obj) == {"M", "bones", "parts", "root"}


def test_chain_skeleton_parts_contiguous():
    spec = chain_skeleton(21, n_parts=6)
    assert spec.m == 21 and spec.n_parts == 6
