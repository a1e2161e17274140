import numpy as np
import pytest
from hypothesis import given, strategies as st

from hgsc.partition import build_partition, fps, kdtree_blocks, quota
from oracles import brute_fps


def test_single_block():
    assert (kdtree_blocks(np.random.default_rng(0).random((100, 3)), 100) == 0).all()


def test_collinear_median_split():
    pts = np.array([[3.0, 0, 0], [0.0, 0, 0], [2.0, 0, 0], [1.0, 0, 0]])
    b = kdtree_blocks(pts, 2)
    assert b.tolist() == [1, 0, 1, 0]


@pytest.mark.parametrize("n,leaf", [(1000, 64), (4097, 2048), (777, 10), (65, 64)])
def test_block_sizes_within_halving_bounds(rng, n, leaf):
    b = kdtree_blocks(rng.random((n, 3)), leaf)
    sizes = np.bincount(b)
    assert sizes.sum() == n
    assert sizes.min() >= -(-leaf // 2) and sizes.max() <= leaf


def test_fps_examples():
    assert sorted(fps(np.random.default_rng(1).random((9, 3)), 9).tolist()) == list(range(9))
    line = np.array([[0.0, 0, 0], [1.0, 0, 0], [10.0, 0, 0]])
    assert fps(line, 2).tolist() == [2, 0]


@pytest.mark.parametrize("seedless", [False, True])
def test_fps_matches_brute_force(rng, seedless):
    for n in (1, 2, 7, 64, 300, 512):
        pts = rng.random((n, 3))
        m = max(1, n // 3)
        assert fps(pts, m, seedless).tolist() == brute_fps(pts, m, seedless)


def test_fps_lattice_ties(rng):
    g = np.stack(np.meshgrid(*[np.arange(6.0)] * 3, indexing="ij"), -1).reshape(-1, 3)
    for perm in range(3):
        pts = g[rng.permutation(len(g))] if perm else g
        assert fps(pts, 40).tolist() == brute_fps(pts, 40)


def test_default_split_sizes(rng):
    p = build_partition(rng.random((1000, 3)) * 100, 0.1, (0.3, 0.6), max_leaf=128)
    assert [len(p.anchor_indices)] + [len(l) for l in p.lod_indices] == [100, 300, 600]


def test_all_anchors():
    p = build_partition(np.random.default_rng(0).random((50, 3)), 1.0, (0.0, 0.0))
    assert len(p.anchor_indices) == 50 and all(len(l) == 0 for l in p.lod_indices)


def test_minimum_one_anchor():
    p = build_partition(np.random.default_rng(0).random((3, 3)), 0.1, (0.3, 0.6))
    assert len(p.anchor_indices) == 1


def test_fraction_sum_checked():
    with pytest.raises(ValueError):
        build_partition(np.zeros((4, 3)), 0.5, (0.3, 0.3))


@pytest.mark.parametrize("pooled", [True, False])
def test_partition_disjoint_exhaustive_deterministic(rng, pooled):
    pts = rng.integers(0, 256, (5000, 3)).astype(float)
    a = build_partition(pts, 0.1, (0.3, 0.6), 512, pooled_lods=pooled)
    b = build_partition(pts.copy(), 0.1, (0.3, 0.6), 512, pooled_lods=pooled)
    assert a == b and a.to_bytes() == b.to_bytes()
    allidx = np.concatenate([a.anchor_indices, *a.lod_indices])
    assert np.array_equal(np.sort(allidx), np.arange(5000))
    assert len(a.anchor_indices) == quota(0.1, 5000)
    assert len(a.lod_indices[0]) == quota(0.3, 5000)


def test_anchor_fps_property(rng):
    pts = rng.random((400, 3))
    picks = fps(pts, 60)
    for j in range(1, 60):
        prior = pts[picks[:j]]
        d = ((pts[:, None] - prior[None]) ** 2).sum(-1).min(axis=1)
        assert d[picks[j]] == d.max()


@given(st.integers(1, 300), st.integers(0, 2 ** 31), st.sampled_from([8, 32, 2048]))
def test_partition_property(n, seed, leaf):
    pts = np.random.default_rng(seed).integers(0, 64, (n, 3)).astype(float)
    p = build_partition(pts, 0.1, (0.3, 0.6), leaf)
    allidx = np.concatenate([p.anchor_indices, *p.lod_indices])
    assert np.array_equal(np.sort(allidx), np.arange(n))
