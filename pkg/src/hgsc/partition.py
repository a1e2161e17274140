"""Anchor / LoD partitioning by KD-tree blocking and farthest point sampling.

Everything here depends only on the (Morton-ordered) decoded positions, the
fractions and ``max_leaf``, with strict tie-breaking, so the decoder rebuilds
exactly the encoder's partition without side information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

DEFAULT_MAX_LEAF = 2048
DEFAULT_FRACTIONS = (0.10, 0.30, 0.60)
FRACTION_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Partition:
    anchor_indices: np.ndarray
    lod_indices: list[np.ndarray]
    block_assignment: np.ndarray
    fractions: tuple[float, ...]

    def __eq__(self, other) -> bool:
        return (isinstance(other, Partition)
                and np.array_equal(self.anchor_indices, other.anchor_indices)
                and len(self.lod_indices) == len(other.lod_indices)
                and all(np.array_equal(a, b) for a, b in zip(self.lod_indices, other.lod_indices))
                and np.array_equal(self.block_assignment, other.block_assignment))

    def to_bytes(self) -> bytes:
        parts = [self.anchor_indices, *self.lod_indices, self.block_assignment]
        return b"".join(np.asarray(p, dtype="<i8").tobytes() + b"|" for p in parts)


def quota(frac: float, n: int) -> int:
    return int(math.floor(frac * n + 0.5))


def kdtree_blocks(positions: np.ndarray, max_leaf: int = DEFAULT_MAX_LEAF) -> np.ndarray:
    """Block id per point from recursive median splits on the widest axis.

    The lower ceil(n/2) points (by coordinate, then index) go left; block ids are
    assigned depth-first, left first.
    """
    if max_leaf < 1:
        raise ValueError("max_leaf must be at least 1")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    blocks = np.zeros(n, dtype=np.int64)
    stack = [np.arange(n)]
    next_id = 0
    while stack:
        idx = stack.pop()
        if len(idx) <= max_leaf:
            blocks[idx] = next_id
            next_id += 1
            continue
        pts = positions[idx]
        axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
        order = np.argsort(pts[:, axis], kind="stable")
        half = (len(idx) + 1) // 2
        # push right first so the left half is numbered first
        stack.append(idx[order[half:]])
        stack.append(idx[order[:half]])
    return blocks


@njit(cache=True)
def _fps_greedy(pts, m, seed):
    n = pts.shape[0]
    picks = np.empty(m, dtype=np.int64)
    if m == 0:
        return picks
    best = np.full(n, np.inf)
    cur = seed
    for j in range(m):
        picks[j] = cur
        px = pts[cur, 0]
        py = pts[cur, 1]
        pz = pts[cur, 2]
        nxt = -1
        far = -1.0
        for i in range(n):
            dx = pts[i, 0] - px
            dy = pts[i, 1] - py
            dz = pts[i, 2] - pz
            d = dx * dx + dy * dy + dz * dz
            if d < best[i]:
                best[i] = d
            if best[i] > far:
                far = best[i]
                nxt = i
        cur = nxt
    return picks


def fps(positions: np.ndarray, m: int, seedless: bool = False) -> np.ndarray:
    """Greedy farthest point sampling; returns ``m`` local indices in pick order.

    The seed is the point farthest from the centroid (or simply point 0 when
    ``seedless``); every tie goes to the lowest index.
    """
    positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    if m > n:
        raise ValueError(f"cannot sample {m} of {n} points")
    if m <= 0:
        return np.zeros(0, dtype=np.int64)
    if seedless:
        seed = 0
    else:
        centroid = positions.mean(axis=0)
        seed = int(np.argmax(((positions - centroid) ** 2).sum(-1)))
    return _fps_greedy(positions, m, seed)


def _largest_remainder(frac: float, sizes: np.ndarray, total: int) -> np.ndarray:
    exact = frac * sizes.astype(np.float64)
    base = np.minimum(np.floor(exact).astype(np.int64), sizes)
    short = total - int(base.sum())
    if short > 0:
        rem = exact - base
        room = base < sizes
        order = np.lexsort((np.arange(len(sizes)), -rem))
        order = order[room[order]]
        base[order[:short]] += 1
    elif short < 0:
        rem = exact - base
        order = np.lexsort((np.arange(len(sizes)), rem))
        order = order[base[order] > 0]
        base[order[:-short]] -= 1
    return base


def build_partition(positions: np.ndarray, anchor_frac: float = DEFAULT_FRACTIONS[0],
                    lod_fracs=DEFAULT_FRACTIONS[1:], max_leaf: int = DEFAULT_MAX_LEAF,
                    pooled_lods: bool = True, tol: float = FRACTION_TOL,
                    seedless: bool = False) -> Partition:
    """Split points into anchors (per-block FPS) and LoDs (FPS over the remaining pool).

    With ``pooled_lods=False`` each LoD is instead drawn per block with
    largest-remainder quotas. At least one anchor is always selected.
    """
    lod_fracs = tuple(float(f) for f in lod_fracs)
    if abs(anchor_frac + sum(lod_fracs) - 1.0) > tol:
        raise ValueError("anchor and LoD fractions must sum to 1")
    if anchor_frac < 0 or any(f < 0 for f in lod_fracs):
        raise ValueError("fractions must be non-negative")
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    blocks = kdtree_blocks(positions, max_leaf)
    n_blocks = int(blocks.max()) + 1 if n else 0
    members = [np.nonzero(blocks == b)[0] for b in range(n_blocks)]
    sizes = np.array([len(m) for m in members], dtype=np.int64)

    n_anchor = quota(anchor_frac, n)
    if n and n_anchor == 0:
        n_anchor = 1
    per_block = _largest_remainder(anchor_frac, sizes, n_anchor)
    taken = np.zeros(n, dtype=bool)
    anchors = []
    for b in range(n_blocks):
        pick = members[b][fps(positions[members[b]], int(per_block[b]), seedless)]
        anchors.append(pick)
        taken[pick] = True
    anchor_idx = np.sort(np.concatenate(anchors)) if anchors else np.zeros(0, dtype=np.int64)

    lods = []
    for k, frac in enumerate(lod_fracs):
        pool = np.nonzero(~taken)[0]
        if k == len(lod_fracs) - 1:
            chosen = pool
        else:
            want = min(quota(frac, n), len(pool))
            if pooled_lods:
                chosen = pool[fps(positions[pool], want, seedless)]
            else:
                pool_blocks = blocks[pool]
                pool_sizes = np.bincount(pool_blocks, minlength=n_blocks)
                share = _largest_remainder(want / max(len(pool), 1), pool_sizes, want)
                chosen = np.concatenate(
                    [pool[pool_blocks == b][fps(positions[pool[pool_blocks == b]], int(share[b]), seedless)]
                     for b in range(n_blocks)]) if n_blocks else pool[:0]
        chosen = np.sort(chosen)
        taken[chosen] = True
        lods.append(chosen)
    return Partition(anchor_idx, lods, blocks, (anchor_frac, *lod_fracs))
