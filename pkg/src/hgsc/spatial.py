"""Exact k-nearest-neighbour search with deterministic tie-breaking.

cKDTree supplies candidates; final distances are recomputed as
``((q - p) ** 2).sum(-1)`` and ordered by (distance, index), so results are
identical to a brute-force scan using the same expression.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

_SLACK = 8
_REL = 1e-9


def sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    return ((queries[:, None, :] - points[None, :, :]) ** 2).sum(-1)


class ExactKNN:
    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(self.points) == 0:
            raise ValueError("no reference points")
        self.tree = cKDTree(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def query(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(indices, squared distances), each (q, k), sorted by (distance, index)."""
        queries = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        k = min(k, n)
        nq = len(queries)
        if nq == 0:
            return np.zeros((0, k), dtype=np.int64), np.zeros((0, k))
        kk = min(n, k + _SLACK)
        _, cand = self.tree.query(queries, k=kk)
        cand = np.asarray(cand, dtype=np.int64).reshape(nq, kk)
        d2 = ((queries[:, None, :] - self.points[cand]) ** 2).sum(-1)
        order = np.lexsort((cand, d2), axis=-1)
        cand = np.take_along_axis(cand, order, axis=1)
        d2 = np.take_along_axis(d2, order, axis=1)
        if kk < n:
            # a tie at the k-th distance may continue past the candidate list
            kth = d2[:, k - 1]
            risky = np.nonzero(d2[:, -1] <= kth * (1 + _REL) + 1e-300)[0]
            for row in risky:
                r = np.sqrt(kth[row]) * (1 + _REL) + 1e-300
                ball = np.array(sorted(self.tree.query_ball_point(queries[row], r)), dtype=np.int64)
                bd2 = ((queries[row][None, :] - self.points[ball]) ** 2).sum(-1)
                o = np.lexsort((ball, bd2))[:kk]
                cand[row, :len(o)] = ball[o]
                d2[row, :len(o)] = bd2[o]
        return cand[:, :k], d2[:, :k]
