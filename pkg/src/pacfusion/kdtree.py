"""K-nearest-neighbor search over 3D points.

A median-split k-d tree (axis cycling x -> y -> z) with an exhaustive
brute-force twin used as the test oracle. Both obey the same contract:
neighbors ordered by squared distance ascending, ties broken by lower
point index, under-filled neighborhoods padded by cycling the found
neighbors so the result always has exactly k slots.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

DEFAULT_LEAF_SIZE = 16


@dataclass(frozen=True)
class NeighborSet:
    """k neighbor slots for one target: indices plus true Euclidean distances."""

    indices: np.ndarray
    distances: np.ndarray


class _Node:
    __slots__ = ("axis", "split", "left", "right", "idx")

    def __init__(self, axis=-1, split=0.0, left=None, right=None, idx=None):
        self.axis = axis
        self.split = split
        self.left = left
        self.right = right
        self.idx = idx  # leaf: array of point indices


class KdTree:
    """Immutable balanced k-d tree over an (N, 3) point array."""

    def __init__(self, points: np.ndarray, leaf_size: int = DEFAULT_LEAF_SIZE):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise ValueError("cannot build a k-d tree over zero points")
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.points = points
        self.leaf_size = leaf_size
        self.root = self._build(np.arange(len(points)), depth=0)

    def _build(self, idx: np.ndarray, depth: int) -> _Node:
        if len(idx) <= self.leaf_size:
            return _Node(idx=idx)
        axis = depth % 3
        order = np.argsort(self.points[idx, axis], kind="stable")
        idx = idx[order]
        mid = len(idx) // 2
        node = _Node(axis=axis, split=self.points[idx[mid], axis])
        node.left = self._build(idx[:mid], depth + 1)
        node.right = self._build(idx[mid:], depth + 1)
        return node

    def query(self, target, k: int, d: float = np.inf) -> NeighborSet:
        return knn_query(self, target, k, d)


def _finalize(heap: list, k: int) -> NeighborSet:
    # heap entries are (-d2, -index); unwind into ascending (d2, index) order
    found = sorted((-nd2, -nidx) for nd2, nidx in heap)
    if not found:
        return NeighborSet(indices=np.zeros(k, dtype=np.int64), distances=np.zeros(k))
    indices = np.array([f[1] for f in found], dtype=np.int64)
    dists = np.sqrt(np.array([f[0] for f in found]))
    if len(found) < k:
        reps = np.arange(k) % len(found)
        indices, dists = indices[reps], dists[reps]
    return NeighborSet(indices=indices, distances=dists)


def knn_query(tree: KdTree, target, k: int, d: float = np.inf) -> NeighborSet:
    """k nearest indexed points to target within radius d.

    If fewer than k points lie within d, the found neighbors are repeated
    cyclically to fill all k slots; the result is never empty because a
    tree holds at least one point (unless d excludes everything, in which
    case the overall nearest point pads all slots).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    target = np.asarray(target, dtype=np.float64).reshape(3)
    d2max = d * d if np.isfinite(d) else np.inf
    heap: list[tuple[float, int]] = []  # max-heap via (-d2, -index)
    # fallback nearest point over all, used when the radius excludes everything
    best_any = [np.inf, -1]

    def visit(node: _Node) -> None:
        if node.idx is not None:
            pts = tree.points[node.idx]
            d2s = np.sum((pts - target) ** 2, axis=1)
            for d2, i in zip(d2s, node.idx):
                if (d2, i) < (best_any[0], best_any[1]):
                    best_any[0], best_any[1] = d2, i
                if d2 > d2max:
                    continue
                entry = (-d2, -int(i))
                if len(heap) < k:
                    heapq.heappush(heap, entry)
                elif entry > heap[0]:
                    heapq.heapreplace(heap, entry)
            return
        delta = target[node.axis] - node.split
        near, far = (node.right, node.left) if delta >= 0 else (node.left, node.right)
        visit(near)
        worst = -heap[0][0] if len(heap) == k else np.inf
        if delta * delta <= min(worst, d2max) or len(heap) < k:
            visit(far)

    visit(tree.root)
    if not heap:
        heap = [(-best_any[0], -best_any[1])]
    return _finalize(heap, k)


def knn_brute(points, target, k: int, d: float = np.inf) -> NeighborSet:
    """Exhaustive-scan oracle with the same contract as knn_query."""
    if k < 1:
        raise ValueError("k must be >= 1")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    target = np.asarray(target, dtype=np.float64).reshape(3)
    d2s = np.sum((points - target) ** 2, axis=1)
    order = np.lexsort((np.arange(len(points)), d2s))
    d2max = d * d if np.isfinite(d) else np.inf
    within = order[d2s[order] <= d2max]
    if len(within) == 0:
        within = order[:1]  # radius excludes everything; pad with overall nearest
    chosen = within[:k]
    heap = [(-d2s[i], -int(i)) for i in chosen]
    return _finalize(heap, k)
