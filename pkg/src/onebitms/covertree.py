"""Leveled landmark hierarchies over finite samples.

A cover tree here is a sequence of landmark sets T_i indexed by an integer
scale i, satisfying three axioms on the sample's Euclidean metric:

* nesting: T_i is contained in T_{i+1};
* covering: every landmark of T_{i+1} records exactly one parent in T_i at
  distance at most 2^{-i};
* separation: distinct landmarks of T_i are more than 2^{-i} apart.

Scales increase toward finer resolution; from some scale on, every point is
its own landmark. Construction is greedy in input order: each level extends
the previous one to a maximal 2^{-i}-separated subset, which guarantees the
covering axiom for the next level. Determinism is preferred over balance.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError
from .validation import as_matrix


@dataclass(frozen=True)
class CoverTree:
    points: np.ndarray
    original_indices: np.ndarray
    root_scale: int
    max_scale: int
    levels: dict  # scale -> ascending array of landmark point indices
    parents: dict  # scale -> {landmark: parent landmark at scale-1}

    @property
    def n(self):
        return self.points.shape[0]

    def scale_range(self):
        return self.root_scale, self.max_scale

    def clamp_scale(self, j):
        return min(max(int(j), self.root_scale), self.max_scale)

    def level_landmarks(self, j):
        """Landmark indices of level j; scales outside the range clamp."""
        return self.levels[self.clamp_scale(j)]

    def children(self, i, landmark):
        """Landmarks of level i+1 whose recorded parent at level i is ``landmark``."""
        i = int(i)
        if i >= self.max_scale:
            return np.array([landmark], dtype=np.intp)
        nxt = self.parents[i + 1]
        return np.array(sorted(c for c, p in nxt.items() if p == landmark), dtype=np.intp)


def _pairwise_distances(data):
    sq = np.sum(data * data, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (data @ data.T)
    np.maximum(d2, 0.0, out=d2)
    return np.sqrt(d2)


def build_cover_tree(points, audit=None):
    """Build the landmark hierarchy for a point cloud.

    Duplicate points are removed first (the axioms require distinct points);
    the first occurrence is kept. When ``audit`` is true (default: in debug
    runs for small inputs) the three axioms are re-verified exhaustively on
    the finished tree.
    """
    data = as_matrix(points.data if hasattr(points, "data") else points, name="points")
    if data.shape[0] < 1:
        raise EmptyInputError("cannot build a cover tree on an empty cloud")

    _, keep = np.unique(data, axis=0, return_index=True)
    keep = np.sort(keep)
    data = np.ascontiguousarray(data[keep])
    data.setflags(write=False)
    n = data.shape[0]

    if n == 1:
        tree = CoverTree(
            points=data,
            original_indices=keep,
            root_scale=0,
            max_scale=0,
            levels={0: np.array([0], dtype=np.intp)},
            parents={},
        )
        return tree

    dist = _pairwise_distances(data)
    max_from_root = float(np.max(dist[0]))
    root_scale = math.floor(-math.log2(max_from_root))
    while 2.0 ** (-root_scale) < max_from_root:
        root_scale -= 1

    levels = {root_scale: np.array([0], dtype=np.intp)}
    parents = {}
    in_level = np.zeros(n, dtype=bool)
    in_level[0] = True
    # Distance from each point to the current landmark set; T_{i+1} starts
    # as T_i, so the array carries over between levels.
    min_dist = dist[0].copy()

    scale = root_scale
    while np.count_nonzero(in_level) < n:
        scale += 1
        radius = 2.0 ** (-scale)
        prev_level = levels[scale - 1]
        new_members = []
        for p in range(n):
            if not in_level[p] and min_dist[p] > radius:
                in_level[p] = True
                np.minimum(min_dist, dist[p], out=min_dist)
                new_members.append(p)
        members = np.flatnonzero(in_level).astype(np.intp)
        levels[scale] = members
        parent_map = {int(l): int(l) for l in prev_level}
        for p in new_members:
            parent_map[int(p)] = int(prev_level[np.argmin(dist[p, prev_level])])
        parents[scale] = parent_map

    tree = CoverTree(
        points=data,
        original_indices=keep,
        root_scale=root_scale,
        max_scale=scale,
        levels=levels,
        parents=parents,
    )
    if audit is None:
        audit = __debug__ and n <= 2048
    if audit:
        verify_axioms(tree, dist=dist)
    return tree


def verify_axioms(tree, dist=None):
    """Exhaustively re-check nesting, covering, and separation; raise on failure."""
    if dist is None:
        dist = _pairwise_distances(tree.points)
    scales = sorted(tree.levels)
    for idx, i in enumerate(scales):
        members = tree.levels[i]
        radius = 2.0 ** (-i)
        if members.shape[0] > 1:
            sub = dist[np.ix_(members, members)]
            off_diag = sub[~np.eye(len(members), dtype=bool)]
            if not np.all(off_diag > radius):
                raise AssertionError(f"separation violated at scale {i}")
        if idx > 0:
            prev = set(tree.levels[scales[idx - 1]].tolist())
            if not prev.issubset(set(members.tolist())):
                raise AssertionError(f"nesting violated at scale {i}")
            parent_map = tree.parents[i]
            parent_radius = 2.0 ** (-(i - 1))
            for child in members:
                child = int(child)
                if child not in parent_map:
                    raise AssertionError(f"missing parent for {child} at scale {i}")
                parent = parent_map[child]
                if parent not in prev:
                    raise AssertionError(
                        f"parent {parent} of {child} not in scale {i - 1}"
                    )
                if dist[child, parent] > parent_radius:
                    raise AssertionError(
                        f"covering violated for {child} at scale {i}"
                    )
    if not np.array_equal(
        tree.levels[tree.max_scale], np.arange(tree.n, dtype=np.intp)
    ):
        raise AssertionError("finest level does not contain every point")
    return True


def beam_descend(tree, score, k_beam=10, level=None, start=None):
    """Best-first descent through the landmark hierarchy.

    Starting from the full landmark set at ``start`` (default: the root
    scale), keeps the ``k_beam`` best-scoring landmarks at each scale and
    descends to their children only, returning the best-scoring landmark at
    ``level`` (default: the finest scale). ``k_beam=None`` means unlimited,
    which makes the result identical to an exhaustive argmin of ``score``
    over the target level. Ties break toward the lowest landmark index.
    """
    target = tree.max_scale if level is None else tree.clamp_scale(level)
    first = tree.root_scale if start is None else tree.clamp_scale(start)
    if first > target:
        first = target

    candidates = tree.levels[first]
    for i in range(first, target + 1):
        values = np.array([score(int(l)) for l in candidates], dtype=np.float64)
        order = np.lexsort((candidates, values))
        if i == target:
            return int(candidates[order[0]])
        if k_beam is not None and not math.isinf(k_beam):
            order = order[: max(1, int(k_beam))]
        kept = candidates[order]
        nxt = tree.parents[i + 1]
        kept_set = set(int(k) for k in kept)
        candidates = np.array(
            sorted(c for c, p in nxt.items() if p in kept_set), dtype=np.intp
        )
    raise RuntimeError("unreachable")  # pragma: no cover
