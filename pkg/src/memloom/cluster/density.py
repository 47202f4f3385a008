"""Density-based clustering over a low-dimensional layout.

The classic density pipeline, exact at every step: core distances (k-th
nearest neighbor, k = min_samples), mutual reachability distances, an exact
Prim MST, a single-linkage hierarchy, a condensed tree pruned by
min_cluster_size, and excess-of-mass stability extraction. Low-density points
come out labeled -1 (noise).

Degenerate shapes are total rather than erroring: a dataset whose hierarchy
never splits into two viable clusters (e.g. all points identical) collapses
to a single cluster when it is at least min_cluster_size strong, and to
all-noise otherwise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .manifold import pairwise_distances

# Merges at zero distance would put the split at infinite density; clamping
# keeps stability arithmetic finite without changing any ordering.
_MIN_SPLIT_DISTANCE = 1e-12


@dataclass(frozen=True)
class DensityParams:
    min_cluster_size: int = 5
    min_samples: int = 5

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ValueError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ValueError("min_samples must be >= 1")
        if self.min_samples > self.min_cluster_size:
            raise ValueError("min_samples must be <= min_cluster_size")


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    n_clusters: int

    @property
    def has_noise(self) -> bool:
        return bool(np.any(self.labels == -1))


def core_distances(dist: np.ndarray, min_samples: int) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor (self excluded)."""
    n = dist.shape[0]
    k = min(min_samples, n - 1)
    if k <= 0:
        return np.zeros(n)
    sorted_rows = np.sort(dist, axis=1)  # column 0 is the self-distance 0
    return sorted_rows[:, k]


def mutual_reachability(dist: np.ndarray, core: np.ndarray) -> np.ndarray:
    """max(core_i, core_j, d_ij); diagonal stays zero."""
    mr = np.maximum(dist, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, 0.0)
    return mr


def minimum_spanning_tree(weights: np.ndarray) -> np.ndarray:
    """Exact Prim MST on a dense weight matrix; rows (a, b, weight).

    Ties resolve to the lowest-index vertex, so the tree is deterministic.
    """
    n = weights.shape[0]
    if n < 2:
        return np.zeros((0, 3))
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    in_tree[0] = True
    best = weights[0].copy()
    best[0] = np.inf
    edges = np.zeros((n - 1, 3))
    for step in range(n - 1):
        nxt = int(np.argmin(best))  # argmin takes the first minimum: stable
        edges[step] = (best_from[nxt], nxt, best[nxt])
        in_tree[nxt] = True
        best[nxt] = np.inf
        improve = weights[nxt] < best
        improve &= ~in_tree
        best[improve] = weights[nxt][improve]
        best_from[improve] = nxt
    return edges


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra
            self.size[ra] += self.size[rb]


def single_linkage(mst_edges: np.ndarray, n: int) -> np.ndarray:
    """Agglomerate MST edges into a linkage table.

    Rows are (left_node, right_node, distance, size); original points are
    nodes 0..n-1, merges allocate n..2n-2 in ascending distance order.
    """
    order = np.lexsort((mst_edges[:, 1], mst_edges[:, 0], mst_edges[:, 2]))
    uf = _UnionFind(2 * n - 1)
    current = list(range(n))  # representative linkage node per root
    linkage = np.zeros((len(mst_edges), 4))
    for row, edge_idx in enumerate(order):
        a, b, dist = int(mst_edges[edge_idx, 0]), int(mst_edges[edge_idx, 1]), mst_edges[edge_idx, 2]
        ra, rb = uf.find(a), uf.find(b)
        node_a, node_b = current[ra], current[rb]
        size = uf.size[ra] + uf.size[rb]
        linkage[row] = (node_a, node_b, dist, size)
        uf.union(ra, rb)
        current[uf.find(ra)] = n + row
    return linkage


def _subtree_size(linkage: np.ndarray, n: int, node: int) -> int:
    return 1 if node < n else int(linkage[node - n, 3])


def _leaves_under(linkage: np.ndarray, n: int, node: int) -> list[int]:
    out: list[int] = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur < n:
            out.append(cur)
        else:
            stack.append(int(linkage[cur - n, 0]))
            stack.append(int(linkage[cur - n, 1]))
    return out


def condense_tree(linkage: np.ndarray, n: int, min_cluster_size: int) -> np.ndarray:
    """Prune the linkage into (parent, child, lambda, size) condensed rows.

    Walking top-down, a split spawns two new clusters only when both sides
    hold at least min_cluster_size points; otherwise the cluster continues
    through the big side while the small side's points fall out at the
    split's lambda (= 1/distance). Cluster ids start at n; n is the root.
    """
    if len(linkage) == 0:
        return np.zeros((0, 4))
    root = n + len(linkage) - 1
    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    ignore: set[int] = set()
    queue = deque([root])
    while queue:
        node = queue.popleft()
        if node in ignore or node < n:
            continue
        left, right, dist, _ = linkage[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / max(dist, _MIN_SPLIT_DISTANCE)
        left_size = _subtree_size(linkage, n, left)
        right_size = _subtree_size(linkage, n, right)
        parent = relabel[node]

        if left_size >= min_cluster_size and right_size >= min_cluster_size:
            for child in (left, right):
                relabel[child] = next_label
                rows.append((parent, next_label, lam, _subtree_size(linkage, n, child)))
                next_label += 1
                queue.append(child)
        elif left_size < min_cluster_size and right_size < min_cluster_size:
            for child in (left, right):
                for leaf in _leaves_under(linkage, n, child):
                    rows.append((parent, leaf, lam, 1))
                ignore.update(x for x in _descendants(linkage, n, child))
        else:
            big, small = (left, right) if left_size >= min_cluster_size else (right, left)
            relabel[big] = parent
            queue.append(big)
            for leaf in _leaves_under(linkage, n, small):
                rows.append((parent, leaf, lam, 1))
            ignore.update(_descendants(linkage, n, small))
    return np.asarray(rows, dtype=np.float64)


def _descendants(linkage: np.ndarray, n: int, node: int) -> list[int]:
    out = []
    stack = [node]
    while stack:
        cur = stack.pop()
        out.append(cur)
        if cur >= n:
            stack.append(int(linkage[cur - n, 0]))
            stack.append(int(linkage[cur - n, 1]))
    return out


def compute_stability(condensed: np.ndarray, n: int) -> dict[int, float]:
    """Excess-of-mass stability per cluster: sum of (lambda - birth) * size."""
    births: dict[int, float] = {n: 0.0}
    for parent, child, lam, size in condensed:
        if child >= n:
            births[int(child)] = lam
    stability = {cluster: 0.0 for cluster in births}
    for parent, child, lam, size in condensed:
        stability[int(parent)] += (lam - births[int(parent)]) * size
    return stability


def extract_clusters(condensed: np.ndarray, n: int) -> list[int]:
    """Excess-of-mass selection over the condensed cluster tree (root excluded)."""
    if len(condensed) == 0:
        return []
    stability = compute_stability(condensed, n)
    children_of: dict[int, list[int]] = {}
    for parent, child, _, _ in condensed:
        if child >= n:
            children_of.setdefault(int(parent), []).append(int(child))

    selected = {c: True for c in stability if c != n}
    for node in sorted(selected, reverse=True):
        subtree = sum(stability[c] for c in children_of.get(node, []))
        if children_of.get(node) and subtree > stability[node]:
            selected[node] = False
            stability[node] = subtree
        else:
            # Node wins: nothing below it may stay selected.
            stack = list(children_of.get(node, []))
            while stack:
                d = stack.pop()
                selected[d] = False
                stack.extend(children_of.get(d, []))
    return sorted(c for c, keep in selected.items() if keep)


def _labels_from_selection(condensed: np.ndarray, n: int, chosen: list[int]) -> np.ndarray:
    labels = np.full(n, -1, dtype=np.int64)
    if not chosen:
        return labels
    chosen_set = set(chosen)
    label_of = {cluster: i for i, cluster in enumerate(chosen)}
    # Cut the tree at the selected clusters, then walk each point upward.
    parent_of: dict[int, int] = {}
    for parent, child, _, _ in condensed:
        parent_of[int(child)] = int(parent)
    for point in range(n):
        cur = point
        while cur in parent_of:
            cur = parent_of[cur]
            if cur in chosen_set:
                labels[point] = label_of[cur]
                break
    return labels


def density_cluster(Y: np.ndarray, params: DensityParams) -> ClusterAssignment:
    """Full density-clustering pass over row vectors Y."""
    Y = np.asarray(Y, dtype=np.float64)
    n = Y.shape[0]
    if n == 0:
        return ClusterAssignment(np.zeros(0, dtype=np.int64), 0)
    if n < params.min_cluster_size:
        return ClusterAssignment(np.full(n, -1, dtype=np.int64), 0)

    dist = pairwise_distances(Y)
    core = core_distances(dist, params.min_samples)
    mreach = mutual_reachability(dist, core)
    mst = minimum_spanning_tree(mreach)
    linkage = single_linkage(mst, n)
    condensed = condense_tree(linkage, n, params.min_cluster_size)
    chosen = extract_clusters(condensed, n)
    if not chosen:
        # Hierarchy never produced a viable split (identical points,
        # structureless data): everything is one cluster.
        return ClusterAssignment(np.zeros(n, dtype=np.int64), 1)
    labels = _labels_from_selection(condensed, n, chosen)
    return ClusterAssignment(labels, len(chosen))
