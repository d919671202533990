"""Density-based hierarchical clustering (HDBSCAN) built from scratch.

Pipeline: core distances -> mutual reachability -> exact Prim MST ->
single-linkage hierarchy -> condensed tree -> Excess-of-Mass cluster
selection with an epsilon floor -> labels with noise = -1.

Exact O(n^2) throughout; the decomposer keeps n small by voxel
downsampling, so correctness and determinism win over asymptotics.
Ties always break toward the lowest point index.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist


class ClusterError(Exception):
    pass


@dataclass
class ClusterParams:
    min_cluster_size: int = 40
    min_samples: int | None = None   # defaults to min_cluster_size
    cluster_selection_epsilon: float = 0.1

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ClusterError("min_cluster_size must be >= 2")
        if self.cluster_selection_epsilon < 0:
            raise ClusterError("cluster_selection_epsilon must be >= 0")

    @property
    def effective_min_samples(self) -> int:
        return self.min_samples if self.min_samples is not None else self.min_cluster_size


@dataclass
class ClusterResult:
    labels: np.ndarray                 # (n,) int, -1 = noise
    n_clusters: int
    stabilities: dict[int, float] = field(default_factory=dict)


def core_distances(points: np.ndarray, min_samples: int,
                   chunk: int = 1024) -> np.ndarray:
    """Distance to the min_samples-th nearest neighbor, self included."""
    n = points.shape[0]
    k = min(min_samples, n)
    out = np.empty(n)
    for start in range(0, n, chunk):
        block = cdist(points[start:start + chunk], points)
        out[start:start + chunk] = np.partition(block, k - 1, axis=1)[:, k - 1]
    return out


def mutual_reachability_mst(points: np.ndarray, min_samples: int):
    """Exact MST of the mutual reachability graph via Prim's algorithm.

    Returns (edges, core) where edges is (n-1, 3) float64 rows
    (u, v, weight); rows are in insertion order (not sorted).
    """
    n = points.shape[0]
    core = core_distances(points, min_samples)
    if n == 1:
        return np.zeros((0, 3)), core
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    current = 0
    for it in range(n - 1):
        in_tree[current] = True
        row = cdist(points[current:current + 1], points)[0]
        mr = np.maximum(row, np.maximum(core, core[current]))
        improved = ~in_tree & (mr < best)
        best[improved] = mr[improved]
        parent[improved] = current
        best[current] = np.inf
        nxt = int(np.argmin(best))
        edges[it] = (parent[nxt], nxt, best[nxt])
        current = nxt
    return edges, core


def mst_total_weight(points: np.ndarray, min_samples: int) -> float:
    edges, _ = mutual_reachability_mst(points, min_samples)
    return float(edges[:, 2].sum())


def single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Scipy-style linkage rows (a, b, dist, size) from sorted MST edges."""
    order = np.argsort(edges[:, 2], kind="stable")
    parent = np.arange(2 * n - 1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)
    hierarchy = np.empty((n - 1, 4))

    def find(x):
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    nxt = n
    for i, ei in enumerate(order):
        u, v, w = edges[ei]
        ru, rv = find(int(u)), find(int(v))
        hierarchy[i] = (ru, rv, w, size[ru] + size[rv])
        parent[ru] = parent[rv] = nxt
        size[nxt] = size[ru] + size[rv]
        nxt += 1
    return hierarchy


def _bfs_hierarchy(hierarchy: np.ndarray, root: int, n: int) -> list[int]:
    queue = [root]
    out = []
    while queue:
        out.extend(queue)
        queue = [int(c) for node in queue if node >= n
                 for c in hierarchy[node - n, :2]]
    return out


def condense_tree(hierarchy: np.ndarray, min_cluster_size: int) -> np.ndarray:
    """Condensed tree rows (parent, child, lambda, child_size).

    Cluster ids start at n (the root); children that stay above
    min_cluster_size through a split become new clusters, smaller sides
    fall out as points at the split's lambda = 1/distance.
    """
    n = hierarchy.shape[0] + 1
    root = 2 * n - 2
    node_list = _bfs_hierarchy(hierarchy, root, n)
    relabel = np.empty(root + 1, dtype=np.int64)
    relabel[root] = n
    next_label = n + 1
    ignore = np.zeros(root + 1, dtype=bool)
    rows = []

    for node in node_list:
        if ignore[node] or node < n:
            continue
        left, right, dist, _ = hierarchy[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / dist if dist > 0 else np.inf
        left_count = int(hierarchy[left - n, 3]) if left >= n else 1
        right_count = int(hierarchy[right - n, 3]) if right >= n else 1

        if left_count >= min_cluster_size and right_count >= min_cluster_size:
            relabel[left] = next_label
            rows.append((relabel[node], next_label, lam, left_count))
            next_label += 1
            relabel[right] = next_label
            rows.append((relabel[node], next_label, lam, right_count))
            next_label += 1
        elif left_count < min_cluster_size and right_count < min_cluster_size:
            for side in (left, right):
                for sub in _bfs_hierarchy(hierarchy, side, n):
                    if sub < n:
                        rows.append((relabel[node], sub, lam, 1))
                    ignore[sub] = True
        elif left_count < min_cluster_size:
            relabel[right] = relabel[node]
            for sub in _bfs_hierarchy(hierarchy, left, n):
                if sub < n:
                    rows.append((relabel[node], sub, lam, 1))
                ignore[sub] = True
        else:
            relabel[left] = relabel[node]
            for sub in _bfs_hierarchy(hierarchy, right, n):
                if sub < n:
                    rows.append((relabel[node], sub, lam, 1))
                ignore[sub] = True
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def compute_stability(condensed: np.ndarray) -> dict[int, float]:
    births: dict[int, float] = {}
    for parent, child, lam, _ in condensed:
        if child >= condensed[:, 0].min():
            births[int(child)] = min(lam, births.get(int(child), np.inf))
    root = int(condensed[:, 0].min())
    births[root] = 0.0
    stability: dict[int, float] = {}
    for parent, child, lam, size in condensed:
        p = int(parent)
        birth = births.get(p, 0.0)
        stability[p] = stability.get(p, 0.0) + (lam - birth) * size
    return stability


def _cluster_children(condensed: np.ndarray) -> dict[int, list[int]]:
    kids: dict[int, list[int]] = {}
    for parent, child, lam, size in condensed:
        if size > 1:
            kids.setdefault(int(parent), []).append(int(child))
    return kids


def _cluster_birth_eps(condensed: np.ndarray) -> dict[int, float]:
    """Max distance (1/lambda) at which each cluster first appears."""
    out: dict[int, float] = {}
    for parent, child, lam, size in condensed:
        if size > 1:
            out[int(child)] = 1.0 / lam if lam > 0 else np.inf
    return out


def select_clusters(condensed: np.ndarray, stability: dict[int, float],
                    cluster_selection_epsilon: float = 0.0) -> list[int]:
    """Excess-of-Mass selection; the root is never selected."""
    kids = _cluster_children(condensed)
    root = int(condensed[:, 0].min())
    clusters = sorted(stability.keys(), reverse=True)
    stability = dict(stability)
    is_selected = {c: True for c in clusters if c != root}

    def subtree(node):
        out, queue = [], [node]
        while queue:
            out.extend(queue)
            queue = [c for q in queue for c in kids.get(q, [])]
        return out

    for node in clusters:
        if node == root:
            continue
        child_stab = sum(stability.get(c, 0.0) for c in kids.get(node, []))
        if kids.get(node) and child_stab > stability[node]:
            is_selected[node] = False
            stability[node] = child_stab
        else:
            for sub in subtree(node):
                if sub != node:
                    is_selected[sub] = False

    selected = [c for c, v in is_selected.items() if v]
    if cluster_selection_epsilon > 0.0 and selected:
        selected = _epsilon_search(selected, condensed, kids, root,
                                   cluster_selection_epsilon)
    return sorted(selected)


def _epsilon_search(selected, condensed, kids, root, epsilon):
    birth_eps = _cluster_birth_eps(condensed)
    parent_of = {}
    for p, cs in kids.items():
        for c in cs:
            parent_of[c] = p
    out, processed = [], set()
    for leaf in selected:
        if birth_eps.get(leaf, np.inf) >= epsilon:
            out.append(leaf)
            continue
        if leaf in processed:
            continue
        node = leaf
        while True:
            parent = parent_of.get(node, root)
            if parent == root:
                break  # root is not selectable; keep the topmost non-root
            if birth_eps.get(parent, np.inf) > epsilon:
                node = parent
                break
            node = parent
        out.append(node)
        stack = [node]
        while stack:
            c = stack.pop()
            processed.add(c)
            stack.extend(kids.get(c, []))
    return list(dict.fromkeys(out))


def label_points(condensed: np.ndarray, selected: list[int], n: int) -> np.ndarray:
    parent_of = {}
    point_parent = np.full(n, -1, dtype=np.int64)
    for parent, child, lam, size in condensed:
        if size > 1:
            parent_of[int(child)] = int(parent)
        else:
            point_parent[int(child)] = int(parent)
    selected_set = set(selected)
    label_of = {c: i for i, c in enumerate(sorted(selected))}
    labels = np.full(n, -1, dtype=np.int64)
    cache: dict[int, int] = {}
    for p in range(n):
        node = point_parent[p]
        if node in cache:
            labels[p] = cache[node]
            continue
        walk = node
        lab = -1
        while walk != -1:
            if walk in selected_set:
                lab = label_of[walk]
                break
            walk = parent_of.get(walk, -1)
        cache[node] = lab
        labels[p] = lab
    return labels


def cluster(points: np.ndarray, params: ClusterParams | None = None) -> ClusterResult:
    """Full HDBSCAN on (n, d) feature vectors."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] == 0:
        raise ClusterError("need a nonempty (n, d) array")
    if not np.isfinite(points).all():
        raise ClusterError("features must be finite")
    params = params or ClusterParams()
    n = points.shape[0]
    if n < params.min_cluster_size:
        return ClusterResult(labels=np.full(n, -1, dtype=np.int64), n_clusters=0)

    edges, _ = mutual_reachability_mst(points, params.effective_min_samples)
    hierarchy = single_linkage(edges, n)
    condensed = condense_tree(hierarchy, params.min_cluster_size)
    if condensed.size == 0:
        return ClusterResult(labels=np.full(n, -1, dtype=np.int64), n_clusters=0)
    stability = compute_stability(condensed)
    selected = select_clusters(condensed, stability,
                               params.cluster_selection_epsilon)
    labels = label_points(condensed, selected, n)
    stabs = {i: float(stability.get(c, 0.0)) for i, c in enumerate(sorted(selected))}
    return ClusterResult(labels=labels, n_clusters=len(selected), stabilities=stabs)
