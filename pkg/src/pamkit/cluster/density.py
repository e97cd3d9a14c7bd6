"""Hierarchical density-based clustering with noise (HDBSCAN-style).

Pipeline: mutual-reachability distances (core distance = distance to the
min_samples-th neighbor, counting the point itself first), minimum spanning
tree, single-linkage hierarchy, condensed tree at min_cluster_size, then
leaf-based selection merged upward by a selection epsilon. Points outside
every selected cluster are labeled -1; membership strength is the point's
lambda normalized by its cluster's maximum lambda.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParamError


@dataclass(frozen=True)
class DensityParams:
    min_cluster_size: int = 15
    min_samples: int = 2
    selection: str = "leaf"
    selection_epsilon: float = 0.1
    metric: str = "euclidean"

    def __post_init__(self) -> None:
        if self.min_cluster_size < 2:
            raise ParamError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ParamError("min_samples must be >= 1")
        if self.selection not in ("leaf", "eom"):
            raise ParamError(f"unknown selection method {self.selection!r}")
        if self.selection_epsilon < 0:
            raise ParamError("selection_epsilon must be >= 0")
        if self.metric != "euclidean":
            raise ParamError(f"unsupported metric {self.metric!r}")


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _mutual_reachability(dist: np.ndarray, min_samples: int) -> np.ndarray:
    n = dist.shape[0]
    k = min(min_samples, n)
    # Distance to the k-th nearest neighbor, the point itself counting first.
    core = np.partition(dist, k - 1, axis=1)[:, k - 1]
    mr = np.maximum(dist, core[:, None])
    mr = np.maximum(mr, core[None, :])
    np.fill_diagonal(mr, 0.0)
    return mr


def _mst_prim(weights: np.ndarray) -> np.ndarray:
    """Minimum spanning tree edges [n-1, 3] of (a, b, w) from a dense matrix."""
    n = weights.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = weights[0].copy()
    best[0] = np.inf
    best_src = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3))
    for t in range(n - 1):
        j = int(np.argmin(best))
        edges[t] = (best_src[j], j, best[j])
        in_tree[j] = True
        row = weights[j]
        improve = (row < best) & ~in_tree
        best[improve] = row[improve]
        best_src[improve] = j
        best[j] = np.inf
    return edges


def _single_linkage(edges: np.ndarray, n: int) -> np.ndarray:
    """Dendrogram rows [left, right, distance, size]; new nodes get ids n, n+1, ..."""
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    parent = np.arange(2 * n - 1, dtype=np.int64)
    size = np.ones(2 * n - 1, dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    rows = np.empty((n - 1, 4))
    next_id = n
    for t, e in enumerate(edges[order]):
        a = find(int(e[0]))
        b = find(int(e[1]))
        rows[t] = (a, b, e[2], size[a] + size[b])
        parent[a] = parent[b] = next_id
        size[next_id] = size[a] + size[b]
        next_id += 1
    return rows


def _bfs_from_hierarchy(hierarchy: np.ndarray, root: int, n: int) -> list[int]:
    frontier = [root]
    visited: list[int] = []
    while frontier:
        visited.extend(frontier)
        nxt: list[int] = []
        for node in frontier:
            if node >= n:
                nxt.extend(int(c) for c in hierarchy[node - n, :2])
        frontier = nxt
    return visited


def _condense_tree(hierarchy: np.ndarray, min_cluster_size: int, n: int) -> np.ndarray:
    """Condensed tree rows (parent, child, lambda, child_size).

    Children smaller than min_cluster_size fall out of their parent as points
    at the split's lambda; larger children become new clusters.
    """
    root = 2 * (n - 1)
    relabel = np.empty(root + 1, dtype=np.int64)
    relabel[root] = n
    next_label = n + 1
    ignore = np.zeros(root + 1, dtype=bool)
    rows: list[tuple[int, int, float, int]] = []

    for node in _bfs_from_hierarchy(hierarchy, root, n):
        if ignore[node] or node < n:
            continue
        left, right, dist, _ = hierarchy[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / dist if dist > 0.0 else np.inf
        left_count = int(hierarchy[left - n, 3]) if left >= n else 1
        right_count = int(hierarchy[right - n, 3]) if right >= n else 1

        if left_count >= min_cluster_size and right_count >= min_cluster_size:
            relabel[left] = next_label
            next_label += 1
            rows.append((relabel[node], relabel[left], lam, left_count))
            relabel[right] = next_label
            next_label += 1
            rows.append((relabel[node], relabel[right], lam, right_count))
        elif left_count < min_cluster_size and right_count < min_cluster_size:
            for side in (left, right):
                for sub in _bfs_from_hierarchy(hierarchy, side, n):
                    if sub < n:
                        rows.append((relabel[node], sub, lam, 1))
                    ignore[sub] = True
        else:
            keep, shed = (right, left) if left_count < min_cluster_size else (left, right)
            relabel[keep] = relabel[node]
            for sub in _bfs_from_hierarchy(hierarchy, shed, n):
                if sub < n:
                    rows.append((relabel[node], sub, lam, 1))
                ignore[sub] = True

    out = np.empty((len(rows), 4))
    out[:] = rows
    return out


def _cluster_tree(condensed: np.ndarray) -> np.ndarray:
    return condensed[condensed[:, 3] > 1]


def _compute_stability(condensed: np.ndarray, n: int) -> dict[int, float]:
    """Sum over members of (lambda_member - lambda_birth) per cluster."""
    births: dict[int, float] = {n: 0.0}
    for parent, child, lam, size in condensed:
        if size > 1:
            births[int(child)] = lam
    stability: dict[int, float] = {}
    for parent, child, lam, size in condensed:
        p = int(parent)
        stability.setdefault(p, 0.0)
        birth = births.get(p, 0.0)
        if np.isfinite(lam):
            stability[p] += (lam - birth) * size
    return stability


def _leaves(cluster_tree: np.ndarray, n: int) -> list[int]:
    if cluster_tree.shape[0] == 0:
        return []
    parents = set(int(p) for p in cluster_tree[:, 0])
    return sorted(int(c) for c in cluster_tree[:, 1] if int(c) not in parents)


def _cluster_eps(cluster_tree: np.ndarray, cluster: int) -> float:
    lam = cluster_tree[cluster_tree[:, 1] == cluster][0, 2]
    return 1.0 / lam if lam > 0 else np.inf


def _traverse_upwards(cluster_tree: np.ndarray, epsilon: float, leaf: int, root: int) -> int:
    node = leaf
    while True:
        parent = int(cluster_tree[cluster_tree[:, 1] == node][0, 0])
        if parent == root:
            return node  # never merge everything into the root
        if _cluster_eps(cluster_tree, parent) > epsilon:
            return parent
        node = parent


def _epsilon_search(
    selected: list[int], cluster_tree: np.ndarray, epsilon: float, root: int
) -> list[int]:
    """Merge clusters born below the epsilon density-distance into ancestors."""
    out: list[int] = []
    processed: set[int] = set()
    for cluster in selected:
        if cluster in processed:
            continue
        if _cluster_eps(cluster_tree, cluster) < epsilon:
            target = _traverse_upwards(cluster_tree, epsilon, cluster, root)
            out.append(target)
            # Everything under the chosen ancestor is covered by it.
            frontier = [target]
            while frontier:
                node = frontier.pop()
                processed.add(node)
                kids = [int(c) for c in cluster_tree[cluster_tree[:, 0] == node][:, 1]]
                frontier.extend(kids)
        else:
            out.append(cluster)
    return sorted(set(out))


def _eom_select(cluster_tree: np.ndarray, stability: dict[int, float], root: int) -> list[int]:
    if cluster_tree.shape[0] == 0:
        return []
    clusters = sorted((int(c) for c in cluster_tree[:, 1]), reverse=True)
    children: dict[int, list[int]] = {}
    for parent, child, _, _ in cluster_tree:
        children.setdefault(int(parent), []).append(int(child))
    is_selected = {c: True for c in clusters}
    subtree_stability = dict(stability)
    for node in clusters:
        kids = children.get(node, [])
        kid_total = sum(subtree_stability.get(k, 0.0) for k in kids)
        own = stability.get(node, 0.0)
        if kids and kid_total > own:
            is_selected[node] = False
            subtree_stability[node] = kid_total
        else:
            subtree_stability[node] = own
            frontier = list(kids)
            while frontier:
                k = frontier.pop()
                is_selected[k] = False
                frontier.extend(children.get(k, []))
    return sorted(c for c, sel in is_selected.items() if sel and c != root)


def _label_points(
    condensed: np.ndarray, selected: list[int], n: int
) -> tuple[np.ndarray, np.ndarray]:
    root = n
    selected_set = set(selected)
    label_of = {c: i for i, c in enumerate(sorted(selected))}
    cluster_parent: dict[int, int] = {}
    deaths: dict[int, float] = {}
    point_parent = np.full(n, root, dtype=np.int64)
    point_lambda = np.zeros(n)
    for parent, child, lam, size in condensed:
        p, c = int(parent), int(child)
        if np.isfinite(lam):
            deaths[p] = max(deaths.get(p, 0.0), lam)
        else:
            deaths.setdefault(p, 0.0)
        if size > 1:
            cluster_parent[c] = p
        else:
            point_parent[c] = p
            point_lambda[c] = lam

    labels = np.full(n, -1, dtype=np.int64)
    strengths = np.zeros(n)
    for p in range(n):
        node = int(point_parent[p])
        while node != root and node not in selected_set:
            node = cluster_parent[node]
        if node in selected_set:
            labels[p] = label_of[node]
            max_lam = deaths.get(node, 0.0)
            lam = point_lambda[p]
            if max_lam <= 0.0 or not np.isfinite(lam):
                strengths[p] = 1.0
            else:
                strengths[p] = min(lam, max_lam) / max_lam
    return labels, strengths


def hdbscan_labels(
    points: np.ndarray,
    params: DensityParams = DensityParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """Cluster points; returns (labels, membership_strengths).

    Noise is -1. Fewer points than min_cluster_size yields all noise rather
    than an error.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ParamError(f"expected [n, m] points, got shape {points.shape}")
    n = points.shape[0]
    if n < params.min_cluster_size:
        return np.full(n, -1, dtype=np.int64), np.zeros(n)

    dist = _pairwise_distances(points)
    mr = _mutual_reachability(dist, params.min_samples)
    edges = _mst_prim(mr)
    hierarchy = _single_linkage(edges, n)
    condensed = _condense_tree(hierarchy, params.min_cluster_size, n)
    cluster_tree = _cluster_tree(condensed)
    root = n

    if params.selection == "leaf":
        selected = _leaves(cluster_tree, n)
    else:
        stability = _compute_stability(condensed, n)
        selected = _eom_select(cluster_tree, stability, root)
    if params.selection_epsilon > 0 and selected:
        selected = _epsilon_search(selected, cluster_tree, params.selection_epsilon, root)

    return _label_points(condensed, selected, n)
