"""Recursive scale-descending clustering of the affinity field into a
group tree, plus interactive click+size selection."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.spatial.distance import cdist

from .density import ClusterParams, ClusterResult, cluster
from .field import AffinityField


class DecomposeError(Exception):
    pass


@dataclass
class DecomposeParams:
    s_max: float = 1.0
    scale_step: float = 0.05
    downsample_factor: float = 0.01
    similarity_threshold: float = 0.9
    cluster: ClusterParams = field(default_factory=ClusterParams)

    def __post_init__(self):
        if not (0 < self.scale_step < self.s_max):
            raise DecomposeError("need 0 < scale_step < s_max")

    def scale_grid(self) -> np.ndarray:
        """0, step, 2*step, ..., s_max (ascending)."""
        n = int(round(self.s_max / self.scale_step))
        return np.linspace(0.0, self.s_max, n + 1)


@dataclass
class TreeNode:
    id: int
    parent: int | None
    split_scale: float
    indices: np.ndarray          # sorted point indices
    children: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return self.indices.size


@dataclass
class GroupTree:
    nodes: dict[int, TreeNode]
    roots: list[int]
    n_points: int

    def node(self, node_id: int) -> TreeNode:
        if node_id not in self.nodes:
            raise DecomposeError(f"unknown tree node {node_id}")
        return self.nodes[node_id]

    def depth_of(self, node_id: int) -> int:
        d, node = 0, self.nodes[node_id]
        while node.parent is not None:
            node = self.nodes[node.parent]
            d += 1
        return d

    def max_depth(self) -> int:
        return max((self.depth_of(i) for i in self.nodes), default=0)

    def partition_at_depth(self, depth: int) -> np.ndarray:
        """Point labels from cutting the tree at ``depth`` (leaves above
        the cut keep their own node). -1 for points under no root."""
        labels = np.full(self.n_points, -1, dtype=np.int64)

        def walk(node_id, d):
            node = self.nodes[node_id]
            if d == depth or not node.children:
                labels[node.indices] = node_id
                return
            for c in node.children:
                walk(c, d + 1)

        for r in self.roots:
            walk(r, 0)
        return labels

    def validate(self) -> None:
        for node in self.nodes.values():
            if len(node.children) == 1:
                raise DecomposeError(f"node {node.id} has exactly one child")
            if node.children:
                kid_sets = [self.nodes[c].indices for c in node.children]
                merged = np.concatenate(kid_sets)
                if merged.size != np.unique(merged).size:
                    raise DecomposeError(f"children of {node.id} overlap")
                if not np.isin(merged, node.indices).all():
                    raise DecomposeError(f"children of {node.id} escape parent")
                for c in node.children:
                    if self.nodes[c].split_scale >= node.split_scale:
                        raise DecomposeError("split scales must strictly decrease")


def voxel_downsample(positions: np.ndarray, voxel: float) -> np.ndarray:
    """Representative (lowest) point index per occupied voxel; sorted."""
    if voxel <= 0:
        return np.arange(positions.shape[0])
    keys = np.floor(positions / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)


def _nearest_member_labels(positions, member_positions, member_labels):
    """Label per query position from its nearest member (lowest index on ties)."""
    d = cdist(positions, member_positions)
    return member_labels[np.argmin(d, axis=1)]


def reassign_noise(labels: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Give every noise point (-1) the label of the nearest non-noise
    point in 3D Euclidean space; ties go to the lower cluster index."""
    noise = labels == -1
    if not noise.any():
        return labels
    keep = ~noise
    if not keep.any():
        raise DecomposeError("cannot reassign noise: all points are noise")
    out = labels.copy()
    d = cdist(positions[noise], positions[keep])
    kept_labels = labels[keep]
    # lexicographic (distance, cluster index): nudge by a stable per-cluster
    # epsilon-free argmin over a (label-major) stable ordering
    order = np.lexsort((np.arange(kept_labels.size), kept_labels))
    d_ord = d[:, order]
    best = np.argmin(d_ord, axis=1)  # first minimum = lowest cluster index
    out[noise] = kept_labels[order][best]
    return out


def _query_features(model: AffinityField, positions: np.ndarray, s: float,
                    chunk: int = 8192) -> np.ndarray:
    # decomposition scales are quantile ranks in [0, 1], not world units
    feats = []
    with torch.no_grad():
        for start in range(0, positions.shape[0], chunk):
            feats.append(model.query(positions[start:start + chunk], s,
                                     normalized=True)
                         .cpu().numpy().astype(np.float64))
    return np.concatenate(feats)


def global_cluster(model: AffinityField, positions: np.ndarray, s: float,
                   params: DecomposeParams | None = None) -> ClusterResult:
    """Cluster all points by their features at size s; noise reassigned.

    Degenerate all-identical features collapse to a single cluster.
    """
    params = params or DecomposeParams()
    positions = np.asarray(positions, dtype=np.float64)
    reps = voxel_downsample(positions, params.downsample_factor * s)
    feats = _query_features(model, positions[reps], s)
    result = cluster(feats, params.cluster)
    rep_labels = result.labels
    if result.n_clusters == 0:
        rep_labels = np.zeros(reps.size, dtype=np.int64)
        result = ClusterResult(labels=rep_labels, n_clusters=1,
                               stabilities={0: 0.0})
    else:
        rep_labels = reassign_noise(rep_labels, positions[reps])
    full = _nearest_member_labels(positions, positions[reps], rep_labels)
    return ClusterResult(labels=full, n_clusters=result.n_clusters,
                         stabilities=result.stabilities)


def build_tree(model: AffinityField, positions: np.ndarray,
               params: DecomposeParams | None = None) -> GroupTree:
    """Depth-first greedy decomposition.

    Roots come from a global clustering at s_max; each node is then
    re-clustered at decreasing sizes (step params.scale_step, down to and
    including 0). The first size producing more than one cluster splits
    the node; noise is reattached to the nearest local cluster, so the
    children partition the parent. Single-child chains are pruned.
    """
    params = params or DecomposeParams()
    positions = np.asarray(positions, dtype=np.float64)
    scales = params.scale_grid()[::-1]  # descending, s_max ... 0

    top = global_cluster(model, positions, params.s_max, params)
    nodes: dict[int, TreeNode] = {}
    roots: list[int] = []
    next_id = [0]

    def new_node(parent, split_scale, indices):
        nid = next_id[0]
        next_id[0] += 1
        nodes[nid] = TreeNode(id=nid, parent=parent, split_scale=split_scale,
                              indices=np.sort(indices))
        return nid

    def decompose(node_id, scale_pos):
        node = nodes[node_id]
        for sp in range(scale_pos, scales.size):
            s = scales[sp]
            if node.count < params.cluster.min_cluster_size:
                return
            sub_pos = positions[node.indices]
            reps = voxel_downsample(sub_pos, params.downsample_factor * s)
            feats = _query_features(model, sub_pos[reps], s)
            result = cluster(feats, params.cluster)
            if result.n_clusters <= 1:
                continue
            rep_labels = reassign_noise(result.labels, sub_pos[reps])
            full_labels = _nearest_member_labels(sub_pos, sub_pos[reps], rep_labels)
            for lab in range(result.n_clusters):
                child_idx = node.indices[full_labels == lab]
                cid = new_node(node_id, s, child_idx)
                node.children.append(cid)
            for cid in list(node.children):
                decompose(cid, sp + 1)
            return

    for lab in range(top.n_clusters):
        rid = new_node(None, params.s_max, np.nonzero(top.labels == lab)[0])
        roots.append(rid)
    for rid in list(roots):
        decompose(rid, 1)

    tree = GroupTree(nodes=nodes, roots=roots, n_points=positions.shape[0])
    _prune_chains(tree)
    _renumber_preorder(tree)
    return tree


def _prune_chains(tree: GroupTree) -> None:
    # splice out any node with exactly one child (root chains collapse too)
    changed = True
    while changed:
        changed = False
        for nid in list(tree.nodes):
            node = tree.nodes.get(nid)
            if node is None or len(node.children) != 1:
                continue
            child = tree.nodes[node.children[0]]
            child.parent = node.parent
            if node.parent is None:
                tree.roots[tree.roots.index(nid)] = child.id
            else:
                parent = tree.nodes[node.parent]
                parent.children[parent.children.index(nid)] = child.id
            del tree.nodes[nid]
            changed = True


def _renumber_preorder(tree: GroupTree) -> None:
    mapping = {}
    counter = [0]

    def visit(nid):
        mapping[nid] = counter[0]
        counter[0] += 1
        for c in tree.nodes[nid].children:
            visit(c)

    for r in tree.roots:
        visit(r)
    new_nodes = {}
    for old, node in tree.nodes.items():
        node.id = mapping[old]
        node.parent = mapping[node.parent] if node.parent is not None else None
        node.children = [mapping[c] for c in node.children]
        new_nodes[node.id] = node
    tree.nodes = new_nodes
    tree.roots = [mapping[r] for r in tree.roots]


def select_group(model: AffinityField, positions: np.ndarray, click,
                 s: float, threshold: float = 0.9) -> np.ndarray:
    """Indices whose feature cosine-similarity with the click point's
    feature at size s reaches the threshold. Sorted ascending."""
    positions = np.asarray(positions, dtype=np.float64)
    feats = _query_features(model, positions, s)
    fc = _query_features(model, np.asarray(click, dtype=np.float64).reshape(1, 3), s)[0]
    sims = feats @ fc
    return np.nonzero(sims >= threshold)[0]


def multiscale_masks(model: AffinityField, positions: np.ndarray, click,
                     params: DecomposeParams | None = None,
                     threshold: float | None = None,
                     merge_iou: float = 0.95) -> list[tuple[float, np.ndarray]]:
    """select_group swept over the scale grid; near-duplicate neighbors
    (IoU > merge_iou) merge keeping the smaller scale."""
    params = params or DecomposeParams()
    if threshold is None:
        threshold = params.similarity_threshold
    out: list[tuple[float, np.ndarray]] = []
    for s in params.scale_grid():
        sel = select_group(model, positions, click, float(s), threshold)
        if sel.size == 0:
            continue
        if out:
            prev = out[-1][1]
            inter = np.intersect1d(prev, sel).size
            union = np.union1d(prev, sel).size
            if union and inter / union > merge_iou:
                continue
        out.append((float(s), sel))
    return out


def save_tree(tree: GroupTree, positions: np.ndarray, json_path, sidecar_path) -> None:
    """JSON node table + one binary sidecar holding all index arrays (u32)."""
    json_path, sidecar_path = Path(json_path), Path(sidecar_path)
    blob = bytearray()
    node_meta = []
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        pts = positions[node.indices]
        offset = len(blob) // 4
        blob.extend(node.indices.astype("<u4").tobytes())
        node_meta.append({
            "id": node.id,
            "parent": node.parent,
            "children": node.children,
            "split_scale": node.split_scale,
            "count": node.count,
            "centroid": pts.mean(axis=0).tolist(),
            "bbox": [pts.min(axis=0).tolist(), pts.max(axis=0).tolist()],
            "point_idx_ref": {"offset": offset, "count": node.count},
        })
    sidecar_path.write_bytes(bytes(blob))
    json_path.write_text(json.dumps({
        "n_points": tree.n_points,
        "roots": tree.roots,
        "sidecar": sidecar_path.name,
        "nodes": node_meta,
    }, indent=1))


def load_tree(json_path) -> GroupTree:
    json_path = Path(json_path)
    meta = json.loads(json_path.read_text())
    raw = np.frombuffer((json_path.parent / meta["sidecar"]).read_bytes(), dtype="<u4")
    nodes = {}
    for nm in meta["nodes"]:
        ref = nm["point_idx_ref"]
        idx = raw[ref["offset"]:ref["offset"] + ref["count"]].astype(np.int64)
        nodes[nm["id"]] = TreeNode(id=nm["id"], parent=nm["parent"],
                                   split_scale=nm["split_scale"],
                                   indices=idx, children=list(nm["children"]))
    return GroupTree(nodes=nodes, roots=list(meta["roots"]),
                     n_points=meta["n_points"])
