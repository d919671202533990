"""Quantitative evaluation against ground-truth hierarchies: best-mIoU
completeness over click-mined multi-scale masks, grouping recall over
tree nodes, and per-level adjusted Rand index."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from sklearn.metrics import adjusted_rand_score

from .decompose import DecomposeParams, GroupTree, multiscale_masks
from .field import AffinityField


class EvalError(Exception):
    pass


def miou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two index sets; 1.0 when both empty."""
    a = np.asarray(a)
    b = np.asarray(b)
    union = np.union1d(a, b).size
    if union == 0:
        return 1.0
    return np.intersect1d(a, b).size / union


@dataclass
class EvalReport:
    completeness: list[dict] = field(default_factory=list)  # per (click, level)
    recall: list[dict] = field(default_factory=list)        # per GT group
    ari: dict[str, float] = field(default_factory=dict)     # per GT level
    stats: dict = field(default_factory=dict)

    def completeness_mean(self, level: int | None = None) -> float:
        rows = [r for r in self.completeness
                if level is None or r["level"] == level]
        if not rows:
            raise EvalError("no completeness rows")
        return float(np.mean([r["best_miou"] for r in rows]))

    def recall_mean(self) -> float:
        if not self.recall:
            raise EvalError("no recall rows")
        return float(np.mean([r["best_miou"] for r in self.recall]))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_markdown(self) -> str:
        lines = ["| metric | level | value |", "|---|---|---|"]
        levels = sorted({r["level"] for r in self.completeness})
        for lv in levels:
            lines.append(f"| completeness best-mIoU | {lv} | "
                         f"{self.completeness_mean(lv):.4f} |")
        if self.recall:
            lines.append(f"| recall best-mIoU | all | {self.recall_mean():.4f} |")
        for name, v in sorted(self.ari.items()):
            lines.append(f"| ARI | {name} | {v:.4f} |")
        return "\n".join(lines)


def completeness_eval(model: AffinityField, positions: np.ndarray,
                      clicks: np.ndarray, gt_labels: np.ndarray,
                      click_point_indices: np.ndarray,
                      params: DecomposeParams | None = None) -> list[dict]:
    """Best mIoU per (click, GT level) over click-mined multi-scale masks.

    ``click_point_indices[i]`` names the point whose GT label paths define
    the target member sets for click i.
    """
    params = params or DecomposeParams()
    rows = []
    for ci, click in enumerate(np.atleast_2d(clicks)):
        pi = int(click_point_indices[ci])
        masks = multiscale_masks(model, positions, click, params)
        if not masks:
            continue
        for level in range(gt_labels.shape[1]):
            target = np.nonzero(gt_labels[:, level] == gt_labels[pi, level])[0]
            best = max(miou(sel, target) for _, sel in masks)
            rows.append({"click": ci, "level": level, "best_miou": float(best),
                         "n_masks": len(masks)})
    return rows


def recall_eval(tree: GroupTree, gt_groups: list[dict]) -> list[dict]:
    """Best mIoU per GT group over every tree node's point set.

    ``gt_groups`` entries: {"level": int, "group": int, "indices": array}.
    """
    if not tree.nodes:
        raise EvalError("empty tree")
    node_sets = [tree.nodes[nid].indices for nid in sorted(tree.nodes)]
    rows = []
    for g in gt_groups:
        best = max(miou(ns, g["indices"]) for ns in node_sets)
        rows.append({"level": g["level"], "group": g["group"],
                     "best_miou": float(best)})
    return rows


def gt_groups_from_labels(gt_labels: np.ndarray) -> list[dict]:
    out = []
    for level in range(gt_labels.shape[1]):
        for gid in np.unique(gt_labels[:, level]):
            out.append({"level": level, "group": int(gid),
                        "indices": np.nonzero(gt_labels[:, level] == gid)[0]})
    return out


def ari_per_level(tree: GroupTree, gt_labels: np.ndarray) -> dict[str, float]:
    """Best ARI per GT level over all tree-depth cuts."""
    partitions = [tree.partition_at_depth(d) for d in range(tree.max_depth() + 1)]
    out = {}
    for level in range(gt_labels.shape[1]):
        out[f"level_{level}"] = float(max(
            adjusted_rand_score(gt_labels[:, level], p) for p in partitions))
    return out


def evaluate(model: AffinityField, positions: np.ndarray, gt_labels: np.ndarray,
             tree: GroupTree, clicks: np.ndarray,
             click_point_indices: np.ndarray,
             params: DecomposeParams | None = None) -> EvalReport:
    report = EvalReport()
    report.completeness = completeness_eval(model, positions, clicks, gt_labels,
                                            click_point_indices, params)
    report.recall = recall_eval(tree, gt_groups_from_labels(gt_labels))
    report.ari = ari_per_level(tree, gt_labels)
    report.stats = {
        "n_points": int(positions.shape[0]),
        "n_nodes": len(tree.nodes),
        "n_clicks": int(np.atleast_2d(clicks).shape[0]),
        "levels": int(gt_labels.shape[1]),
    }
    return report
