import json

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from groupfield.decompose import GroupTree, TreeNode
from groupfield.evaluation import (EvalError, EvalReport, ari_per_level,
                                   completeness_eval, evaluate,
                                   gt_groups_from_labels, miou, recall_eval)


def test_miou_hand_cases():
    assert miou([0, 1], [1, 2]) == pytest.approx(1.0 / 3.0)
    assert miou([], []) == 1.0
    assert miou([0, 1, 2], [0, 1, 2]) == 1.0
    assert miou([0], [1]) == 0.0
    # symmetry
    a, b = [0, 1, 2, 5], [2, 5, 9]
    assert miou(a, b) == miou(b, a)
    # duplicates behave as sets
    assert miou([0, 0, 1], [1, 1, 2]) == pytest.approx(1.0 / 3.0)


def _two_level_tree():
    idx = np.arange(12)
    nodes = {
        0: TreeNode(0, None, 1.0, idx, [1, 2]),
        1: TreeNode(1, 0, 0.5, idx[:6]),
        2: TreeNode(2, 0, 0.5, idx[6:]),
    }
    return GroupTree(nodes=nodes, roots=[0], n_points=12)


def test_recall_perfect_tree_scores_one():
    tree = _two_level_tree()
    labels = np.zeros((12, 2), dtype=np.int64)
    labels[6:, 1] = 1
    rows = recall_eval(tree, gt_groups_from_labels(labels))
    # groups: level0 {all}, level1 {first half}, {second half}; all are nodes
    assert len(rows) == 3
    assert all(r["best_miou"] == 1.0 for r in rows)


def test_recall_partial_overlap():
    tree = _two_level_tree()
    # a GT group straddling both children: best node is the root
    groups = [{"level": 0, "group": 0, "indices": np.arange(4, 9)}]
    rows = recall_eval(tree, groups)
    expect = max(5 / 12,            # root: 5 of 12
                 2 / (6 + 3),       # child 1: {4,5} of 6 vs 5
                 3 / (6 + 2))       # child 2: {6,7,8}
    assert rows[0]["best_miou"] == pytest.approx(expect)


def test_recall_empty_tree_raises():
    with pytest.raises(EvalError):
        recall_eval(GroupTree(nodes={}, roots=[], n_points=0), [])


def test_gt_groups_enumerates_every_level_group():
    labels = np.array([[0, 0], [0, 1], [1, 2], [1, 2]])
    groups = gt_groups_from_labels(labels)
    assert [(g["level"], g["group"]) for g in groups] == \
        [(0, 0), (0, 1), (1, 0), (1, 1), (1, 2)]
    assert groups[2]["indices"].tolist() == [0]


def test_ari_identical_partition_is_one():
    tree = _two_level_tree()
    labels = np.zeros((12, 2), dtype=np.int64)
    labels[6:, 1] = 1
    out = ari_per_level(tree, labels)
    assert out["level_1"] == pytest.approx(1.0)
    # level 0 is a single class: ARI against anything is 0 by convention
    assert out["level_0"] == pytest.approx(
        adjusted_rand_score(labels[:, 0], tree.partition_at_depth(0)))


def test_ari_single_cluster_prediction_not_positive():
    gt = np.array([0, 0, 1, 1, 2, 2])
    pred = np.zeros(6, dtype=np.int64)
    assert adjusted_rand_score(gt, pred) <= 0.0


def test_ari_random_labels_near_zero():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 4, 2000)
    pred = rng.integers(0, 4, 2000)
    assert abs(adjusted_rand_score(gt, pred)) < 0.05


def test_completeness_row_counts_and_full_report(tiny_model, tiny_dataset):
    from groupfield.decompose import DecomposeParams, build_tree

    pts = tiny_dataset.points
    labels = tiny_dataset.labels
    clicks_idx = np.array([0, 100])
    params = DecomposeParams(scale_step=0.25)
    rows = completeness_eval(tiny_model, pts, pts[clicks_idx], labels,
                             clicks_idx, params)
    # one row per (click, level)
    assert len(rows) == 2 * labels.shape[1]
    assert all(0.0 <= r["best_miou"] <= 1.0 for r in rows)

    tree = build_tree(tiny_model, pts, params)
    rep = evaluate(tiny_model, pts, labels, tree, pts[clicks_idx],
                   clicks_idx, params)
    assert rep.stats["n_clicks"] == 2
    assert rep.stats["levels"] == labels.shape[1]
    assert set(rep.ari) == {"level_0", "level_1"}
    assert 0.0 <= rep.recall_mean() <= 1.0
    for lv in range(labels.shape[1]):
        assert 0.0 <= rep.completeness_mean(lv) <= 1.0

    parsed = json.loads(rep.to_json())
    assert parsed["stats"] == rep.stats
    md = rep.to_markdown()
    assert "completeness best-mIoU" in md and "recall best-mIoU" in md


def test_report_round_trips_through_json():
    rep = EvalReport(completeness=[{"click": 0, "level": 0,
                                    "best_miou": 0.5, "n_masks": 2}],
                     recall=[{"level": 0, "group": 0, "best_miou": 1.0}],
                     ari={"level_0": 1.0}, stats={"n_points": 3})
    back = json.loads(rep.to_json())
    assert back == rep.to_dict()
    assert rep.completeness_mean(0) == 0.5
    assert rep.recall_mean() == 1.0


def test_empty_report_means_raise():
    rep = EvalReport()
    with pytest.raises(EvalError):
        rep.completeness_mean()
    with pytest.raises(EvalError):
        rep.recall_mean()
