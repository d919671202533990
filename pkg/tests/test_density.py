import re
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from groupfield.density import (ClusterError, ClusterParams, cluster,
                                core_distances, mst_total_weight,
                                mutual_reachability_mst, single_linkage)

FIXTURES = sorted(Path(__file__).parent.glob("fixtures/hdbscan_*.csv"))


def _load(path):
    header = path.read_text().splitlines()[0]
    mcs = int(re.search(r"mcs=(\d+)", header).group(1))
    eps = float(re.search(r"eps=([\d.]+)", header).group(1))
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    return data[:, :-1], data[:, -1].astype(np.int64), mcs, eps


def _agree_up_to_renaming(a, b):
    # noise must match exactly; clusters must be a bijection
    if not np.array_equal(a == -1, b == -1):
        return False
    live = a != -1
    if not live.any():
        return True
    pairs = set(zip(a[live].tolist(), b[live].tolist()))
    return (len(pairs) == len({p[0] for p in pairs})
            and len(pairs) == len({p[1] for p in pairs}))


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_matches_reference_labels_on_fixtures(path):
    points, expected, mcs, eps = _load(path)
    res = cluster(points, ClusterParams(min_cluster_size=mcs,
                                        cluster_selection_epsilon=eps))
    assert _agree_up_to_renaming(res.labels, expected), \
        f"ARI vs reference: {adjusted_rand_score(res.labels, expected):.4f}"
    assert res.n_clusters == len(set(expected[expected >= 0]))


def _brute_force_mst_weight(points, min_samples):
    from scipy.sparse.csgraph import minimum_spanning_tree
    from scipy.spatial.distance import cdist

    core = core_distances(points, min_samples)
    d = cdist(points, points)
    mr = np.maximum(d, np.maximum(core[:, None], core[None, :]))
    np.fill_diagonal(mr, 0.0)
    return minimum_spanning_tree(mr).sum()


def test_mst_weight_equals_brute_force():
    rng = np.random.default_rng(0)
    for n, d, ms in [(50, 2, 5), (120, 3, 10), (200, 2, 15)]:
        pts = rng.normal(size=(n, d))
        mine = mst_total_weight(pts, ms)
        ref = _brute_force_mst_weight(pts, ms)
        assert mine == pytest.approx(ref, rel=1e-10)


def test_core_distance_small_oracle():
    # 4 colinear points; 2nd-NN distance (self included => nearest other)
    pts = np.array([[0.0], [1.0], [3.0], [6.0]])
    assert np.allclose(core_distances(pts, 2), [1.0, 1.0, 2.0, 3.0])
    # min_samples=3: second-nearest other point
    assert np.allclose(core_distances(pts, 3), [3.0, 2.0, 3.0, 5.0])


def test_mst_two_points():
    pts = np.array([[0.0, 0.0], [3.0, 4.0]])
    edges, core = mutual_reachability_mst(pts, 1)
    assert edges.shape == (1, 3)
    assert edges[0, 2] == pytest.approx(5.0)
    assert np.allclose(core, 0.0)


def test_single_linkage_sizes_and_monotone_distances():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(60, 2))
    edges, _ = mutual_reachability_mst(pts, 5)
    h = single_linkage(edges, 60)
    assert h.shape == (59, 4)
    assert (np.diff(h[:, 2]) >= 0).all()
    assert h[-1, 3] == 60  # final merge contains everything


def test_permutation_equivariance():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(80, 2)) + [0, 0]
    b = rng.normal(size=(80, 2)) + [10, 0]
    pts = np.vstack([a, b])
    params = ClusterParams(min_cluster_size=20)
    base = cluster(pts, params).labels
    perm = rng.permutation(len(pts))
    permuted = cluster(pts[perm], params).labels
    assert _agree_up_to_renaming(base[perm], permuted)


def test_duplicated_points_keep_cluster_structure():
    rng = np.random.default_rng(3)
    pts = np.vstack([rng.normal(size=(60, 2)),
                     rng.normal(size=(60, 2)) + [8, 0]])
    doubled = np.vstack([pts, pts])
    res = cluster(doubled, ClusterParams(min_cluster_size=30))
    assert res.n_clusters == 2
    # each point lands with its duplicate
    assert np.array_equal(res.labels[:len(pts)], res.labels[len(pts):])


def test_fewer_points_than_min_cluster_size_all_noise():
    pts = np.random.default_rng(0).normal(size=(10, 2))
    res = cluster(pts, ClusterParams(min_cluster_size=20))
    assert res.n_clusters == 0
    assert (res.labels == -1).all()


def test_single_blob_has_no_selectable_cluster():
    # the root is never selected: one homogeneous blob is all noise
    pts = np.random.default_rng(4).normal(size=(200, 2))
    res = cluster(pts, ClusterParams(min_cluster_size=50))
    assert res.n_clusters == 0
    assert (res.labels == -1).all()


def test_epsilon_never_increases_cluster_count():
    rng = np.random.default_rng(7)
    # two tight pairs of blobs: eps merges near pairs
    pts = np.vstack([rng.normal(0, 0.3, (50, 2)) + c
                     for c in ([0, 0], [1.5, 0], [10, 0], [11.5, 0])])
    k0 = cluster(pts, ClusterParams(min_cluster_size=25,
                                    cluster_selection_epsilon=0.0)).n_clusters
    kbig = cluster(pts, ClusterParams(min_cluster_size=25,
                                      cluster_selection_epsilon=3.0)).n_clusters
    assert 1 <= kbig <= k0


def test_input_validation():
    with pytest.raises(ClusterError):
        cluster(np.zeros((0, 2)))
    with pytest.raises(ClusterError):
        cluster(np.array([1.0, 2.0]))
    with pytest.raises(ClusterError):
        cluster(np.array([[np.nan, 0.0]]))
    with pytest.raises(ClusterError):
        ClusterParams(min_cluster_size=1)
    with pytest.raises(ClusterError):
        ClusterParams(cluster_selection_epsilon=-0.1)


def test_stabilities_reported_per_label():
    pts = np.vstack([np.random.default_rng(5).normal(size=(60, 2)),
                     np.random.default_rng(6).normal(size=(60, 2)) + [9, 0]])
    res = cluster(pts, ClusterParams(min_cluster_size=25))
    assert set(res.stabilities) == set(range(res.n_clusters))
    assert all(v >= 0 for v in res.stabilities.values())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([2, 3]))
def test_labels_shape_and_range_property(seed, dim):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(rng.integers(5, 120), dim))
    res = cluster(pts, ClusterParams(min_cluster_size=10))
    assert res.labels.shape == (len(pts),)
    assert res.labels.min() >= -1
    if res.n_clusters:
        assert set(np.unique(res.labels[res.labels >= 0])) <= set(range(res.n_clusters))
