import json

import numpy as np
import pytest

from groupfield.dataset import (DEPTH_SENTINEL, Dataset, DatasetError,
                                MaskRecord, ViewMaskSet, read_dataset,
                                write_dataset)


def _toy_dataset():
    from groupfield.geometry import Camera, look_at

    rot, trans = look_at(np.array([0.0, -3.0, 0.0]), np.zeros(3))
    cam = Camera(fx=10, fy=10, cx=2, cy=2, width=4, height=4,
                 rotation=rot, translation=trans)
    depth = np.full((4, 4), DEPTH_SENTINEL, dtype=np.float32)
    depth[1:3, 1:3] = 3.0
    big = np.zeros((4, 4), dtype=bool)
    big[1:3, 1:3] = True
    small = np.zeros((4, 4), dtype=bool)
    small[1, 1] = True
    records = [MaskRecord(mask_id=1, pixel_area=4, scale3d=0.5, level=0, group=0),
               MaskRecord(mask_id=2, pixel_area=1, scale3d=0.1, level=1, group=0)]
    ms = ViewMaskSet(width=4, height=4, planes=np.stack([big, small]),
                     records=records)
    return Dataset(cameras=[cam], depths=[depth], masksets=[ms],
                   camera_extent=2.0,
                   points=np.array([[0.0, 0.0, 0.0]]),
                   labels=np.array([[0, 0]], dtype=np.int32))


def test_round_trip_identity(tmp_path):
    ds = _toy_dataset()
    write_dataset(ds, tmp_path / "d")
    back = read_dataset(tmp_path / "d")
    assert back.n_views == 1
    assert np.array_equal(back.depths[0], ds.depths[0])
    assert np.array_equal(back.masksets[0].planes, ds.masksets[0].planes)
    assert back.camera_extent == ds.camera_extent
    assert np.array_equal(back.labels, ds.labels)
    assert np.allclose(back.points, ds.points)
    for a, b in zip(back.masksets[0].records, ds.masksets[0].records):
        assert a.to_dict() == b.to_dict()
    assert np.array_equal(back.cameras[0].rotation, ds.cameras[0].rotation)


def test_round_trip_bit_identical_files(tmp_path):
    ds = _toy_dataset()
    write_dataset(ds, tmp_path / "a")
    back = read_dataset(tmp_path / "a")
    write_dataset(back, tmp_path / "b")
    for rel in ["manifest.json", "views/0/depth.f32", "views/0/masks.bin",
                "views/0/masks.json", "points.f32", "labels.i32"]:
        assert (tmp_path / "a" / rel).read_bytes() == \
            (tmp_path / "b" / rel).read_bytes()


def test_membership_nested_masks_sorted_by_area():
    ds = _toy_dataset()
    mem = ds.membership(0)
    # pixel (1,1) is inside both masks; the smaller mask comes first
    inner = mem.pixel_masks(1 * 4 + 1)
    assert inner.tolist() == [1, 0]
    # pixel (1,2) only in the big mask
    assert mem.pixel_masks(1 * 4 + 2).tolist() == [0]
    # uncovered pixel has an empty list
    assert mem.pixel_masks(0).size == 0


def test_mask_count_survives_round_trip(tiny_dataset, tmp_path):
    n_before = sum(ms.n_masks for ms in tiny_dataset.masksets)
    write_dataset(tiny_dataset, tmp_path / "d")
    back = read_dataset(tmp_path / "d")
    assert sum(ms.n_masks for ms in back.masksets) == n_before
    for a, b in zip(back.masksets, tiny_dataset.masksets):
        assert np.array_equal(a.planes, b.planes)


def test_version_mismatch_rejected(tmp_path):
    write_dataset(_toy_dataset(), tmp_path / "d")
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    manifest["version"] = 999
    (tmp_path / "d" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DatasetError, match="version"):
        read_dataset(tmp_path / "d")


def test_missing_file_rejected(tmp_path):
    write_dataset(_toy_dataset(), tmp_path / "d")
    (tmp_path / "d" / "views" / "0" / "depth.f32").unlink()
    with pytest.raises(DatasetError, match="missing file"):
        read_dataset(tmp_path / "d")


def test_missing_manifest_rejected(tmp_path):
    with pytest.raises(DatasetError, match="manifest"):
        read_dataset(tmp_path)


def test_bad_mask_ids_rejected():
    with pytest.raises(DatasetError, match="1-based"):
        ViewMaskSet(width=2, height=2,
                    planes=np.ones((1, 2, 2), dtype=bool),
                    records=[MaskRecord(mask_id=5, pixel_area=4)])


def test_all_scales_collects_assigned_values():
    ds = _toy_dataset()
    assert sorted(ds.all_scales().tolist()) == [0.1, 0.5]
