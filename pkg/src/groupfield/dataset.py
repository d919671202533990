"""On-disk dataset format: posed cameras, depth maps, overlapping 2D masks.

Directory layout::

    manifest.json
    points.f32            (N, 3) float32 little-endian, row-major (optional)
    labels.i32            (N, L) int32 little-endian (optional ground truth)
    views/<i>/depth.f32   (H, W) float32, +inf where no geometry
    views/<i>/masks.bin   K bitplanes, each np.packbits of an (H, W) bool map
    views/<i>/masks.json  per-mask metadata

Masks may overlap or nest, so each view stores one bitplane per mask
instead of a single label map. Mask ids are 1-based within a view; id 0
means "no mask" by convention.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Camera

FORMAT_VERSION = 1
DEPTH_SENTINEL = np.float32(np.inf)


class DatasetError(Exception):
    pass


@dataclass
class MaskRecord:
    mask_id: int
    pixel_area: int
    scale3d: float | None = None
    level: int | None = None
    group: int | None = None
    corrupted: bool = False

    def to_dict(self) -> dict:
        return {
            "mask_id": self.mask_id,
            "pixel_area": self.pixel_area,
            "scale3d": self.scale3d,
            "level": self.level,
            "group": self.group,
            "corrupted": self.corrupted,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MaskRecord":
        return cls(
            mask_id=d["mask_id"],
            pixel_area=d["pixel_area"],
            scale3d=d.get("scale3d"),
            level=d.get("level"),
            group=d.get("group"),
            corrupted=d.get("corrupted", False),
        )


@dataclass
class ViewMaskSet:
    """All masks of one view: (K, H, W) boolean planes plus metadata."""

    width: int
    height: int
    planes: np.ndarray
    records: list[MaskRecord]

    def __post_init__(self):
        self.planes = np.asarray(self.planes, dtype=bool)
        if self.planes.ndim != 3:
            raise DatasetError("planes must be (K, H, W)")
        if self.planes.shape != (len(self.records), self.height, self.width):
            raise DatasetError("planes shape does not match records/resolution")
        for i, rec in enumerate(self.records):
            if rec.mask_id != i + 1:
                raise DatasetError("mask ids must be 1-based and consecutive")
            if rec.pixel_area < 1:
                raise DatasetError("mask pixel_area must be >= 1")

    @property
    def n_masks(self) -> int:
        return len(self.records)


@dataclass
class ViewMembership:
    """Per-pixel membership lists for one view, CSR over flat pixel index.

    Member masks of each pixel are ordered by ascending pixel_area
    (ties by mask index), the order the trainer's CDF indexing assumes.
    """

    indptr: np.ndarray   # (H*W + 1,)
    members: np.ndarray  # mask indices (0-based into the view's records)

    def pixel_masks(self, flat_pixel: int) -> np.ndarray:
        return self.members[self.indptr[flat_pixel]:self.indptr[flat_pixel + 1]]


def _build_membership(maskset: ViewMaskSet) -> ViewMembership:
    areas = np.array([r.pixel_area for r in maskset.records])
    order = np.argsort(areas, kind="stable")
    planes = maskset.planes[order].reshape(len(order), -1) if len(order) else \
        np.zeros((0, maskset.height * maskset.width), dtype=bool)
    # nonzero over (pixels, ranked masks) yields pixel-major, area-ascending order
    pix, rank = np.nonzero(planes.T)
    counts = np.bincount(pix, minlength=maskset.height * maskset.width)
    indptr = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return ViewMembership(indptr=indptr, members=order[rank])


@dataclass
class Dataset:
    cameras: list[Camera]
    depths: list[np.ndarray]
    masksets: list[ViewMaskSet]
    camera_extent: float
    world_unit: str = "synthetic"
    points: np.ndarray | None = None
    labels: np.ndarray | None = None
    _memberships: list[ViewMembership] = field(default_factory=list, repr=False)

    @property
    def n_views(self) -> int:
        return len(self.cameras)

    def membership(self, view: int) -> ViewMembership:
        if not self._memberships:
            self._memberships = [_build_membership(m) for m in self.masksets]
        return self._memberships[view]

    def all_scales(self) -> np.ndarray:
        scales = [r.scale3d for ms in self.masksets for r in ms.records
                  if r.scale3d is not None]
        return np.array(scales, dtype=np.float64)


def write_dataset(data: Dataset, out_dir) -> dict:
    """Write a dataset directory; returns the manifest dict."""
    if data.n_views < 1:
        raise DatasetError("dataset must contain >= 1 view")
    if len(data.depths) != data.n_views or len(data.masksets) != data.n_views:
        raise DatasetError("camera/depth/mask view counts differ")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    views_meta = []
    for i, (depth, maskset) in enumerate(zip(data.depths, data.masksets)):
        vdir = out / "views" / str(i)
        vdir.mkdir(parents=True, exist_ok=True)
        depth32 = np.ascontiguousarray(depth, dtype="<f4")
        if depth32.shape != (maskset.height, maskset.width):
            raise DatasetError(f"view {i}: depth shape does not match mask resolution")
        (vdir / "depth.f32").write_bytes(depth32.tobytes())
        packed = np.packbits(maskset.planes.reshape(maskset.n_masks, -1), axis=-1) \
            if maskset.n_masks else np.zeros((0, 0), dtype=np.uint8)
        (vdir / "masks.bin").write_bytes(packed.tobytes())
        meta = {
            "width": maskset.width,
            "height": maskset.height,
            "n_masks": maskset.n_masks,
            "masks": [r.to_dict() for r in maskset.records],
        }
        (vdir / "masks.json").write_text(json.dumps(meta, indent=1))
        views_meta.append({
            "depth_path": f"views/{i}/depth.f32",
            "masklabel_path": f"views/{i}/masks.bin",
            "mask_meta_path": f"views/{i}/masks.json",
        })

    manifest = {
        "version": FORMAT_VERSION,
        "world_unit": data.world_unit,
        "camera_extent": data.camera_extent,
        "cameras": [c.to_dict() for c in data.cameras],
        "views": views_meta,
    }
    if data.points is not None:
        pts = np.ascontiguousarray(data.points, dtype="<f4")
        (out / "points.f32").write_bytes(pts.tobytes())
        manifest["points"] = {"path": "points.f32", "count": int(pts.shape[0])}
    if data.labels is not None:
        lab = np.ascontiguousarray(data.labels, dtype="<i4")
        (out / "labels.i32").write_bytes(lab.tobytes())
        manifest["labels"] = {"path": "labels.i32", "levels": int(lab.shape[1])}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def read_dataset(in_dir) -> Dataset:
    root = Path(in_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise DatasetError(f"no manifest at {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("version") != FORMAT_VERSION:
        raise DatasetError(
            f"unsupported dataset version {manifest.get('version')!r}, "
            f"expected {FORMAT_VERSION}")
    cameras = [Camera.from_dict(d) for d in manifest["cameras"]]
    if len(cameras) != len(manifest["views"]):
        raise DatasetError("camera count does not match view count")

    depths, masksets = [], []
    for i, view in enumerate(manifest["views"]):
        for key in ("depth_path", "masklabel_path", "mask_meta_path"):
            if not (root / view[key]).exists():
                raise DatasetError(f"missing file {root / view[key]}")
        meta = json.loads((root / view["mask_meta_path"]).read_text())
        h, w, k = meta["height"], meta["width"], meta["n_masks"]
        depth = np.frombuffer((root / view["depth_path"]).read_bytes(), dtype="<f4")
        if depth.size != h * w:
            raise DatasetError(f"view {i}: depth size mismatch")
        depths.append(depth.reshape(h, w).copy())
        raw = np.frombuffer((root / view["masklabel_path"]).read_bytes(), dtype=np.uint8)
        if k:
            planes = np.unpackbits(raw.reshape(k, -1), axis=-1)[:, :h * w]
            planes = planes.reshape(k, h, w).astype(bool)
        else:
            planes = np.zeros((0, h, w), dtype=bool)
        records = [MaskRecord.from_dict(d) for d in meta["masks"]]
        masksets.append(ViewMaskSet(width=w, height=h, planes=planes, records=records))

    points = labels = None
    if "points" in manifest:
        points = np.frombuffer((root / manifest["points"]["path"]).read_bytes(),
                               dtype="<f4").reshape(-1, 3).astype(np.float64)
    if "labels" in manifest:
        labels = np.frombuffer((root / manifest["labels"]["path"]).read_bytes(),
                               dtype="<i4").reshape(points.shape[0] if points is not None else -1,
                                                    manifest["labels"]["levels"]).copy()
    return Dataset(
        cameras=cameras, depths=depths, masksets=masksets,
        camera_extent=float(manifest["camera_extent"]),
        world_unit=manifest.get("world_unit", "unknown"),
        points=points, labels=labels,
    )
