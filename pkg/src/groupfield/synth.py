"""Synthetic hierarchical scenes: nested point groups, posed cameras,
depth maps, and deliberately view-inconsistent multi-level 2D masks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, MaskRecord, ViewMaskSet, DEPTH_SENTINEL
from .geometry import Camera, camera_extent, look_at


class SynthError(Exception):
    pass


@dataclass
class HierSpec:
    """Recipe for a nested group hierarchy.

    ``counts[k]`` children per level-k parent, ``spreads[k]`` the spatial
    extent (diameter, world units) a level-k group must fit inside.
    """

    counts: list[int]
    spreads: list[float]
    points_per_leaf: int = 60
    seed: int = 0
    separation: float | list[float] = 1.3  # sibling center distance, in child spreads

    def __post_init__(self):
        if len(self.counts) != len(self.spreads) or not self.counts:
            raise SynthError("counts and spreads must be same nonempty length")
        if any(c < 1 for c in self.counts):
            raise SynthError("counts must be >= 1")
        for a, b in zip(self.spreads, self.spreads[1:]):
            if b >= a:
                raise SynthError(
                    f"child spread {b} must be strictly smaller than parent spread {a}")
        if self.points_per_leaf < 1:
            raise SynthError("points_per_leaf must be >= 1")
        seps = self.separation if isinstance(self.separation, list) \
            else [self.separation] * max(self.levels - 1, 1)
        if len(seps) != max(self.levels - 1, 1):
            raise SynthError("need one separation per non-root level")
        if any(s < 1.0 for s in seps):
            raise SynthError("separation below 1 lets sibling groups overlap")

    def separation_at(self, level: int) -> float:
        """Separation factor used when placing children at this level (>= 1)."""
        if isinstance(self.separation, list):
            return self.separation[level - 1]
        return self.separation

    @property
    def levels(self) -> int:
        return len(self.counts)


@dataclass
class SyntheticScene:
    points: np.ndarray          # (N, 3) float64
    labels: np.ndarray          # (N, levels) int32, global group id per level
    cameras: list[Camera]
    camera_extent: float
    seed: int
    spec: HierSpec

    def groups_at_level(self, level: int) -> dict[int, np.ndarray]:
        """Map group id -> sorted point index array at one hierarchy level."""
        out = {}
        for gid in np.unique(self.labels[:, level]):
            out[int(gid)] = np.nonzero(self.labels[:, level] == gid)[0]
        return out


def _sample_ball(rng, n, radius):
    # uniform in a ball via normalized gaussian directions and r ~ U^(1/3)
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / 3.0)
    return d * r[:, None]


def _place_separated(rng, n, radius, min_sep, tries=200):
    """n points in a ball with pairwise distance >= min_sep.

    Rejection sampling first; near the packing limit it rarely succeeds,
    so fall back to pairwise repulsion from a random start, which reaches
    the max-separation configuration (e.g. a regular simplex) if one fits.
    """
    for _ in range(tries):
        placed = np.empty((0, 3))
        for _ in range(n):
            ok = False
            for _ in range(tries):
                cand = _sample_ball(rng, 1, radius)
                if placed.size == 0 or \
                        np.linalg.norm(placed - cand, axis=1).min() >= min_sep:
                    placed = np.concatenate([placed, cand])
                    ok = True
                    break
            if not ok:
                break
        if placed.shape[0] == n:
            return placed
    p = _sample_ball(rng, n, radius)
    for _ in range(500):
        diff = p[:, None, :] - p[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= min_sep:
            return p
        # push each point away from its neighbors, then clamp to the ball
        force = (diff / (dist[..., None] ** 3 + 1e-12)).sum(axis=1)
        p = p + 0.05 * radius * force / (np.linalg.norm(force, axis=1, keepdims=True) + 1e-12)
        norms = np.linalg.norm(p, axis=1, keepdims=True)
        p = np.where(norms > radius, p * radius / norms, p)
    raise SynthError(
        f"cannot place {n} children {min_sep:.3g} apart in radius {radius:.3g}; "
        "spreads leave too little slack")


def generate_scene(spec: HierSpec, n_cameras: int = 20,
                   resolution: int = 64,
                   target_extent: float = 2.0) -> SyntheticScene:
    """Build a scene with spatially compact nested groups.

    Top-level groups sit on a jittered grid with pitch 3x their spread,
    so distinct top groups are separated by more than any intra-group
    diameter. The whole world (points and camera centers) is rescaled so
    the max pairwise camera distance equals ``target_extent``, keeping
    mask sizes commensurate across scene recipes. Determinism: one RNG
    seeded from spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    s0 = spec.spreads[0]
    pitch = 3.0 * s0
    n0 = spec.counts[0]
    side = int(np.ceil(n0 ** (1.0 / 3.0)))
    cells = np.stack(np.meshgrid(*[np.arange(side)] * 3, indexing="ij"), -1).reshape(-1, 3)
    chosen = rng.permutation(len(cells))[:n0]
    centers0 = (cells[chosen] - (side - 1) / 2.0) * pitch
    centers0 = centers0 + rng.uniform(-0.25 * s0, 0.25 * s0, centers0.shape)

    # recursively place child centers inside the parent's slack radius
    centers = [centers0]
    for lvl in range(1, spec.levels):
        parent_centers = centers[-1]
        slack = (spec.spreads[lvl - 1] - spec.spreads[lvl]) / 2.0
        min_sep = spec.separation_at(lvl) * spec.spreads[lvl]
        kids = []
        for pc in parent_centers:
            kids.append(pc + _place_separated(rng, spec.counts[lvl], slack, min_sep))
        centers.append(np.concatenate(kids, axis=0))

    leaf_centers = centers[-1]
    n_leaves = leaf_centers.shape[0]
    pts = []
    for lc in leaf_centers:
        pts.append(lc + _sample_ball(rng, spec.points_per_leaf, spec.spreads[-1] / 2.0))
    points = np.concatenate(pts, axis=0)

    # label path per point: leaf index determines every ancestor id
    leaf_idx = np.repeat(np.arange(n_leaves), spec.points_per_leaf)
    labels = np.empty((points.shape[0], spec.levels), dtype=np.int32)
    idx = leaf_idx
    for lvl in reversed(range(spec.levels)):
        labels[:, lvl] = idx
        idx = idx // spec.counts[lvl] if lvl > 0 else idx

    cameras = _place_cameras(points, n_cameras, resolution, rng)
    if target_extent is not None:
        factor = target_extent / camera_extent(cameras)
        points = points * factor
        for cam in cameras:
            cam.translation = cam.translation * factor
    ext = camera_extent(cameras)
    scene = SyntheticScene(points=points, labels=labels, cameras=cameras,
                           camera_extent=ext, seed=spec.seed, spec=spec)
    for ci, cam in enumerate(cameras):
        uv, z = cam.project(points)
        vis = (z > 0) & (uv[:, 0] >= 0) & (uv[:, 0] < cam.width) & \
              (uv[:, 1] >= 0) & (uv[:, 1] < cam.height)
        if not vis.any():
            raise SynthError(f"camera {ci} sees no points")
    return scene


def _place_cameras(points, n_cameras, resolution, rng):
    scene_radius = float(np.linalg.norm(points, axis=1).max())
    dist = 2.5 * scene_radius
    half_fov_tan = 1.15 * scene_radius / (dist - scene_radius)
    focal = 0.5 * resolution / half_fov_tan
    cameras = []
    for i in range(n_cameras):
        az = 2.0 * np.pi * i / n_cameras
        el = np.deg2rad(20.0 + 30.0 * ((i % 4) / 3.0))
        eye = dist * np.array([np.cos(az) * np.cos(el),
                               np.sin(az) * np.cos(el),
                               np.sin(el)])
        rot, trans = look_at(eye, np.zeros(3))
        cameras.append(Camera(fx=focal, fy=focal,
                              cx=resolution / 2.0, cy=resolution / 2.0,
                              width=resolution, height=resolution,
                              rotation=rot, translation=trans))
    return cameras


@dataclass
class RenderOptions:
    splat_radius: int = 2
    level_mix: str = "all"        # "all" | "random" (random nonempty level subset)
    drop_prob: float = 0.0
    merge_prob: float = 0.0
    corrupt_rate: float = 0.1
    min_mask_pixels: int = 8


def rasterize(scene: SyntheticScene, cam_idx: int, splat_radius: int = 2):
    """Splat points as discs; nearest point wins per pixel.

    Returns (depth (H,W) float32 with +inf sentinel, winner (H,W) int64
    point index with -1 sentinel).
    """
    cam = scene.cameras[cam_idx]
    uv, z = cam.project(scene.points)
    front = z > 0
    u = np.round(uv[:, 0]).astype(np.int64)
    v = np.round(uv[:, 1]).astype(np.int64)
    r = splat_radius
    keep = front & (u >= -r) & (u < cam.width + r) & (v >= -r) & (v < cam.height + r)
    pidx = np.nonzero(keep)[0]

    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    disc = dx * dx + dy * dy <= r * r
    offs = np.stack([dx[disc], dy[disc]], axis=1)

    uu = (u[pidx, None] + offs[None, :, 0]).ravel()
    vv = (v[pidx, None] + offs[None, :, 1]).ravel()
    pp = np.repeat(pidx, len(offs))
    inside = (uu >= 0) & (uu < cam.width) & (vv >= 0) & (vv < cam.height)
    uu, vv, pp = uu[inside], vv[inside], pp[inside]
    flat = vv * cam.width + uu
    zz = z[pp]

    order = np.lexsort((pp, zz, flat))
    flat, zz, pp = flat[order], zz[order], pp[order]
    first = np.ones(flat.size, dtype=bool)
    first[1:] = flat[1:] != flat[:-1]

    depth = np.full(cam.height * cam.width, DEPTH_SENTINEL, dtype=np.float32)
    winner = np.full(cam.height * cam.width, -1, dtype=np.int64)
    depth[flat[first]] = zz[first].astype(np.float32)
    winner[flat[first]] = pp[first]
    return depth.reshape(cam.height, cam.width), winner.reshape(cam.height, cam.width)


def render_view(scene: SyntheticScene, cam_idx: int,
                options: RenderOptions | None = None):
    """Render one view to (depth, ViewMaskSet) with controlled mask corruption."""
    if cam_idx < 0 or cam_idx >= len(scene.cameras):
        raise SynthError(f"camera index {cam_idx} out of range")
    options = options or RenderOptions()
    rng = np.random.default_rng([scene.seed, 7919, cam_idx])
    depth, winner = rasterize(scene, cam_idx, options.splat_radius)
    if (winner < 0).all():
        raise SynthError(f"camera {cam_idx} sees no points")

    levels = list(range(scene.spec.levels))
    if options.level_mix == "random":
        keep_lv = rng.random(len(levels)) < 0.7
        if not keep_lv.any():
            keep_lv[rng.integers(len(levels))] = True
        levels = [lv for lv, k in zip(levels, keep_lv) if k]
    elif options.level_mix != "all":
        raise SynthError(f"unknown level_mix {options.level_mix!r}")

    covered = winner >= 0
    planes, meta = [], []
    for lv in levels:
        lab_map = np.full(winner.shape, -1, dtype=np.int64)
        lab_map[covered] = scene.labels[winner[covered], lv]
        for gid in np.unique(lab_map[covered]):
            mask = lab_map == gid
            if mask.sum() < options.min_mask_pixels:
                continue
            if rng.random() < options.drop_prob:
                continue
            corrupted = False
            if rng.random() < options.merge_prob or rng.random() < options.corrupt_rate:
                mask, corrupted = _corrupt_mask(scene, lv, int(gid), mask, lab_map,
                                                winner, rng)
                if mask.sum() < options.min_mask_pixels:
                    continue
            planes.append(mask)
            meta.append((lv, int(gid), corrupted))

    if not planes:
        # always emit at least the coarsest full groups, uncorrupted
        lab_map = np.full(winner.shape, -1, dtype=np.int64)
        lab_map[covered] = scene.labels[winner[covered], 0]
        for gid in np.unique(lab_map[covered]):
            mask = lab_map == gid
            if mask.sum() >= 1:
                planes.append(mask)
                meta.append((0, int(gid), False))

    records = [
        MaskRecord(mask_id=i + 1, pixel_area=int(planes[i].sum()),
                   level=lv, group=gid, corrupted=corr)
        for i, (lv, gid, corr) in enumerate(meta)
    ]
    h, w = depth.shape
    maskset = ViewMaskSet(width=w, height=h,
                          planes=np.stack(planes), records=records)
    return depth, maskset


def _corrupt_mask(scene, level, gid, mask, lab_map, winner, rng):
    """Merge with a sibling when one is visible, else drop a child subgroup."""
    if level > 0:
        parent = gid // scene.spec.counts[level]
        sib_ids = [g for g in np.unique(lab_map[lab_map >= 0])
                   if g != gid and g // scene.spec.counts[level] == parent]
    else:
        sib_ids = [g for g in np.unique(lab_map[lab_map >= 0]) if g != gid]
    if sib_ids:
        sib = sib_ids[rng.integers(len(sib_ids))]
        return mask | (lab_map == sib), True
    if level + 1 < scene.spec.levels:
        covered = winner >= 0
        child_map = np.full(winner.shape, -1, dtype=np.int64)
        child_map[covered] = scene.labels[winner[covered], level + 1]
        kids = np.unique(child_map[mask & covered])
        if len(kids) > 1:
            drop = kids[rng.integers(len(kids))]
            return mask & (child_map != drop), True
    return mask, False


def scene_to_dataset(scene: SyntheticScene,
                     options: RenderOptions | None = None) -> Dataset:
    """Render every view and assemble an in-memory dataset."""
    depths, masksets = [], []
    for i in range(len(scene.cameras)):
        d, m = render_view(scene, i, options)
        depths.append(d)
        masksets.append(m)
    return Dataset(cameras=scene.cameras, depths=depths, masksets=masksets,
                   camera_extent=scene.camera_extent, world_unit="synthetic",
                   points=scene.points.astype(np.float64),
                   labels=scene.labels.copy())
