"""Contrastive training of the affinity field from multi-view masks.

Each step samples N images and M pixels per image; every pixel picks one
mask from its membership list with probability inversely proportional to
log pixel area, coordinated within the image by a shared CDF position so
pixels of the same group pick the same mask. Same-mask pairs are pulled
together, different-mask pairs pushed apart by a margin, and same-mask
pairs are additionally pulled at a randomly sampled larger size so small
groups persist at coarser granularities.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn.functional as F

from .dataset import Dataset
from .field import AffinityField, FieldConfig, unit_normalize
from .scales import fit_normalizer, SCALE_CAP_FACTOR


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    steps: int = 2000
    images_per_batch: int = 16
    rays_per_image: int = 256
    margin: float = 1.0
    lr_hash: float = 1e-2
    lr_mlp: float = 1e-3
    weight_pull: float = 1.0
    weight_push: float = 1.0
    weight_containment: float = 1.0
    densified_supervision: bool = True   # scale interval sampling + containment pull
    pair_cap: int | None = None          # max pairs per image per category
    normalize_pairs: bool = True
    seed: int = 0
    single_thread: bool = True
    sample_retry_cap: int = 20
    log_every: int = 50

    def __post_init__(self):
        if self.margin <= 0:
            raise TrainError("margin must be > 0")
        if self.images_per_batch < 1 or self.rays_per_image < 2:
            raise TrainError("need >= 1 image and >= 2 rays per image")

    @property
    def batch_size(self) -> int:
        return self.images_per_batch * self.rays_per_image


def pull_loss(f_a: torch.Tensor, f_b: torch.Tensor) -> torch.Tensor:
    """L2 distance between two features; in [0, 2] for unit features."""
    return (f_a - f_b).norm(dim=-1)


def push_loss(f_a: torch.Tensor, f_b: torch.Tensor, margin: float) -> torch.Tensor:
    """Hinge on the margin: zero once features are at least ``margin`` apart."""
    return F.relu(margin - (f_a - f_b).norm(dim=-1))


def densify_scale(s_mask: float, s_prev: float | None, rng) -> float:
    """Supervision size drawn uniformly between adjacent mask sizes.

    ``s_prev`` is the next-smaller mask size at the pixel (None when the
    chosen mask is the smallest there, giving the interval [0, s_mask]).
    """
    lo = 0.0 if s_prev is None else float(s_prev)
    if lo >= s_mask:
        return float(s_mask)
    return float(lo + rng.random() * (s_mask - lo))


@dataclass
class TrainBatch:
    """Flattened coordinated samples; ``image`` slices rays per source image."""

    image: np.ndarray       # (B,) index into the sampled image list
    positions: np.ndarray   # (B, 3) world points (deprojected pixel centers)
    mask_key: np.ndarray    # (B,) pair key, unique per (image, mask)
    s_train: np.ndarray     # (B,) supervision size
    s_containment: np.ndarray  # (B,) larger size for the containment pull

    @property
    def size(self) -> int:
        return self.image.size


class BatchSampler:
    """Precomputes per-view sampling tables from a dataset with assigned scales."""

    def __init__(self, dataset: Dataset):
        self.s_cap = SCALE_CAP_FACTOR * dataset.camera_extent
        self._views = []
        for vi in range(dataset.n_views):
            ms = dataset.masksets[vi]
            if any(r.scale3d is None for r in ms.records):
                raise TrainError(f"view {vi} has masks without assigned scales")
            mem = dataset.membership(vi)
            depth = dataset.depths[vi].reshape(-1)
            counts = np.diff(mem.indptr)
            valid = np.nonzero((counts > 0) & np.isfinite(depth))[0]
            if valid.size == 0:
                continue
            kmax = int(counts[valid].max())
            scales = np.array([r.scale3d for r in ms.records])
            areas = np.array([r.pixel_area for r in ms.records], dtype=np.float64)
            weights = 1.0 / np.log1p(areas)

            mem_pad = np.full((valid.size, kmax), -1, dtype=np.int64)
            cdf_pad = np.full((valid.size, kmax), 2.0)
            for row, p in enumerate(valid):
                members = mem.pixel_masks(p)
                w = weights[members]
                cdf = np.cumsum(w) / w.sum()
                cdf[-1] = 1.0
                mem_pad[row, :members.size] = members
                cdf_pad[row, :members.size] = cdf

            cam = dataset.cameras[vi]
            u = (valid % cam.width).astype(np.float64)
            v = (valid // cam.width).astype(np.float64)
            pts = cam.deproject(u, v, depth[valid].astype(np.float64))
            self._views.append({
                "valid": valid, "mem_pad": mem_pad, "cdf_pad": cdf_pad,
                "scales": scales, "points": pts, "n_masks": len(ms.records),
            })
        if not self._views:
            raise TrainError("dataset has no sampleable pixels")

    @property
    def n_views(self) -> int:
        return len(self._views)

    def sample(self, config: TrainConfig, rng) -> TrainBatch:
        n = len(self._views)
        views = rng.choice(n, config.images_per_batch,
                           replace=config.images_per_batch > n)
        image, positions, mask_key, s_train, s_cont = [], [], [], [], []
        for bi, vi in enumerate(views):
            vw = self._views[vi]
            u_img = rng.random()
            rows = rng.integers(0, vw["valid"].size, config.rays_per_image)
            rank = np.argmax(vw["cdf_pad"][rows] >= u_img, axis=1)
            chosen = vw["mem_pad"][rows, rank]
            prev = np.where(rank > 0, vw["mem_pad"][rows, np.maximum(rank - 1, 0)], -1)
            s_k = vw["scales"][chosen]
            lo = np.where(prev >= 0, vw["scales"][np.maximum(prev, 0)], 0.0)
            lo = np.minimum(lo, s_k)
            if config.densified_supervision:
                # one interval position per (image, mask): coordinated pairs
                # with matching intervals share the exact supervision size
                t = rng.random(vw["n_masks"])[chosen]
                st = lo + t * (s_k - lo)
                v2 = rng.random(vw["n_masks"])[chosen]
                sc = st + v2 * np.maximum(self.s_cap - st, 0.0)
            else:
                st = s_k
                sc = st
            image.append(np.full(config.rays_per_image, bi))
            positions.append(vw["points"][rows])
            mask_key.append(vi * 100_000 + chosen)
            s_train.append(st)
            s_cont.append(sc)
        return TrainBatch(
            image=np.concatenate(image),
            positions=np.concatenate(positions),
            mask_key=np.concatenate(mask_key),
            s_train=np.concatenate(s_train),
            s_containment=np.concatenate(s_cont),
        )


def _pair_indices(mask_key: np.ndarray):
    n = mask_key.size
    iu, ju = np.triu_indices(n, k=1)
    same = mask_key[iu] == mask_key[ju]
    return iu[same], ju[same], iu[~same], ju[~same]


def _maybe_cap(i, j, cap, rng):
    if cap is not None and i.size > cap:
        sel = rng.choice(i.size, cap, replace=False)
        return i[sel], j[sel]
    return i, j


def batch_losses(model: AffinityField, batch: TrainBatch, config: TrainConfig,
                 rng=None) -> dict[str, torch.Tensor]:
    """Pull/push/containment sums (and pair counts) for one batch.

    Pairs are enumerated within each image only; the containment term
    pulls same-mask pairs at their larger sampled size and skips pairs
    already at the size cap.
    """
    rng = rng or np.random.default_rng(0)
    h = unit_normalize(model.encoding(model._as_positions(batch.positions)))
    f1 = model.mlp_from_hash(h, model.scale_input(batch.s_train, batch.size))
    use_containment = config.densified_supervision and config.weight_containment > 0
    if use_containment:
        f2 = model.mlp_from_hash(h, model.scale_input(batch.s_containment, batch.size))

    zero = f1.new_zeros(())
    pull = zero.clone()
    push = zero.clone()
    cont = zero.clone()
    n_pull = n_push = n_cont = 0
    for bi in np.unique(batch.image):
        idx = np.nonzero(batch.image == bi)[0]
        si, sj, di, dj = _pair_indices(batch.mask_key[idx])
        si, sj = _maybe_cap(si, sj, config.pair_cap, rng)
        di, dj = _maybe_cap(di, dj, config.pair_cap, rng)
        fi = f1[idx]
        if si.size:
            pull = pull + pull_loss(fi[si], fi[sj]).sum()
            n_pull += si.size
        if di.size:
            push = push + push_loss(fi[di], fi[dj], config.margin).sum()
            n_push += di.size
        if use_containment and si.size:
            grows = batch.s_containment[idx] > batch.s_train[idx]
            live = grows[si] & grows[sj]
            if live.any():
                fc = f2[idx]
                cont = cont + pull_loss(fc[si[live]], fc[sj[live]]).sum()
                n_cont += int(live.sum())
    counts = {"pull": max(n_pull, 1), "push": max(n_push, 1), "containment": max(n_cont, 1)}
    if config.normalize_pairs:
        pull, push, cont = pull / counts["pull"], push / counts["push"], cont / counts["containment"]
    total = (config.weight_pull * pull + config.weight_push * push
             + config.weight_containment * cont)
    return {"pull": pull, "push": push, "containment": cont, "total": total,
            "n_pull": n_pull, "n_push": n_push, "n_containment": n_cont}


def containment_loss(model: AffinityField, batch: TrainBatch,
                     config: TrainConfig) -> torch.Tensor:
    """Standalone containment term (sum over live same-mask pairs)."""
    cfg = TrainConfig(**{**asdict(config), "normalize_pairs": False})
    return batch_losses(model, batch, cfg)["containment"]


def train(dataset: Dataset, field_config: FieldConfig | None = None,
          config: TrainConfig | None = None, metrics_path=None) -> AffinityField:
    """Optimize a fresh field on the dataset; returns the trained model."""
    config = config or TrainConfig()
    if config.single_thread:
        torch.set_num_threads(1)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)

    if field_config is None:
        field_config = FieldConfig()
    if dataset.points is not None:
        lo = dataset.points.min(axis=0) - 0.05
        hi = dataset.points.max(axis=0) + 0.05
        field_config.aabb_min = tuple(float(x) for x in lo)
        field_config.aabb_max = tuple(float(x) for x in hi)
    normalizer = fit_normalizer(dataset.all_scales(),
                                s_cap=SCALE_CAP_FACTOR * dataset.camera_extent)
    model = AffinityField(field_config, normalizer)
    sampler = BatchSampler(dataset)

    opt = torch.optim.Adam([
        {"params": model.encoding.parameters(), "lr": config.lr_hash},
        {"params": model.mlp.parameters(), "lr": config.lr_mlp},
    ])
    log_fh = open(metrics_path, "w") if metrics_path else None
    t0 = time.monotonic()
    try:
        for step in range(config.steps):
            batch = sampler.sample(config, rng)
            losses = batch_losses(model, batch, config, rng)
            total = losses["total"]
            if not torch.isfinite(total):
                raise TrainError(
                    f"non-finite loss at step {step}: "
                    f"pull={float(losses['pull'].detach())} "
                    f"push={float(losses['push'].detach())} "
                    f"containment={float(losses['containment'].detach())}")
            opt.zero_grad()
            total.backward()
            opt.step()
            if log_fh and (step % config.log_every == 0 or step == config.steps - 1):
                log_fh.write(json.dumps({
                    "step": step,
                    "total": float(total.detach()),
                    "pull": float(losses["pull"].detach()),
                    "push": float(losses["push"].detach()),
                    "containment": float(losses["containment"].detach()),
                    "elapsed_s": time.monotonic() - t0,
                }) + "\n")
    finally:
        if log_fh:
            log_fh.close()
    return model
