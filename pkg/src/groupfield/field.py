"""Scale-conditioned affinity field: multiresolution hash encoding + MLP.

query(x, s) maps a 3D point and a world-unit size to a unit-norm feature
vector; the affinity of two points at a size is the negative L2 distance
of their features. Ray features use deferred rendering: hash features are
volumetrically averaged once per ray, normalized, and only then pushed
through the MLP, so multi-scale queries of one ray cost one extra MLP
call each.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .scales import ScaleNormalizer

CHECKPOINT_MAGIC = b"GFLD"
CHECKPOINT_VERSION = 1

_HASH_PRIMES = (1, 2654435761, 805459861)


class FieldError(Exception):
    pass


@dataclass
class FieldConfig:
    n_levels: int = 24
    features_per_level: int = 2
    log2_hashmap_size: int = 19
    base_resolution: int = 16
    max_resolution: int = 2048
    mlp_layers: int = 4
    mlp_width: int = 256
    out_dim: int = 256
    aabb_min: tuple = (-1.0, -1.0, -1.0)
    aabb_max: tuple = (1.0, 1.0, 1.0)
    scale_conditioning: bool = True

    def __post_init__(self):
        for name in ("n_levels", "features_per_level", "log2_hashmap_size",
                     "base_resolution", "max_resolution", "mlp_layers", "mlp_width"):
            if getattr(self, name) <= 0:
                raise FieldError(f"{name} must be positive")
        if self.out_dim < 2:
            raise FieldError("out_dim must be >= 2")

    @property
    def hash_dim(self) -> int:
        return self.n_levels * self.features_per_level

    def level_resolutions(self) -> np.ndarray:
        if self.n_levels == 1:
            return np.array([self.base_resolution], dtype=np.int64)
        b = np.exp((np.log(self.max_resolution) - np.log(self.base_resolution))
                   / (self.n_levels - 1))
        return np.floor(self.base_resolution * b ** np.arange(self.n_levels)).astype(np.int64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aabb_min"] = list(self.aabb_min)
        d["aabb_max"] = list(self.aabb_max)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FieldConfig":
        d = dict(d)
        d["aabb_min"] = tuple(d["aabb_min"])
        d["aabb_max"] = tuple(d["aabb_max"])
        return cls(**d)


class HashEncoding(nn.Module):
    """Instant-ngp style multiresolution hash grid with trilinear interpolation."""

    def __init__(self, config: FieldConfig):
        super().__init__()
        self.config = config
        table_size = 2 ** config.log2_hashmap_size
        self.table_size = table_size
        self.tables = nn.Parameter(
            torch.empty(config.n_levels, table_size, config.features_per_level))
        nn.init.uniform_(self.tables, -1e-4, 1e-4)
        self.register_buffer("resolutions",
                             torch.from_numpy(config.level_resolutions()))
        self.register_buffer("aabb_min", torch.tensor(config.aabb_min, dtype=torch.float64))
        self.register_buffer("aabb_max", torch.tensor(config.aabb_max, dtype=torch.float64))
        offs = torch.tensor([[i >> 2 & 1, i >> 1 & 1, i & 1] for i in range(8)])
        self.register_buffer("corner_offsets", offs)
        self.register_buffer("primes", torch.tensor(_HASH_PRIMES, dtype=torch.int64))

    def normalize_positions(self, x: torch.Tensor) -> torch.Tensor:
        lo = self.aabb_min.to(x.dtype)
        hi = self.aabb_max.to(x.dtype)
        return torch.clamp((x - lo) / (hi - lo), 0.0, 1.0)

    def in_bounds(self, x: torch.Tensor) -> torch.Tensor:
        lo = self.aabb_min.to(x.dtype)
        hi = self.aabb_max.to(x.dtype)
        return ((x >= lo) & (x <= hi)).all(dim=-1)

    def _hash(self, coords: torch.Tensor) -> torch.Tensor:
        h = coords[..., 0] * self.primes[0]
        h = h ^ (coords[..., 1] * self.primes[1])
        h = h ^ (coords[..., 2] * self.primes[2])
        return h % self.table_size

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """x: (N, 3) world positions -> (N, n_levels * features_per_level)."""
        x01 = self.normalize_positions(x)
        outputs = []
        for lv in range(self.config.n_levels):
            res = self.resolutions[lv]
            scaled = x01 * res.to(x01.dtype)
            base = torch.floor(scaled).to(torch.int64)
            frac = scaled - base.to(scaled.dtype)
            corners = base[:, None, :] + self.corner_offsets[None, :, :]  # (N, 8, 3)
            idx = self._hash(corners)
            vals = self.tables[lv][idx]                                   # (N, 8, F)
            w = torch.where(self.corner_offsets[None, :, :].bool(),
                            frac[:, None, :], 1.0 - frac[:, None, :]).prod(dim=-1)
            outputs.append((w[..., None] * vals).sum(dim=1))
        return torch.cat(outputs, dim=-1)


def unit_normalize(f: torch.Tensor, dim: int = -1) -> torch.Tensor:
    return f / f.norm(dim=dim, keepdim=True).clamp_min(1e-12)


class AffinityField(nn.Module):
    """The full model: hash tables, MLP, and a frozen scale normalizer."""

    def __init__(self, config: FieldConfig, normalizer: ScaleNormalizer):
        super().__init__()
        self.config = config
        self.normalizer = normalizer
        self.encoding = HashEncoding(config)
        layers = []
        in_dim = config.hash_dim + 1
        for i in range(config.mlp_layers):
            out = config.out_dim if i == config.mlp_layers - 1 else config.mlp_width
            layers.append(nn.Linear(in_dim, out))
            if i != config.mlp_layers - 1:
                layers.append(nn.ReLU())
            in_dim = out
        self.mlp = nn.Sequential(*layers)

    @property
    def dtype(self) -> torch.dtype:
        return self.encoding.tables.dtype

    def _as_positions(self, x) -> torch.Tensor:
        t = torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=self.dtype)
        t = t.reshape(-1, 3)
        if not torch.isfinite(t).all():
            raise FieldError("non-finite positions")
        return t

    def scale_input(self, s, n: int, normalized: bool = False) -> torch.Tensor:
        """Normalized scalar fed to the MLP alongside the hash feature.

        ``normalized=True`` means s is already a quantile rank in [0, 1]
        (the units the decomposition sweep and the viewer slider use) and
        skips the transform.
        """
        s = np.broadcast_to(np.asarray(s, dtype=np.float64), (n,))
        if not np.isfinite(s).all() or (s < 0).any():
            raise FieldError("scales must be finite and >= 0")
        if not self.config.scale_conditioning:
            return torch.zeros(n, 1, dtype=self.dtype)
        z = np.clip(s, 0.0, 1.0) if normalized else self.normalizer.transform(s)
        return torch.as_tensor(z, dtype=self.dtype).reshape(n, 1)

    def mlp_from_hash(self, hash_unit: torch.Tensor, z: torch.Tensor) -> torch.Tensor:
        """MLP on an already unit-normalized hash feature; returns unit features."""
        return unit_normalize(self.mlp(torch.cat([hash_unit, z], dim=-1)))

    def query(self, x, s, normalized: bool = False) -> torch.Tensor:
        """Unit feature of point(s) x at world-unit size s. (N, out_dim)."""
        pos = self._as_positions(x)
        h = unit_normalize(self.encoding(pos))
        return self.mlp_from_hash(h, self.scale_input(s, pos.shape[0], normalized))

    def query_numpy(self, x, s, normalized: bool = False) -> np.ndarray:
        with torch.no_grad():
            return self.query(x, s, normalized).cpu().numpy()

    def render_hash(self, positions, weights) -> torch.Tensor:
        """Volumetric average of hash features along one ray, unit-normalized."""
        pos = self._as_positions(positions)
        w = torch.as_tensor(np.asarray(weights, dtype=np.float64), dtype=self.dtype).reshape(-1)
        if w.numel() != pos.shape[0]:
            raise FieldError("weights/positions length mismatch")
        if (w < 0).any() or w.sum() <= 0:
            raise FieldError("ray weights must be nonnegative with positive sum")
        if w.sum() > 1.0 + 1e-6:
            raise FieldError("ray weights must sum to at most 1")
        h = self.encoding(pos)
        rendered = (w[:, None] * h).sum(dim=0, keepdim=True)
        return unit_normalize(rendered)

    def render_ray(self, positions, weights, s) -> torch.Tensor:
        """Deferred ray rendering: one MLP evaluation per (ray, scale)."""
        h = self.render_hash(positions, weights)
        return self.mlp_from_hash(h, self.scale_input(s, 1))

    def affinity(self, x1, x2, s) -> float:
        with torch.no_grad():
            f1 = self.query(x1, s)
            f2 = self.query(x2, s)
            return -float((f1 - f2).norm(dim=-1))


def save_checkpoint(model: AffinityField, path) -> None:
    """Versioned blob: magic, u32 header length, JSON header, raw tensors."""
    state = model.state_dict()
    tensors = []
    blob = io.BytesIO()
    for name, t in state.items():
        arr = t.detach().cpu().numpy()
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
        blob.write(np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<")).tobytes())
    header = json.dumps({
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "normalizer": model.normalizer.to_dict(),
        "tensors": tensors,
    }, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(blob.getvalue())


def load_checkpoint(path) -> AffinityField:
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise FieldError(f"{path} is not a field checkpoint")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        if header["version"] != CHECKPOINT_VERSION:
            raise FieldError(f"unsupported checkpoint version {header['version']}")
        model = AffinityField(FieldConfig.from_dict(header["config"]),
                              ScaleNormalizer.from_dict(header["normalizer"]))
        state = {}
        for meta in header["tensors"]:
            dt = np.dtype(meta["dtype"]).newbyteorder("<")
            n = int(np.prod(meta["shape"])) if meta["shape"] else 1
            arr = np.frombuffer(fh.read(n * dt.itemsize), dtype=dt)
            state[meta["name"]] = torch.from_numpy(
                arr.reshape(meta["shape"]).copy())
        # aabb buffers are always f64; learned tensors decide the precision
        if state["encoding.tables"].dtype == torch.float64:
            model = model.double()
        model.load_state_dict(state)
    return model
