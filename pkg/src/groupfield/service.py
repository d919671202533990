"""HTTP service exposing a trained field and group tree to the viewer.

All endpoints are read-only over immutable loaded artifacts, so
concurrent requests are safe and responses are deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .decompose import DecomposeParams, GroupTree, load_tree, multiscale_masks, select_group
from .field import AffinityField, load_checkpoint


@dataclass
class ServiceArtifacts:
    model: AffinityField
    tree: GroupTree
    positions: np.ndarray       # (N, 3) float64
    colors: np.ndarray          # (N, 3) uint8
    params: DecomposeParams

    @classmethod
    def load(cls, checkpoint_path, tree_path, positions: np.ndarray,
             labels: np.ndarray | None = None,
             params: DecomposeParams | None = None) -> "ServiceArtifacts":
        model = load_checkpoint(checkpoint_path)
        tree = load_tree(tree_path)
        return cls(model=model, tree=tree,
                   positions=np.asarray(positions, dtype=np.float64),
                   colors=_point_colors(positions, labels),
                   params=params or DecomposeParams())


def _point_colors(positions, labels) -> np.ndarray:
    n = positions.shape[0]
    if labels is not None:
        ids = np.asarray(labels)[:, -1].astype(np.int64)
    else:
        z = positions[:, 2]
        ids = np.digitize(z, np.quantile(z, np.linspace(0, 1, 17)[1:-1]))
    hues = (ids * 0.61803398875) % 1.0
    return (_hsv_to_rgb(hues, 0.65, 0.95) * 255).astype(np.uint8)


def _hsv_to_rgb(h, s, v):
    i = np.floor(h * 6).astype(int) % 6
    f = h * 6 - np.floor(h * 6)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    table = np.stack([
        np.stack([np.full_like(h, v), t, np.full_like(h, p)], -1),
        np.stack([q, np.full_like(h, v), np.full_like(h, p)], -1),
        np.stack([np.full_like(h, p), np.full_like(h, v), t], -1),
        np.stack([np.full_like(h, p), q, np.full_like(h, v)], -1),
        np.stack([t, np.full_like(h, p), np.full_like(h, v)], -1),
        np.stack([np.full_like(h, v), np.full_like(h, p), q], -1),
    ])
    return table[i, np.arange(h.size)]


class SelectRequest(BaseModel):
    click: list[float] = Field(min_length=3, max_length=3)
    scale: float = Field(ge=0)
    threshold: float = 0.9


class MultiscaleRequest(BaseModel):
    click: list[float] = Field(min_length=3, max_length=3)
    threshold: float | None = None


def create_app(artifacts: ServiceArtifacts, static_dir=None) -> FastAPI:
    app = FastAPI(title="groupfield service")

    @app.exception_handler(RequestValidationError)
    async def malformed(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    @app.get("/meta")
    def meta():
        return {
            "n_points": int(artifacts.positions.shape[0]),
            "s_max": artifacts.params.s_max,
            "scale_step": artifacts.params.scale_step,
            "threshold": artifacts.params.similarity_threshold,
            "n_nodes": len(artifacts.tree.nodes),
            "roots": artifacts.tree.roots,
        }

    @app.get("/points")
    def points():
        """count*3 little-endian f32 positions, then count*3 u8 RGB colors."""
        pos = artifacts.positions.astype("<f4").tobytes()
        col = artifacts.colors.astype(np.uint8).tobytes()
        return Response(content=pos + col, media_type="application/octet-stream",
                        headers={"X-Point-Count": str(artifacts.positions.shape[0])})

    @app.get("/tree")
    def tree():
        nodes = []
        for nid in sorted(artifacts.tree.nodes):
            n = artifacts.tree.nodes[nid]
            pts = artifacts.positions[n.indices]
            nodes.append({
                "id": n.id, "parent": n.parent, "children": n.children,
                "split_scale": n.split_scale, "count": n.count,
                "centroid": pts.mean(axis=0).tolist(),
                "bbox": [pts.min(axis=0).tolist(), pts.max(axis=0).tolist()],
            })
        return {"roots": artifacts.tree.roots, "nodes": nodes}

    @app.get("/node/{node_id}")
    def node(node_id: int):
        if node_id not in artifacts.tree.nodes:
            return JSONResponse(status_code=404,
                                content={"detail": f"unknown node {node_id}"})
        n = artifacts.tree.nodes[node_id]
        return {"id": n.id, "indices": n.indices.tolist()}

    @app.post("/select")
    def select(req: SelectRequest):
        idx = select_group(artifacts.model, artifacts.positions, req.click,
                           req.scale, req.threshold)
        return {"indices": idx.tolist()}

    @app.post("/multiscale")
    def multiscale(req: MultiscaleRequest):
        masks = multiscale_masks(artifacts.model, artifacts.positions, req.click,
                                 artifacts.params, threshold=req.threshold)
        return {"masks": [{"scale": s, "indices": sel.tolist()}
                          for s, sel in masks]}

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="viewer")
    return app
