"""Build (once) and serve a small trained fixture for viewer tests.

Artifacts are cached in frontend/.fixture/ so repeated test runs skip the
training step. Run with --port to pick the listen port.
"""
import argparse
import sys
from pathlib import Path

import numpy as np
import torch
import uvicorn

from groupfield import FieldConfig, HierSpec, RenderOptions, TrainConfig, generate_scene
from groupfield.decompose import DecomposeParams, build_tree, save_tree
from groupfield.field import save_checkpoint
from groupfield.scales import assign_dataset_scales
from groupfield.service import ServiceArtifacts, create_app
from groupfield.synth import scene_to_dataset
from groupfield.training import train

FIXTURE_DIR = Path(__file__).resolve().parent.parent / ".fixture"
PARAMS = DecomposeParams()


def build_fixture() -> None:
    torch.set_num_threads(2)
    spec = HierSpec(counts=[2, 3], spreads=[0.5, 0.12], points_per_leaf=60,
                    seed=3, separation=[2.2])
    scene = generate_scene(spec, n_cameras=8, resolution=192)
    ds = scene_to_dataset(scene, RenderOptions(corrupt_rate=0.0, drop_prob=0.0,
                                               splat_radius=1))
    assign_dataset_scales(ds)
    fc = FieldConfig(n_levels=8, log2_hashmap_size=14, base_resolution=4,
                     max_resolution=192, mlp_layers=3, mlp_width=48, out_dim=24)
    model = train(ds, fc, TrainConfig(steps=800, images_per_batch=4,
                                      rays_per_image=96, seed=0, log_every=400))
    tree = build_tree(model, ds.points, PARAMS)
    FIXTURE_DIR.mkdir(exist_ok=True)
    save_checkpoint(model, FIXTURE_DIR / "model.ckpt")
    save_tree(tree, ds.points, FIXTURE_DIR / "tree.json", FIXTURE_DIR / "tree.bin")
    np.save(FIXTURE_DIR / "points.npy", ds.points)
    np.save(FIXTURE_DIR / "labels.npy", ds.labels)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--port", type=int, default=8765)
    ap.add_argument("--rebuild", action="store_true",
                    help="discard any cached fixture and retrain")
    args = ap.parse_args()

    wanted = ["model.ckpt", "tree.json", "tree.bin", "points.npy", "labels.npy"]
    if args.rebuild or not all((FIXTURE_DIR / f).exists() for f in wanted):
        print("building viewer fixture (one-time, ~30s)...", flush=True)
        build_fixture()

    artifacts = ServiceArtifacts.load(
        FIXTURE_DIR / "model.ckpt", FIXTURE_DIR / "tree.json",
        np.load(FIXTURE_DIR / "points.npy"), np.load(FIXTURE_DIR / "labels.npy"),
        PARAMS)
    print(f"fixture ready on port {args.port}", flush=True)
    uvicorn.run(create_app(artifacts), host="127.0.0.1", port=args.port,
                log_level="warning")


if __name__ == "__main__":
    sys.exit(main())
