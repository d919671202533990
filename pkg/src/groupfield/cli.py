"""Command-line pipeline: synth -> scales -> train -> decompose -> eval,
plus a local HTTP service for the browser viewer."""
from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .dataset import read_dataset, write_dataset
from .decompose import DecomposeParams, build_tree, load_tree, save_tree
from .density import ClusterParams
from .evaluation import evaluate
from .field import FieldConfig, load_checkpoint, save_checkpoint
from .scales import assign_dataset_scales
from .synth import HierSpec, RenderOptions, generate_scene, scene_to_dataset
from .training import TrainConfig, train

log = logging.getLogger("groupfield")


def _setup_logging():
    logging.basicConfig(level=os.environ.get("GROUPFIELD_LOG", "INFO"),
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


@click.group()
@click.version_option(__version__)
def main():
    """Scale-conditioned affinity fields and hierarchical decomposition."""
    _setup_logging()


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--counts", default="4,3,3", show_default=True,
              help="children per hierarchy level, comma separated")
@click.option("--spreads", default="0.5,0.17,0.055", show_default=True)
@click.option("--points-per-leaf", default=60, show_default=True)
@click.option("--views", default=20, show_default=True)
@click.option("--resolution", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--corrupt-rate", default=0.1, show_default=True)
@click.option("--drop-prob", default=0.3, show_default=True)
@click.option("--merge-prob", default=0.1, show_default=True)
def synth(out, counts, spreads, points_per_leaf, views, resolution, seed,
          corrupt_rate, drop_prob, merge_prob):
    """Generate a synthetic hierarchical scene dataset."""
    spec = HierSpec(counts=_parse_ints(counts), spreads=_parse_floats(spreads),
                    points_per_leaf=points_per_leaf, seed=seed)
    scene = generate_scene(spec, n_cameras=views, resolution=resolution)
    options = RenderOptions(corrupt_rate=corrupt_rate, drop_prob=drop_prob,
                            merge_prob=merge_prob)
    dataset = scene_to_dataset(scene, options)
    write_dataset(dataset, out)
    log.info("wrote %d-view dataset with %d points to %s",
             dataset.n_views, dataset.points.shape[0], out)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
def scales(data):
    """Assign every mask a 3D size from depth and write it back."""
    dataset = read_dataset(data)
    assign_dataset_scales(dataset)
    write_dataset(dataset, data)
    s = dataset.all_scales()
    log.info("assigned %d mask sizes in [%.4f, %.4f]", s.size, s.min(), s.max())


@main.command(name="train")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(),
              help="checkpoint output path")
@click.option("--metrics", type=click.Path(), default=None,
              help="JSON-lines training log")
@click.option("--steps", default=2000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--field-config", type=click.Path(exists=True), default=None,
              help="JSON file of field settings")
@click.option("--train-config", type=click.Path(exists=True), default=None,
              help="JSON file of optimizer/loss settings")
def train_cmd(data, out, metrics, steps, seed, field_config, train_config):
    """Optimize the affinity field on a dataset with assigned mask sizes."""
    dataset = read_dataset(data)
    fc = FieldConfig(**json.loads(Path(field_config).read_text())) \
        if field_config else FieldConfig()
    overrides = json.loads(Path(train_config).read_text()) if train_config else {}
    tc = TrainConfig(**{"steps": steps, "seed": seed, **overrides})
    model = train(dataset, fc, tc, metrics_path=metrics)
    save_checkpoint(model, out)
    log.info("wrote checkpoint %s", out)


def _decompose_params(s_max, scale_step, min_cluster_size, epsilon, threshold):
    return DecomposeParams(
        s_max=s_max, scale_step=scale_step, similarity_threshold=threshold,
        cluster=ClusterParams(min_cluster_size=min_cluster_size,
                              cluster_selection_epsilon=epsilon))


_decompose_options = [
    click.option("--s-max", default=1.0, show_default=True),
    click.option("--scale-step", default=0.05, show_default=True),
    click.option("--min-cluster-size", default=40, show_default=True),
    click.option("--epsilon", default=0.1, show_default=True),
    click.option("--threshold", default=0.9, show_default=True),
]


def _with_options(opts):
    def deco(f):
        for opt in reversed(opts):
            f = opt(f)
        return f
    return deco


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--out-tree", required=True, type=click.Path())
@_with_options(_decompose_options)
def decompose(data, checkpoint, out_tree, s_max, scale_step,
              min_cluster_size, epsilon, threshold):
    """Build the hierarchy-of-groups tree from a trained field."""
    dataset = read_dataset(data)
    if dataset.points is None:
        raise click.ClickException(f"dataset {data} has no point cloud")
    model = load_checkpoint(checkpoint)
    params = _decompose_params(s_max, scale_step, min_cluster_size, epsilon,
                               threshold)
    tree = build_tree(model, dataset.points, params)
    out_tree = Path(out_tree)
    save_tree(tree, dataset.points, out_tree, out_tree.with_suffix(".bin"))
    log.info("wrote tree with %d nodes (%d roots) to %s",
             len(tree.nodes), len(tree.roots), out_tree)


@main.command(name="eval")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(),
              help="report JSON path (a .md twin is written alongside)")
@click.option("--clicks-per-group", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_with_options(_decompose_options)
def eval_cmd(data, checkpoint, tree_path, out, clicks_per_group, seed,
             s_max, scale_step, min_cluster_size, epsilon, threshold):
    """Score the tree and click-mined masks against dataset ground truth."""
    dataset = read_dataset(data)
    if dataset.points is None or dataset.labels is None:
        raise click.ClickException(f"dataset {data} lacks points or GT labels")
    model = load_checkpoint(checkpoint)
    tree = load_tree(tree_path)
    params = _decompose_params(s_max, scale_step, min_cluster_size, epsilon,
                               threshold)
    rng = np.random.default_rng(seed)
    finest = dataset.labels[:, -1]
    click_idx = []
    for gid in np.unique(finest):
        members = np.nonzero(finest == gid)[0]
        click_idx.extend(rng.choice(members, min(clicks_per_group, members.size),
                                    replace=False).tolist())
    click_idx = np.array(click_idx)
    report = evaluate(model, dataset.points, dataset.labels, tree,
                      dataset.points[click_idx], click_idx, params)
    out = Path(out)
    out.write_text(report.to_json())
    out.with_suffix(".md").write_text(report.to_markdown() + "\n")
    log.info("completeness %.4f recall %.4f ari %s",
             report.completeness_mean(), report.recall_mean(), report.ari)


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--tree", "tree_path", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--static-dir", type=click.Path(exists=True), default=None,
              help="directory of built viewer assets to serve at /")
@_with_options(_decompose_options)
def serve(data, checkpoint, tree_path, port, host, static_dir,
          s_max, scale_step, min_cluster_size, epsilon, threshold):
    """Serve the trained field and tree over HTTP for the viewer."""
    import uvicorn

    from .service import ServiceArtifacts, create_app

    dataset = read_dataset(data)
    if dataset.points is None:
        raise click.ClickException(f"dataset {data} has no point cloud")
    params = _decompose_params(s_max, scale_step, min_cluster_size, epsilon,
                               threshold)
    artifacts = ServiceArtifacts.load(checkpoint, tree_path, dataset.points,
                                      dataset.labels, params)
    uvicorn.run(create_app(artifacts, static_dir=static_dir),
                host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
