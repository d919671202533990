"""Scale-conditioned 3D affinity fields and hierarchical scene decomposition."""

__version__ = "0.1.0"

from .dataset import Dataset, MaskRecord, ViewMaskSet, read_dataset, write_dataset
from .decompose import (DecomposeParams, GroupTree, build_tree, global_cluster,
                        multiscale_masks, select_group)
from .density import ClusterParams, ClusterResult, cluster
from .evaluation import EvalReport, evaluate, miou
from .field import AffinityField, FieldConfig, load_checkpoint, save_checkpoint
from .scales import ScaleNormalizer, assign_scale, fit_normalizer
from .synth import HierSpec, RenderOptions, SyntheticScene, generate_scene, render_view
from .training import TrainConfig, train

__all__ = [
    "AffinityField", "ClusterParams", "ClusterResult", "Dataset",
    "DecomposeParams", "EvalReport", "FieldConfig", "GroupTree", "HierSpec",
    "MaskRecord", "RenderOptions", "ScaleNormalizer", "SyntheticScene",
    "TrainConfig", "ViewMaskSet", "assign_scale", "build_tree", "cluster",
    "evaluate", "fit_normalizer", "generate_scene", "global_cluster",
    "load_checkpoint", "miou", "multiscale_masks", "read_dataset",
    "render_view", "save_checkpoint", "select_group", "train", "write_dataset",
]
