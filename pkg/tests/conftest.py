import numpy as np
import pytest
import torch

from groupfield import (FieldConfig, HierSpec, RenderOptions, TrainConfig,
                        generate_scene)
from groupfield.scales import assign_dataset_scales
from groupfield.synth import scene_to_dataset
from groupfield.training import train

torch.set_num_threads(1)

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def tiny_scene():
    spec = HierSpec(counts=[2, 3], spreads=[0.5, 0.15], points_per_leaf=40,
                    seed=3, separation=1.5)
    return generate_scene(spec, n_cameras=6, resolution=96)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_scene):
    ds = scene_to_dataset(tiny_scene, RenderOptions(corrupt_rate=0.0, drop_prob=0.0))
    assign_dataset_scales(ds)
    return ds


@pytest.fixture(scope="session")
def tiny_field_config():
    return FieldConfig(n_levels=6, log2_hashmap_size=12, base_resolution=4,
                       max_resolution=64, mlp_layers=3, mlp_width=32, out_dim=16)


@pytest.fixture(scope="session")
def tiny_model(tiny_dataset, tiny_field_config):
    """A briefly trained model; enough structure for interface-level tests."""
    cfg = TrainConfig(steps=150, images_per_batch=4, rays_per_image=48,
                      seed=0, log_every=1000)
    return train(tiny_dataset, tiny_field_config, cfg)
