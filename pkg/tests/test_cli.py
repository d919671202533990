import json

import numpy as np
import pytest
from click.testing import CliRunner

from groupfield.cli import main


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


def test_help_exits_zero(runner):
    for cmd in ([], ["synth"], ["scales"], ["train"], ["decompose"],
                ["eval"], ["serve"]):
        result = runner.invoke(main, cmd + ["--help"])
        assert result.exit_code == 0
        assert "Usage" in result.output


def test_missing_dataset_path_exits_two_naming_path(runner):
    result = runner.invoke(main, ["scales", "--data", "/no/such/dir"])
    assert result.exit_code == 2
    assert "/no/such/dir" in result.output


def test_missing_checkpoint_exits_two(runner, tmp_path):
    result = runner.invoke(main, ["decompose", "--data", str(tmp_path),
                                  "--checkpoint", str(tmp_path / "nope.ckpt"),
                                  "--out-tree", str(tmp_path / "t.json")])
    assert result.exit_code == 2
    assert "nope.ckpt" in result.output


def test_full_pipeline_smoke(runner, tmp_path):
    data = tmp_path / "data"
    ckpt = tmp_path / "model.ckpt"
    tree = tmp_path / "tree.json"
    report = tmp_path / "report.json"
    fc = tmp_path / "field.json"
    fc.write_text(json.dumps({
        "n_levels": 4, "log2_hashmap_size": 10, "base_resolution": 4,
        "max_resolution": 32, "mlp_layers": 2, "mlp_width": 16, "out_dim": 8}))
    tc = tmp_path / "train.json"
    tc.write_text(json.dumps({"images_per_batch": 2, "rays_per_image": 24}))

    r = runner.invoke(main, ["synth", "--out", str(data), "--counts", "2",
                             "--spreads", "0.5", "--points-per-leaf", "40",
                             "--views", "4", "--resolution", "48",
                             "--corrupt-rate", "0", "--drop-prob", "0",
                             "--merge-prob", "0"])
    assert r.exit_code == 0, r.output
    assert (data / "manifest.json").exists()

    r = runner.invoke(main, ["scales", "--data", str(data)])
    assert r.exit_code == 0, r.output

    r = runner.invoke(main, ["train", "--data", str(data), "--out", str(ckpt),
                             "--steps", "30", "--field-config", str(fc),
                             "--train-config", str(tc),
                             "--metrics", str(tmp_path / "metrics.jsonl")])
    assert r.exit_code == 0, r.output
    assert ckpt.exists()
    assert (tmp_path / "metrics.jsonl").read_text().strip()

    r = runner.invoke(main, ["decompose", "--data", str(data),
                             "--checkpoint", str(ckpt),
                             "--out-tree", str(tree),
                             "--min-cluster-size", "20",
                             "--scale-step", "0.25"])
    assert r.exit_code == 0, r.output
    assert tree.exists() and tree.with_suffix(".bin").exists()

    r = runner.invoke(main, ["eval", "--data", str(data),
                             "--checkpoint", str(ckpt), "--tree", str(tree),
                             "--out", str(report),
                             "--min-cluster-size", "20",
                             "--scale-step", "0.25"])
    assert r.exit_code == 0, r.output
    rep = json.loads(report.read_text())
    assert rep["stats"]["n_points"] == 80
    assert report.with_suffix(".md").read_text().startswith("| metric")

    # decompose twice: identical tree bytes (pipeline determinism)
    tree2 = tmp_path / "tree2.json"
    r = runner.invoke(main, ["decompose", "--data", str(data),
                             "--checkpoint", str(ckpt),
                             "--out-tree", str(tree2),
                             "--min-cluster-size", "20",
                             "--scale-step", "0.25"])
    assert r.exit_code == 0, r.output
    a = json.loads(tree.read_text())
    b = json.loads(tree2.read_text())
    a["sidecar"] = b["sidecar"] = ""
    assert a == b
    assert tree.with_suffix(".bin").read_bytes() == \
        tree2.with_suffix(".bin").read_bytes()


def test_version_flag(runner):
    from groupfield import __version__
    r = runner.invoke(main, ["--version"])
    assert r.exit_code == 0
    assert __version__ in r.output
