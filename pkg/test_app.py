#!/usr/bin/env python3
"""
Command-line tests: synth -> masks -> inpaint -> eval -> slice on a tiny scene
"""

import os
import sys
import json

import numpy as np
import pytest
from click.testing import CliRunner

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app import cli
from scene_generator import random_masks
from utils.video_io import load_frame_dir

SCENE_TOML = """
seed = 2
F = 6
H = 32
W = 32
background = "gradient"

[[sprites]]
size = [8, 8]
position = [8, 6]
velocity = [1, 0]
shadow = { offset = [0, 8], darkening = 0.4 }
"""


@pytest.fixture
def scene_dir(tmp_path):
    spec = tmp_path / "scene.toml"
    spec.write_text(SCENE_TOML, encoding="utf-8")
    out = tmp_path / "scene"
    result = CliRunner().invoke(cli, ["synth", "--spec", str(spec), "--out", str(out)], obj={})
    assert result.exit_code == 0, result.output
    return out


def test_synth_writes_scene(scene_dir):
    for name in ("frames", "masks", "plate", "sprite_masks", "shadow_masks"):
        assert len(os.listdir(scene_dir / name)) == 6


def test_synth_adds_random_holes(tmp_path):
    spec = tmp_path / "scene.toml"
    spec.write_text(SCENE_TOML, encoding="utf-8")
    out = tmp_path / "scene"
    result = CliRunner().invoke(
        cli, ["synth", "--spec", str(spec), "--out", str(out), "--random-masks", "3"], obj={}
    )
    assert result.exit_code == 0, result.output
    holes = load_frame_dir(str(out / "masks"), "mask").data.astype(bool)
    sprites = load_frame_dir(str(out / "sprite_masks"), "mask").data.astype(bool)
    shadows = load_frame_dir(str(out / "shadow_masks"), "mask").data.astype(bool)
    blobs = random_masks(6, 32, 32, seed=2, count=3).data.astype(bool)
    assert np.array_equal(holes, sprites | shadows | blobs)
    result = CliRunner().invoke(
        cli, ["synth", "--spec", str(spec), "--out", str(out), "--random-masks", "-1"], obj={}
    )
    assert result.exit_code == 2


def test_masks_from_anchors(scene_dir, tmp_path):
    out = tmp_path / "propagated"
    result = CliRunner().invoke(
        cli,
        ["--threads", "1", "masks", "--input", str(scene_dir), "--anchors", "0,5",
         "--pair-shadows", "--out", str(out)],
        obj={},
    )
    assert result.exit_code == 0, result.output
    masks = load_frame_dir(str(out), "mask")
    sprites = load_frame_dir(str(scene_dir / "sprite_masks"), "mask")
    assert masks.num_frames == 6
    assert np.all(masks.data[0] >= sprites.data[0])
    assert np.all(masks.data[5] >= sprites.data[5])


def test_inpaint_eval_and_slice(scene_dir, tmp_path):
    runner = CliRunner()
    out = tmp_path / "out"
    result = runner.invoke(
        cli, ["--threads", "1", "--seed", "4", "inpaint", "--input", str(scene_dir), "--out", str(out)], obj={}
    )
    assert result.exit_code == 0, result.output
    with open(out / "report.json", encoding="utf-8") as handle:
        report = json.load(handle)
    assert report["psnr"] is not None and report["psnr"] > 25.0
    assert load_frame_dir(str(out)).num_frames == 6

    scored = tmp_path / "scored.json"
    result = runner.invoke(
        cli, ["eval", "--output", str(out), "--plate", str(scene_dir / "plate"), "--report", str(scored)], obj={}
    )
    assert result.exit_code == 0, result.output
    with open(scored, encoding="utf-8") as handle:
        assert json.load(handle)["psnr"] > 25.0

    image = tmp_path / "slice.png"
    result = runner.invoke(cli, ["slice", "--input", str(out), "--column", "12", "--out", str(image)], obj={})
    assert result.exit_code == 0, result.output
    assert image.exists()


def test_config_file_is_applied(scene_dir, tmp_path):
    config = tmp_path / "pipeline.toml"
    config.write_text('denoiser.kind = "oracle"\nstages.ref_frame = false\n', encoding="utf-8")
    out = tmp_path / "out"
    debug = tmp_path / "debug"
    result = CliRunner().invoke(
        cli,
        ["--config", str(config), "--debug-dir", str(debug), "inpaint", "--input", str(scene_dir),
         "--out", str(out)],
        obj={},
    )
    assert result.exit_code == 0, result.output
    with open(debug / "config.toml", encoding="utf-8") as handle:
        text = handle.read()
    assert 'kind = "oracle"' in text
    assert "reference.png" not in os.listdir(debug)


def test_errors_exit_non_zero(tmp_path):
    runner = CliRunner()
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(cli, ["inpaint", "--input", str(empty), "--out", str(tmp_path / "o")], obj={})
    assert result.exit_code == 1
    assert "io" in result.output
    result = runner.invoke(cli, ["ablate", "--out", str(tmp_path / "t.csv")], obj={})
    assert result.exit_code == 2
    print("✅ Errors reported with non-zero exit codes")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
