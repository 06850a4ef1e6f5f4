#!/usr/bin/env python3
"""
Tests for the OP / R stage ablation harness
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from pipeline.ablation import DEFAULT_TOGGLES, REPORT_COLUMNS, ablation_table, config_id, run_ablation
from scene_generator import SceneSpec, SpriteSpec, default_suite, generate_scene
from utils.errors import InvalidArgument
from utils.settings import PipelineConfig


def _config():
    return PipelineConfig.model_validate({"seed": 11, "threads": 1, "debug_dir": None})


def _scene_input(spec):
    scene = generate_scene(spec)
    return scene.clip, scene.sprite_masks.union(scene.shadow_masks), scene.plate


def _small_inputs():
    spec = SceneSpec(seed=5, F=8, H=32, W=32, camera_pan=(1, 0),
                     sprites=[SpriteSpec(size=(8, 6), position=(10, 12))])
    return [_scene_input(spec)]


def test_config_ids():
    assert [config_id(t) for t in DEFAULT_TOGGLES] == ["-/-", "OP/-", "-/R", "OP/R"]
    assert config_id({}) == "-/-"


def test_four_rows_deterministic():
    inputs = _small_inputs()
    first = run_ablation(_config(), inputs=inputs)
    second = run_ablation(_config(), inputs=inputs)
    assert [cid for cid, _ in first] == ["-/-", "OP/-", "-/R", "OP/R"]
    for (_, a), (_, b) in zip(first, second):
        assert a.model_dump(exclude={"runtime_ms"}) == b.model_dump(exclude={"runtime_ms"})
    assert all(report.psnr is not None for _, report in first)


def test_empty_toggles_rejected():
    with pytest.raises(InvalidArgument):
        run_ablation(_config(), toggles=[], inputs=_small_inputs())


def test_suite_full_configuration_not_worse():
    inputs = [_scene_input(spec) for spec in default_suite(10, seed=0)]
    toggles = [DEFAULT_TOGGLES[0], DEFAULT_TOGGLES[3]]
    rows = dict(run_ablation(_config(), toggles=toggles, inputs=inputs))
    assert rows["OP/R"].psnr >= rows["-/-"].psnr
    print(f"✅ Suite mean PSNR: -/- {rows['-/-'].psnr:.2f} dB, OP/R {rows['OP/R'].psnr:.2f} dB")


def test_ablation_table_columns():
    rows = run_ablation(_config(), toggles=DEFAULT_TOGGLES[:2], inputs=_small_inputs())
    table = ablation_table(rows)
    assert list(table.columns) == REPORT_COLUMNS
    assert list(table["config_id"]) == ["-/-", "OP/-"]
    assert np.all(table["fusion_ops"] >= 0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
