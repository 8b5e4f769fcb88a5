"""Shared fixtures: a small rendered scene reused by integration tests."""

import pytest

from irpv.pipeline import RunConfig
from irpv.simulate import simulate_scene


@pytest.fixture(scope="session")
def small_scene(tmp_path_factory):
    """One 2x6 row swept at 28 px/frame; returns (scene_dir, truth)."""
    d = tmp_path_factory.mktemp("scene")
    cfg = {
        "seed": 11,
        "frame_width": 480,
        "frame_height": 300,
        "velocity_units": 0.35,
        "rows": [{"row_id": "R01", "rows_per_stack": 2, "cols": 6}],
    }
    truth = simulate_scene(cfg, d)
    return d, truth


@pytest.fixture()
def scene_run_config(small_scene, tmp_path):
    """RunConfig pointed at the shared scene, output under this test's tmp."""
    scene_dir, _ = small_scene
    return RunConfig(
        frames_dir=str(scene_dir / "frames"),
        plant_file=str(scene_dir / "plants.json"),
        rows_file=str(scene_dir / "rows.json"),
        out_dir=str(tmp_path / "out"),
        gps_csv=str(scene_dir / "gps.csv"),
    )
