"""Aerial IR inspection of PV plants: from raw scan video to a per-plant
dataset of rectified module patches with stable plant identities.

The stages are importable on their own (ingest, segmentation, rowfilter,
tracking, rectify, plantgraph, sunfilter, voting) and composed by
pipeline.run_plant; simulate renders ground-truthed synthetic scenes and
server/cli expose the operator-facing surfaces.
"""

from .pipeline import RowResult, RunConfig, run_plant, run_row
from .simulate import SceneTruth, load_scene_truth, simulate_scene

__version__ = "1.0.0"

__all__ = [
    "RunConfig",
    "RowResult",
    "run_plant",
    "run_row",
    "SceneTruth",
    "simulate_scene",
    "load_scene_truth",
    "__version__",
]
