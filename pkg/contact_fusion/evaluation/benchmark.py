# contact_fusion/evaluation/benchmark.py
"""Per-frame runtime of each algorithm against its real-time budget."""

import logging
from typing import Optional, Sequence

import numpy as np
import polars as pl

from contact_fusion.evaluation.inputs import AlgorithmConfigs, run_algorithm
from contact_fusion.models import ALGORITHMS, SceneSpec
from contact_fusion.simulator.scene import SimulatedScene, generate_scene, scene_for_cell

log = logging.getLogger(__name__)

# Per-frame budgets at 640x480, milliseconds
BUDGETS_MS: dict[str, float] = {"tactile": 30.0, "proximity": 30.0, "fusion": 70.0, "mechanics": 300.0}


def benchmark_scene(spec: Optional[SceneSpec] = None) -> SimulatedScene:
    return generate_scene(spec or scene_for_cell("cube", "medium", seed=0))


def run_benchmark(frames: int = 50, algorithms: Sequence[str] = ALGORITHMS,
                  scene: Optional[SimulatedScene] = None,
                  configs: Optional[AlgorithmConfigs] = None) -> pl.DataFrame:
    """Median wall time over `frames` repeated runs on one scene, one row per algorithm."""
    scene = scene or benchmark_scene()
    configs = configs or AlgorithmConfigs()
    rows = []
    for name in algorithms:
        times = []
        for _ in range(frames):
            patch = run_algorithm(name, scene, configs)
            times.append(patch.timings_ms["wall"])
        median = float(np.median(times))
        budget = BUDGETS_MS.get(name)
        rows.append({
            "algorithm": name,
            "frames": frames,
            "median_ms": round(median, 3),
            "p90_ms": round(float(np.percentile(times, 90)), 3),
            "budget_ms": budget,
            "within_budget": budget is None or median <= budget,
        })
        log.info(f"{name}: median {median:.1f} ms over {frames} frames (budget {budget} ms)")
    return pl.from_dicts(rows)
