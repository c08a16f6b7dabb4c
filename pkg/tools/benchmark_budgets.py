#!/usr/bin/env python3
"""
Standalone script that times every algorithm on one full-size simulated frame
and compares the median per-frame runtime with its real-time budget
(tactile-only 30 ms, proximity-only 30 ms, fusion 70 ms, mechanics 300 ms).

The scene is generated once; each algorithm is then run repeatedly on it.
Results are printed as a table and optionally written as JSON.
"""

import argparse
import logging
import os
import sys

from tabulate import tabulate

# Add project root to sys.path to allow sibling imports
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(SCRIPT_DIR)
if PROJECT_ROOT not in sys.path:
    sys.path.append(PROJECT_ROOT)

from contact_fusion.evaluation.benchmark import benchmark_scene, run_benchmark
from contact_fusion.geometry import io
from contact_fusion.simulator.scene import scene_for_cell

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
log = logging.getLogger(__name__)


def main() -> int:
    parser = argparse.ArgumentParser(description="Median per-frame runtimes against the real-time budgets.")
    parser.add_argument("--frames", type=int, default=50, help="Repetitions per algorithm.")
    parser.add_argument("--object", default="cube", choices=["octopus", "cube", "cup"])
    parser.add_argument("--regime", default="medium", choices=["low", "medium", "high"])
    parser.add_argument("--json", help="Optional path for the results as JSON.")
    args = parser.parse_args()

    log.info(f"--- Generating {args.object}/{args.regime} benchmark frame ---")
    scene = benchmark_scene(scene_for_cell(args.object, args.regime, seed=0))
    table = run_benchmark(args.frames, scene=scene)
    print(tabulate(table.rows(), headers=table.columns, floatfmt=".2f"))

    if args.json:
        io.write_json(args.json, table.to_dicts())
        log.info(f"Wrote {args.json}")

    over = table.filter(~table["within_budget"])["algorithm"].to_list()
    if over:
        log.warning(f"Over budget: {', '.join(over)}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
