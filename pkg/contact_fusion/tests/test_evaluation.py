# contact_fusion/tests/test_evaluation.py
import random
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np
import polars as pl
from polars.testing import assert_frame_equal

from contact_fusion.evaluation.benchmark import BUDGETS_MS, run_benchmark
from contact_fusion.evaluation.grid import ExperimentGrid, assemble_report, summary_table, write_report
from contact_fusion.evaluation.inputs import AlgorithmConfigs, run_algorithm
from contact_fusion.evaluation.scoring import align_for_scoring, mask_scores, node_mask, score_patch
from contact_fusion.geometry import io
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud
from contact_fusion.geometry.registration import rotation_about_z, yaw_degrees
from contact_fusion.models import CellFailure, GridConfig
from contact_fusion.simulator.membrane import MembraneGrid
from contact_fusion.simulator.scene import generate_scene
from contact_fusion.tests.scenes import SMALL_MEMBRANE, small_fusion_config, small_scene_spec


def score_row(algorithm: str, seed: int, rmse, iou: float, obj: str = "cube", regime: str = "low") -> dict:
    return {
        "object": obj, "regime": regime, "algorithm": algorithm, "seed": seed,
        "rmse_mm": rmse, "iou": iou, "precision": iou, "recall": 1.0,
        "no_contact": rmse is None, "alignment_flagged": False,
        "alignment_residual_mm": None if rmse is None else 0.5, "points": 0 if rmse is None else 100,
        "runtime_ms": 10.0 + seed,
    }


class TestMaskScores(unittest.TestCase):

    def test_partial_overlap(self):
        predicted = np.array([True, True, False, False])
        truth = np.array([False, True, True, False])
        iou, precision, recall = mask_scores(predicted, truth)
        self.assertAlmostEqual(iou, 1 / 3)
        self.assertEqual((precision, recall), (0.5, 0.5))

    def test_empty_sets(self):
        empty = np.zeros(4, dtype=bool)
        some = np.array([True, False, False, False])
        self.assertEqual(mask_scores(empty, empty), (1.0, 1.0, 1.0))
        self.assertEqual(mask_scores(empty, some), (0.0, 0.0, 0.0))
        self.assertEqual(mask_scores(some, empty), (0.0, 0.0, 0.0))


class TestPatchScoring(unittest.TestCase):

    def setUp(self):
        self.grid = MembraneGrid(33, 33, 0.2, 0.2, 0.229)
        self.truth = np.zeros(self.grid.shape, dtype=bool)
        self.truth[10:15, 10:17] = True
        xx, yy = self.grid.xy
        x, y = xx[self.truth], yy[self.truth]
        self.oracle = PointCloud(np.column_stack((x, y, 0.3 + x ** 2 + 0.5 * y ** 2)))

    def test_node_mask_undoes_the_camera_offset(self):
        camera = (0.010, 0.0, 0.0)
        world = np.array([[self.grid.x[3], self.grid.y[5], 0.3]])
        mask = node_mask(PointCloud(world - camera), self.grid, camera)
        self.assertEqual(np.argwhere(mask).tolist(), [[5, 3]])

    def test_points_off_the_membrane_are_ignored(self):
        self.assertFalse(node_mask(PointCloud([[1.0, 1.0, 0.3]]), self.grid).any())

    def test_exact_estimate_scores_perfectly(self):
        score = score_patch(ContactPatch(self.oracle, "fusion"), self.oracle, self.truth, self.grid)
        self.assertAlmostEqual(score.rmse_mm, 0.0, places=6)
        self.assertEqual((score.iou, score.precision, score.recall), (1.0, 1.0, 1.0))
        self.assertFalse(score.no_contact)
        self.assertFalse(score.alignment_flagged)

    def test_empty_estimate_is_no_contact(self):
        score = score_patch(ContactPatch(PointCloud.empty(), "tactile-only"), self.oracle, self.truth, self.grid)
        self.assertTrue(score.no_contact)
        self.assertIsNone(score.rmse_mm)
        self.assertEqual(score.iou, 0.0)
        self.assertEqual(score.points, 0)

    def test_alignment_undoes_a_small_rotation(self):
        rng = np.random.default_rng(11)
        x, y = rng.uniform(-0.03, 0.03, size=(2, 600))
        surface = np.column_stack((x, y, 0.3 + 20.0 * x ** 2 + 5.0 * y ** 2 + 10.0 * x * y))
        turned = PointCloud(surface @ rotation_about_z(5.0).T)
        result = align_for_scoring(turned, PointCloud(surface))
        self.assertAlmostEqual(yaw_degrees(result.transform), -5.0, delta=0.1)
        self.assertLess(result.rmse, 1e-4)


class TestAssembleReport(unittest.TestCase):

    def setUp(self):
        self.scores = [
            score_row("fusion", 0, 1.0, 0.5),
            score_row("fusion", 1, 3.0, 0.7),
            score_row("tactile", 0, 4.0, 0.2),
            score_row("tactile", 1, None, 0.0),
        ]

    def test_aggregates_per_cell(self):
        result = assemble_report(self.scores, [], [0, 1])
        expected = pl.DataFrame({
            "object": ["cube", "cube"],
            "regime": ["low", "low"],
            "algorithm": ["fusion", "tactile"],
            "seeds": [2, 2],
            "scored": [2, 1],
            "rmse_mean_mm": [2.0, 4.0],
            "rmse_std_mm": [1.0, 0.0],
            "iou": [0.6, 0.1],
            "no_contact": [0, 1],
        })
        assert_frame_equal(result.table.select(expected.columns), expected, check_dtypes=False)
        self.assertEqual(result.report.rows[1].no_contact, 1)
        self.assertEqual(result.report.runtime_ms, {"fusion": 10.5, "tactile": 10.5})

    def test_independent_of_completion_order(self):
        baseline = assemble_report(self.scores, [], [0, 1])
        for seed in range(5):
            shuffled = self.scores[:]
            random.Random(seed).shuffle(shuffled)
            result = assemble_report(shuffled, [], [0, 1])
            self.assertEqual(result.report.canonical_dict(), baseline.report.canonical_dict())
            assert_frame_equal(result.scores, baseline.scores)

    def test_failures_are_sorted(self):
        failures = [
            CellFailure(object="cup", regime="low", seed=0, algorithm="fusion", error="x"),
            CellFailure(object="cube", regime="low", seed=1, algorithm=None, error="y"),
        ]
        report = assemble_report([], failures, [0, 1]).report
        self.assertEqual([f.object for f in report.failures], ["cube", "cup"])

    def test_no_seeds_gives_an_empty_report(self):
        result = assemble_report([], [], [])
        self.assertEqual(result.report.rows, [])
        self.assertEqual(result.table.height, 0)
        self.assertEqual(result.report.runtime_ms, {})

    def test_runtime_is_kept_out_of_the_canonical_report(self):
        report = assemble_report(self.scores, [], [0, 1]).report
        self.assertNotIn("runtime_ms", report.canonical_dict())

    def test_summary_table_marks_missing_rmse(self):
        scores = [score_row("tactile", 0, None, 0.0)]
        table = summary_table(assemble_report(scores, [], [0]).report)
        self.assertIn("tactile", table)
        self.assertIn("- ± -", table)


class SmallGrid(ExperimentGrid):
    """Coarse membrane and small cameras so a grid cell simulates quickly."""

    def scene_spec(self, obj, regime, seed):
        return small_scene_spec(obj, regime, seed, depth=None)


class TestExperimentGrid(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)
        self.settings = MagicMock()
        self.settings.default_jobs = 2
        self.config = GridConfig(objects=["cube"], regimes=["low"], seeds=[0, 1],
                                 algorithms=["fusion", "tactile", "proximity"], membrane=SMALL_MEMBRANE)

    def tearDown(self):
        self._tmp.cleanup()

    def test_jobs_cover_the_grid(self):
        grid = ExperimentGrid(GridConfig(objects=["cube", "cup"], regimes=["low", "high"], seeds=[3]))
        self.assertEqual(grid.jobs(), [("cube", "low", 3), ("cube", "high", 3), ("cup", "low", 3), ("cup", "high", 3)])

    def test_runs_every_cell_and_writes_the_report(self):
        result = SmallGrid(self.config, settings=self.settings).run(dump_dir=self.tmp / "cells")
        report = result.report
        self.assertEqual(report.failures, [])
        self.assertEqual([r.algorithm for r in report.rows], ["fusion", "proximity", "tactile"])
        self.assertTrue(all(r.seeds == 2 for r in report.rows))
        self.assertEqual(result.scores.height, 6)
        self.assertTrue((self.tmp / "cells" / "cube-low-s0" / "bundle" / "scene.toml").is_file())
        self.assertTrue((self.tmp / "cells" / "cube-low-s1" / "fusion.ply").is_file())

        paths = write_report(result, self.tmp / "report")
        self.assertTrue(all(p.is_file() for p in paths))
        written = io.read_json(self.tmp / "report" / "report.json")
        self.assertEqual(written, report.canonical_dict())

    def test_report_bytes_do_not_depend_on_worker_count(self):
        grid = SmallGrid(self.config, settings=self.settings)
        serial = write_report(grid.run(jobs=1), self.tmp / "serial")[0]
        parallel = write_report(grid.run(jobs=2), self.tmp / "parallel")[0]
        self.assertEqual(serial.read_bytes(), parallel.read_bytes())

    def test_simulation_failure_becomes_a_cell_failure(self):
        class BrokenGrid(ExperimentGrid):
            def scene_spec(self, obj, regime, seed):
                return small_scene_spec(obj, regime, seed, depth=0.2)

        scores, failures = BrokenGrid(self.config, settings=self.settings).run_job("cube", "low", 0, ["fusion"])
        self.assertEqual(scores, [])
        self.assertEqual(len(failures), 1)
        self.assertIsNone(failures[0].algorithm)
        self.assertIn("clamp", failures[0].error)

    def test_unexpected_algorithm_error_is_recorded_per_cell(self):
        def flaky(name, scene, configs=None, mask=None):
            if name == "tactile":
                raise ValueError("singular warp")
            return run_algorithm(name, scene, configs, mask)

        with patch("contact_fusion.evaluation.grid.run_algorithm", side_effect=flaky):
            result = SmallGrid(self.config, settings=self.settings).run()
        failures = result.report.failures
        self.assertEqual([(f.algorithm, f.seed) for f in failures], [("tactile", 0), ("tactile", 1)])
        self.assertTrue(all(f.error == "ValueError: singular warp" for f in failures))
        self.assertEqual(sorted(result.scores["algorithm"].unique().to_list()), ["fusion", "proximity"])

    def test_unexpected_simulation_error_is_recorded(self):
        with patch("contact_fusion.evaluation.grid.generate_scene", side_effect=np.linalg.LinAlgError("Singular matrix")):
            scores, failures = SmallGrid(self.config, settings=self.settings).run_job("cube", "low", 0, ["fusion"])
        self.assertEqual(scores, [])
        self.assertEqual(failures[0].error, "LinAlgError: Singular matrix")


class TestBenchmark(unittest.TestCase):

    def test_one_row_per_algorithm_with_its_budget(self):
        scene = generate_scene(small_scene_spec(seed=5))
        table = run_benchmark(3, ["tactile", "fusion"], scene, AlgorithmConfigs(fusion=small_fusion_config()))
        self.assertEqual(table["algorithm"].to_list(), ["tactile", "fusion"])
        self.assertEqual(table["frames"].to_list(), [3, 3])
        self.assertEqual(table["budget_ms"].to_list(), [BUDGETS_MS["tactile"], BUDGETS_MS["fusion"]])
        self.assertTrue((table["median_ms"] >= 0).all())
        self.assertTrue((table["p90_ms"] >= table["median_ms"]).all())


if __name__ == '__main__':
    unittest.main()
