# contact_fusion/tests/test_strain.py
import unittest

import numpy as np

from contact_fusion.errors import ConfigError, MeasurementError
from contact_fusion.simulator.membrane import MembraneGrid, inflate_membrane
from contact_fusion.simulator.scene import REGIME_TARGETS, scene_for_cell
from contact_fusion.simulator.strain import (
    STRAIN_TOLERANCE,
    DotGrid,
    build_dot_grid,
    displacement_for_strain,
    lattice,
    measure_strain,
    strain_at_depth,
)
from contact_fusion.tests.scenes import SMALL_MEMBRANE, small_scene_spec


def flat_lattice(rows: int = 3, cols: int = 4, pitch: float = 0.010) -> np.ndarray:
    xx, yy = np.meshgrid(pitch * np.arange(cols), pitch * np.arange(rows))
    return np.stack((xx, yy, np.zeros_like(xx)), axis=-1)


class TestMeasureStrain(unittest.TestCase):

    def test_uniform_stretch(self):
        ref = flat_lattice()
        self.assertAlmostEqual(measure_strain(DotGrid(ref, ref * 1.10)), 0.10, places=12)

    def test_largest_local_stretch_wins(self):
        ref = flat_lattice()
        deformed = ref.copy()
        deformed[1, 3, 0] += 0.005
        self.assertAlmostEqual(measure_strain(DotGrid(ref, deformed)), 0.5, places=12)

    def test_unchanged_grid_has_zero_strain(self):
        ref = flat_lattice()
        self.assertEqual(measure_strain(DotGrid(ref, ref.copy())), 0.0)

    def test_missing_centroid_reports_its_index(self):
        ref = flat_lattice()
        deformed = ref.copy()
        deformed[2, 1] = np.nan
        with self.assertRaises(MeasurementError) as ctx:
            measure_strain(DotGrid(ref, deformed))
        self.assertEqual(ctx.exception.index, (2, 1))

    def test_lattice_fits_the_membrane(self):
        xs, ys = lattice(MembraneGrid.from_spec(SMALL_MEMBRANE))
        self.assertEqual(len(xs), 35)
        self.assertEqual(len(ys), 21)
        self.assertAlmostEqual(xs[0], -0.17)
        self.assertAlmostEqual(ys[-1], 0.10)


class TestPressDepthSearch(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec = small_scene_spec(depth=None)
        cls.free = inflate_membrane(cls.spec)

    def test_free_membrane_is_unstrained(self):
        self.assertEqual(measure_strain(build_dot_grid(self.free, self.free)), 0.0)

    def test_deeper_press_stretches_more(self):
        shallow = strain_at_depth(self.spec, self.free, 0.002)
        deep = strain_at_depth(self.spec, self.free, 0.030)
        self.assertLess(shallow, deep)

    def test_zero_target_needs_no_press(self):
        self.assertEqual(displacement_for_strain(0.0, self.spec), 0.0)

    def test_targets_outside_range_are_rejected(self):
        for target in (2.5, -0.1):
            with self.assertRaises(ConfigError):
                displacement_for_strain(target, self.spec)

    def test_found_depth_reaches_the_target(self):
        depth = displacement_for_strain(0.10, self.spec)
        self.assertGreater(depth, 0.0)
        self.assertLessEqual(abs(strain_at_depth(self.spec, self.free, depth) - 0.10), 0.01)

    def test_medium_target_is_reachable_on_a_coarse_grid(self):
        depth = displacement_for_strain(0.60, self.spec)
        self.assertLessEqual(abs(strain_at_depth(self.spec, self.free, depth) - 0.60), STRAIN_TOLERANCE)


class TestRegimeTargets(unittest.TestCase):

    def test_every_regime_is_reachable_at_default_resolution(self):
        for primitive in ("cube", "octopus", "cup"):
            for regime, setting in REGIME_TARGETS.items():
                with self.subTest(primitive=primitive, regime=regime):
                    spec = scene_for_cell(primitive, regime, seed=0)
                    depth = displacement_for_strain(setting.strain, spec, initial_guess=setting.nominal_depth)
                    strain = strain_at_depth(spec, inflate_membrane(spec), depth)
                    self.assertLessEqual(abs(strain - setting.strain), STRAIN_TOLERANCE)

    def test_high_regime_presses_off_centre_on_a_taller_membrane(self):
        spec = scene_for_cell("cube", "high", seed=0)
        self.assertEqual(spec.object.x, REGIME_TARGETS["high"].x_offset)
        self.assertGreater(spec.membrane.apex_height, scene_for_cell("cube", "medium", seed=0).membrane.apex_height)
        depth = displacement_for_strain(1.00, spec, initial_guess=REGIME_TARGETS["high"].nominal_depth)
        self.assertGreater(depth, 0.0)


if __name__ == '__main__':
    unittest.main()
