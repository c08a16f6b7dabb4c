# contact_fusion/tests/test_baselines.py
import unittest

import numpy as np
from hypothesis import given, settings as hypothesis_settings, strategies as st

from contact_fusion.baselines.mechanics import Observation, mechanics_model_for
from contact_fusion.baselines.thresholding import (
    ReferenceState,
    proximity_only,
    select_top_deformation,
    tactile_only,
)
from contact_fusion.errors import ConfigError, DataError
from contact_fusion.evaluation.scoring import mask_scores
from contact_fusion.geometry.depth import DepthImage, PinholeIntrinsics
from contact_fusion.models import MechanicsModelConfig, ThresholdConfig
from contact_fusion.simulator.membrane import inflate_membrane
from contact_fusion.simulator.obstacles import place_obstacle
from contact_fusion.simulator.solver import press_object
from contact_fusion.tests.scenes import small_scene_spec

TEN = PinholeIntrinsics(fx=100.0, fy=100.0, cx=5.0, cy=5.0, width=10, height=10)


def ranked_deformation(seed: int) -> np.ndarray:
    """100 distinct deformations 0.1 mm .. 10 mm in shuffled order."""
    return np.random.default_rng(seed).permutation(np.arange(1, 101) * 1e-4).reshape(10, 10)


class TestTactileOnly(unittest.TestCase):

    def setUp(self):
        self.reference = ReferenceState(DepthImage(np.full((10, 10), 0.3)), DepthImage(np.full((10, 10), 0.3)), 5.0)

    def test_keeps_the_top_fraction(self):
        d_t = DepthImage(0.3 - ranked_deformation(0))
        patch = tactile_only(d_t, self.reference, ThresholdConfig(deformation_floor=0.0), TEN)
        self.assertEqual(len(patch), 60)
        self.assertEqual(patch.source, "tactile-only")
        deformation = 0.3 - d_t.data
        self.assertGreater(deformation[patch.pixel_mask].min(), deformation[~patch.pixel_mask].max())

    def test_floor_discards_small_deformations(self):
        d_t = DepthImage(0.3 - ranked_deformation(1))
        patch = tactile_only(d_t, self.reference, ThresholdConfig(deformation_floor=0.00505, keep_fraction=1.0), TEN)
        self.assertEqual(len(patch), 50)

    def test_undeformed_frame_gives_an_empty_patch(self):
        patch = tactile_only(DepthImage(np.full((10, 10), 0.3)), self.reference, intrinsics=TEN)
        self.assertTrue(patch.is_empty)

    @hypothesis_settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 1000), scale=st.sampled_from([0.125, 0.25, 0.5, 2.0, 4.0, 8.0]),
           keep=st.floats(0.05, 1.0))
    def test_selection_is_scale_invariant(self, seed, scale, keep):
        deformation = ranked_deformation(seed)
        np.testing.assert_array_equal(select_top_deformation(deformation * scale, 0.0, keep),
                                      select_top_deformation(deformation, 0.0, keep))

    def test_reference_needs_positive_pressure(self):
        with self.assertRaises(ConfigError):
            ReferenceState(DepthImage(np.zeros((2, 2))), DepthImage(np.zeros((2, 2))), 0.0)

    def test_reference_size_must_match(self):
        with self.assertRaises(ConfigError):
            tactile_only(DepthImage(np.full((5, 5), 0.3)), self.reference, intrinsics=TEN)


class TestProximityOnly(unittest.TestCase):

    def test_returns_in_front_of_the_free_membrane(self):
        reference = ReferenceState(DepthImage(np.full((10, 10), 0.3)), DepthImage(np.full((10, 10), 0.3)), 5.0)
        data = np.zeros((10, 10))
        data[4:6, 4:6] = 0.25
        data[0, 0] = 0.35
        patch = proximity_only(DepthImage(data), reference, TEN)
        self.assertEqual(len(patch), 4)
        np.testing.assert_allclose(patch.points[:, 2], 0.25)
        self.assertEqual(patch.source, "proximity-only")


def pressed_scene(primitive: str, depth: float = 0.010):
    spec = small_scene_spec(primitive)
    free = inflate_membrane(spec)
    pressed, oracle = press_object(free, place_obstacle(spec.object, free, depth=depth))
    return spec, free, pressed, oracle


def exact_config(spec, **overrides) -> MechanicsModelConfig:
    membrane = spec.membrane
    values = dict(mesh_nx=membrane.nx, mesh_ny=membrane.ny, contact_threshold=0.0, crop_margin_cells=0)
    values.update(overrides)
    return MechanicsModelConfig.for_scene(spec, **values)


class TestMechanicsModel(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec, cls.free, cls.pressed, cls.oracle = pressed_scene("cube")
        cls.cfg = exact_config(cls.spec)
        cls.model = mechanics_model_for(cls.cfg)

    def observe(self, z: np.ndarray) -> Observation:
        return Observation(self.model.membrane.to_interior(z), np.ones(self.model.n))

    def test_recovers_simulated_contact_from_exact_heights(self):
        estimate = self.model.estimate(self.observe(self.pressed.z), self.free.pressure)
        iou, _, _ = mask_scores(estimate.contact_mask, self.oracle.mask)
        self.assertGreaterEqual(iou, 0.9)
        self.assertLessEqual(max(estimate.solution.residuals.values()), self.cfg.kkt_tolerance)
        self.assertTrue((estimate.solution.forces >= 0).all())
        self.assertTrue((estimate.refit.forces >= 0).all())
        self.assertEqual(estimate.patch.source, "mechanics-model")

    def test_round_trip_for_every_object(self):
        for primitive in ("cube", "octopus", "cup"):
            with self.subTest(primitive=primitive):
                spec, free, pressed, oracle = pressed_scene(primitive)
                model = mechanics_model_for(exact_config(spec))
                observation = Observation(model.membrane.to_interior(pressed.z), np.ones(model.n))
                estimate = model.estimate(observation, free.pressure)
                iou, _, _ = mask_scores(estimate.contact_mask, oracle.mask)
                self.assertGreaterEqual(iou, 0.9)

    def test_refit_drops_nodes_carrying_only_smoothing_force(self):
        estimate = self.model.estimate(self.observe(self.pressed.z), self.free.pressure)
        self.assertLessEqual(int(estimate.contact_mask.sum()), int(estimate.solution.free_set.sum()))
        self.assertFalse((estimate.refit.support & ~estimate.solution.free_set).any())

    def test_refit_forces_match_the_simulated_multipliers(self):
        estimate = self.model.estimate(self.observe(self.pressed.z), self.free.pressure)
        forces = self.model.membrane.to_grid(estimate.refit.forces)
        peak = float(self.oracle.multipliers.max())
        np.testing.assert_allclose(forces, self.oracle.multipliers, atol=1e-6 * peak)

    def test_default_threshold_keeps_the_flat_contact(self):
        model = mechanics_model_for(exact_config(self.spec, contact_threshold=0.5))
        estimate = model.estimate(self.observe(self.pressed.z), self.free.pressure)
        _, _, recall = mask_scores(estimate.contact_mask, self.oracle.mask)
        self.assertGreaterEqual(recall, 0.9)

    def test_noisy_shallow_press_stays_feasible(self):
        spec, free, pressed, oracle = pressed_scene("cube", depth=0.004)
        model = mechanics_model_for(exact_config(spec, contact_threshold=0.5))
        noise = np.random.default_rng(3).normal(0.0, 5e-4, model.n)
        observation = Observation(model.membrane.to_interior(pressed.z) + noise, np.ones(model.n))
        estimate = model.estimate(observation, free.pressure)
        self.assertTrue((estimate.refit.forces >= 0).all())
        self.assertLessEqual(max(estimate.solution.residuals.values()), model.cfg.kkt_tolerance)
        exact = model.estimate(Observation(model.membrane.to_interior(pressed.z), np.ones(model.n)), free.pressure)
        noisy_iou, _, _ = mask_scores(estimate.contact_mask, oracle.mask)
        exact_iou, _, _ = mask_scores(exact.contact_mask, oracle.mask)
        self.assertTrue(estimate.patch.is_empty or noisy_iou <= exact_iou)

    def test_free_membrane_needs_no_contact_force(self):
        estimate = self.model.estimate(self.observe(self.free.z), self.free.pressure)
        self.assertTrue(estimate.patch.is_empty)

    def test_empty_tactile_image_is_rejected(self):
        camera = self.cfg.tactile_camera.intrinsics
        with self.assertRaises(DataError):
            self.model.resample(DepthImage.invalid(camera.width, camera.height))

    def test_models_are_shared_per_configuration(self):
        self.assertIs(mechanics_model_for(self.cfg), self.model)
        self.assertIsNot(mechanics_model_for(self.cfg.model_copy(update={"mesh_nx": 20})), self.model)
        self.assertEqual(mechanics_model_for.cache_info().maxsize, 8)


if __name__ == '__main__':
    unittest.main()
