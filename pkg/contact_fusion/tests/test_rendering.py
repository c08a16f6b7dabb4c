# contact_fusion/tests/test_rendering.py
import unittest

import numpy as np

from contact_fusion.errors import SceneError
from contact_fusion.evaluation.scoring import connected_components
from contact_fusion.geometry.depth import PinholeIntrinsics, RgbImage
from contact_fusion.models import CameraSpec, NoiseSpec
from contact_fusion.simulator.membrane import inflate_membrane
from contact_fusion.simulator.obstacles import place_obstacle
from contact_fusion.simulator.rendering import (
    BLOB_DEPTH_RANGE,
    BLOB_INNER_EXCLUSION,
    MEMBRANE_COLOUR_HSV,
    OBJECT_COLOUR_HSV,
    hsv_to_rgb,
    place_reflection_blobs,
    render_membrane_depth,
    render_proximity_depth,
    render_tactile_depth,
)
from contact_fusion.simulator.solver import press_object
from contact_fusion.tests.scenes import SMALL_CAMERA, small_scene_spec


def hue_of(rgb: tuple[int, int, int]) -> float:
    return float(RgbImage.filled(1, 1, rgb).to_hsv()[0, 0, 0])


class TestMembraneRendering(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec = small_scene_spec()
        cls.free = inflate_membrane(cls.spec)

    def test_optical_axis_sees_the_apex(self):
        depth = render_membrane_depth(self.free, CameraSpec(intrinsics=SMALL_CAMERA))
        centre = depth.data[int(SMALL_CAMERA.cy), int(SMALL_CAMERA.cx)]
        self.assertAlmostEqual(float(centre), self.free.apex, delta=1e-9)

    def test_rays_leaving_the_membrane_are_invalid(self):
        wide = PinholeIntrinsics(fx=20.0, fy=20.0, cx=80.0, cy=60.0, width=160, height=120)
        depth = render_membrane_depth(self.free, CameraSpec(intrinsics=wide))
        self.assertEqual(depth.data[0, 0], 0.0)
        self.assertGreater(depth.data[60, 80], 0.0)

    def test_camera_inside_membrane_volume_is_rejected(self):
        with self.assertRaises(SceneError):
            render_membrane_depth(self.free, CameraSpec(intrinsics=SMALL_CAMERA, position=(0.0, 0.0, 0.25)))

    def test_tactile_noise_is_seeded(self):
        first = render_tactile_depth(self.free, self.spec)
        again = render_tactile_depth(self.free, self.spec)
        other = render_tactile_depth(self.free, self.spec.with_seed(7))
        np.testing.assert_array_equal(first.data, again.data)
        self.assertFalse(np.array_equal(first.data, other.data))
        np.testing.assert_array_equal(first.valid, other.valid)


class TestReflectionBlobs(unittest.TestCase):

    def test_blobs_are_separate_and_outside_the_centre(self):
        for seed in range(5):
            blobs, mask = place_reflection_blobs(SMALL_CAMERA, NoiseSpec(seed=seed, blob_count=2))
            self.assertEqual(len(blobs), 2)
            self.assertEqual(connected_components(mask), 2)
            half_diagonal = 0.5 * np.hypot(SMALL_CAMERA.width, SMALL_CAMERA.height)
            for blob in blobs:
                u, v = blob.centre
                self.assertGreaterEqual(np.hypot(u - SMALL_CAMERA.width / 2, v - SMALL_CAMERA.height / 2),
                                        BLOB_INNER_EXCLUSION * half_diagonal)
                self.assertTrue(BLOB_DEPTH_RANGE[0] <= blob.depth <= BLOB_DEPTH_RANGE[1])

    def test_same_seed_same_blobs(self):
        first, _ = place_reflection_blobs(SMALL_CAMERA, NoiseSpec(seed=4))
        second, _ = place_reflection_blobs(SMALL_CAMERA, NoiseSpec(seed=4))
        self.assertEqual(first, second)

    def test_impossible_layout_raises(self):
        tiny = PinholeIntrinsics(fx=20.0, fy=20.0, cx=16.0, cy=12.0, width=32, height=24)
        with self.assertRaises(SceneError):
            place_reflection_blobs(tiny, NoiseSpec(blob_count=50))


class TestProximityRendering(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.spec = small_scene_spec(blob_count=0)
        cls.free = inflate_membrane(cls.spec)
        cls.obstacle = place_obstacle(cls.spec.object, cls.free, depth=0.010)
        cls.pressed, _ = press_object(cls.free, cls.obstacle)

    def test_membrane_is_transparent_without_an_object(self):
        depth, rgb, blobs = render_proximity_depth(self.pressed, None, self.spec)
        self.assertFalse(depth.valid.any())
        self.assertFalse(blobs.any())
        np.testing.assert_array_equal(rgb.data, RgbImage.filled(160, 120, hsv_to_rgb(MEMBRANE_COLOUR_HSV)).data)

    def test_object_pixels_carry_object_colour(self):
        depth, rgb, _ = render_proximity_depth(self.pressed, self.obstacle, self.spec)
        hue = rgb.to_hsv()[..., 0]
        self.assertTrue(depth.valid.any())
        np.testing.assert_allclose(hue[depth.valid], OBJECT_COLOUR_HSV[0], atol=1.0)
        np.testing.assert_allclose(hue[~depth.valid], MEMBRANE_COLOUR_HSV[0], atol=1.0)

    def test_cube_bottom_on_the_optical_axis(self):
        depth, _, _ = render_proximity_depth(self.pressed, self.obstacle, self.spec)
        centre = depth.data[int(SMALL_CAMERA.cy), int(SMALL_CAMERA.cx)]
        self.assertAlmostEqual(float(centre), self.obstacle.z_bottom, delta=1e-12)

    def test_blobs_add_near_returns(self):
        spec = small_scene_spec(blob_count=2)
        depth, _, blobs = render_proximity_depth(self.pressed, self.obstacle, spec)
        self.assertTrue(blobs.any())
        values = depth.data[blobs]
        self.assertTrue(((values >= BLOB_DEPTH_RANGE[0]) & (values <= BLOB_DEPTH_RANGE[1])).all())

    def test_colour_round_trip(self):
        self.assertAlmostEqual(hue_of(hsv_to_rgb(MEMBRANE_COLOUR_HSV)), MEMBRANE_COLOUR_HSV[0], delta=1.0)
        self.assertAlmostEqual(hue_of(hsv_to_rgb(OBJECT_COLOUR_HSV)), OBJECT_COLOUR_HSV[0], delta=1.0)


if __name__ == '__main__':
    unittest.main()
