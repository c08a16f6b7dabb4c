# contact_fusion/tests/test_applications.py
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
from hypothesis import given, settings as hypothesis_settings, strategies as st

from contact_fusion.applications.demos import cup_model_cloud, demo_for, run_demo
from contact_fusion.applications.pose_tracking import PoseTracker, icp_track
from contact_fusion.applications.tray_angle import pca_angle, wrap_half_turn, write_angle_stream
from contact_fusion.errors import ConfigError, DataError
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud
from contact_fusion.geometry.registration import make_transform, rotation_about_z, yaw_degrees
from contact_fusion.models import DemoConfig, PoseTrackDemoConfig, TrayAngleDemoConfig, VariedStiffnessDemoConfig
from contact_fusion.simulator.obstacles import Cup
from contact_fusion.tests.scenes import SMALL_MEMBRANE


def tray_edge(n_long: int = 40, n_short: int = 5) -> np.ndarray:
    """Points on a 90 x 10 mm strip along x at 0.3 m."""
    xx, yy = np.meshgrid(np.linspace(-0.045, 0.045, n_long), np.linspace(-0.005, 0.005, n_short))
    return np.column_stack((xx.ravel(), yy.ravel(), np.full(xx.size, 0.3)))


def patch_of(points: np.ndarray, timestamp: float = 0.0) -> ContactPatch:
    return ContactPatch(PointCloud(points), "fusion", timestamp)


def rotated(points: np.ndarray, yaw_deg: float) -> np.ndarray:
    return points @ rotation_about_z(yaw_deg).T


class TestTrayAngle(unittest.TestCase):

    def test_axis_aligned_strip_reads_zero(self):
        estimate = pca_angle(patch_of(tray_edge()))
        self.assertAlmostEqual(estimate.angle_deg, 0.0, delta=1e-6)
        self.assertEqual(estimate.points, 200)
        self.assertGreater(estimate.eigen_ratio, 10.0)

    def test_yawed_strip_reads_the_negated_yaw_under_noise(self):
        rng = np.random.default_rng(17)
        points = rotated(tray_edge(), -17.0) + rng.normal(0.0, 0.0005, size=(200, 3))
        self.assertAlmostEqual(pca_angle(patch_of(points)).angle_deg, 17.0, delta=0.5)

    @hypothesis_settings(max_examples=40, deadline=None)
    @given(yaw=st.floats(-85.0, 85.0))
    def test_rotating_the_patch_shifts_the_angle(self, yaw):
        angle = pca_angle(patch_of(rotated(tray_edge(), yaw))).angle_deg
        self.assertAlmostEqual(wrap_half_turn(angle + yaw), 0.0, delta=1e-6)

    def test_round_patch_has_no_orientation(self):
        xx, yy = np.meshgrid(np.linspace(-0.02, 0.02, 21), np.linspace(-0.02, 0.02, 21))
        disc = np.hypot(xx, yy) <= 0.02
        points = np.column_stack((xx[disc], yy[disc], np.full(int(disc.sum()), 0.3)))
        with self.assertRaises(DataError):
            pca_angle(patch_of(points))

    def test_too_few_points(self):
        with self.assertRaises(DataError) as ctx:
            pca_angle(patch_of(tray_edge()[:9]))
        self.assertIn("Insufficient data", str(ctx.exception))

    def test_wrap_half_turn(self):
        self.assertEqual(wrap_half_turn(-90.0), 90.0)
        self.assertEqual(wrap_half_turn(180.0), 0.0)
        self.assertAlmostEqual(wrap_half_turn(100.0), -80.0)

    def test_angle_stream_is_line_delimited_json(self):
        estimates = [pca_angle(patch_of(tray_edge(), timestamp=t)) for t in (0.0, 1 / 29)]
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "angles.jsonl"
            write_angle_stream(path, estimates)
            lines = path.read_text().splitlines()
        self.assertEqual(len(lines), 2)
        self.assertAlmostEqual(json.loads(lines[1])["timestamp"], 1 / 29)


class TestPoseTracking(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.model = cup_model_cloud(Cup())
        bottom = cls.model.points[cls.model.points[:, 2] <= 1e-12]
        cls.bottom = bottom
        cls.pose = make_transform(rotation_about_z(10.0), (0.010, 0.020, 0.300))

    def _observed(self, pose: np.ndarray) -> np.ndarray:
        return self.bottom @ pose[:3, :3].T + pose[:3, 3]

    def test_static_object_keeps_its_pose(self):
        patches = [patch_of(self._observed(self.pose), timestamp=k / 30) for k in range(3)]
        track = icp_track(patches, self.model, self.pose)
        self.assertEqual(len(track), 3)
        self.assertEqual(track.unstable_frames, [])
        for transform in track.transforms:
            np.testing.assert_allclose(transform, self.pose, atol=1e-9)

    def test_recovers_a_small_shift(self):
        moved = make_transform(rotation_about_z(10.0), (0.0105, 0.020, 0.300))
        track = icp_track([patch_of(self._observed(moved))], self.model, self.pose)
        np.testing.assert_allclose(track.transforms[0], moved, atol=1e-6)

    def test_short_frame_holds_the_previous_pose(self):
        patches = [patch_of(self._observed(self.pose)), patch_of(self._observed(self.pose)[:5], timestamp=0.1)]
        track = icp_track(patches, self.model, self.pose)
        self.assertEqual(track.unstable_frames, [1])
        np.testing.assert_array_equal(track.transforms[1], track.transforms[0])

    def test_first_frame_must_initialise(self):
        with self.assertRaises(DataError) as ctx:
            icp_track([patch_of(self._observed(self.pose)[:5])], self.model, self.pose)
        self.assertIn("Initialization failed", str(ctx.exception))

    def test_invalid_model_or_initial_pose(self):
        with self.assertRaises(ConfigError):
            PoseTracker(PointCloud.empty(), np.eye(4))
        with self.assertRaises(ConfigError):
            PoseTracker(self.model, np.eye(3))

    def test_follows_a_cup_turning_about_its_handle(self):
        pivot = np.array([Cup().handle_centre, 0.0, 0.0])
        rng = np.random.default_rng(8)
        poses, patches = [], []
        for k, yaw in enumerate(np.linspace(0.0, 45.0, 16)):
            rotation = rotation_about_z(yaw)
            pose = make_transform(rotation, pivot - rotation @ pivot + (0.0, 0.0, 0.300))
            poses.append(pose)
            observed = self._observed(pose) + rng.normal(0.0, 2e-4, self.bottom.shape)
            patches.append(patch_of(observed, timestamp=k / 30))
        track = icp_track(patches, self.model, poses[0])
        self.assertEqual(track.unstable_frames, [])
        self.assertLessEqual(abs(yaw_degrees(track.transforms[-1]) - 45.0), 3.0)

    def test_static_object_does_not_drift(self):
        rng = np.random.default_rng(9)
        patches = [patch_of(self._observed(self.pose) + rng.normal(0.0, 5e-4, self.bottom.shape), timestamp=k / 30)
                   for k in range(150)]
        track = icp_track(patches, self.model, self.pose)
        last = track.transforms[-1]
        self.assertLessEqual(abs(yaw_degrees(last) - yaw_degrees(self.pose)), 0.5)
        self.assertLessEqual(float(np.linalg.norm(last[:3, 3] - self.pose[:3, 3])), 0.001)

    def test_track_csv_columns(self):
        track = icp_track([patch_of(self._observed(self.pose))], self.model, self.pose)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "track.csv"
            track.write_csv(path)
            header = path.read_text().splitlines()[0]
        self.assertEqual(header, "timestamp,tx,ty,tz,qx,qy,qz,qw,fitness,rmse_mm,stable")


class TestDemos(unittest.TestCase):

    def test_every_demo_runs_on_a_coarse_membrane(self):
        cfg = DemoConfig(membrane=SMALL_MEMBRANE,
                         varied_stiffness=VariedStiffnessDemoConfig(regime="low"),
                         tray_angle=TrayAngleDemoConfig(steps=2, static_frames=2),
                         pose_track=PoseTrackDemoConfig(frames=2, total_yaw_deg=3.0))
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("varied-stiffness", "tray-angle", "pose-track"):
                with self.subTest(demo=name):
                    result = run_demo(name, cfg, Path(tmp) / name)
                    self.assertEqual(result.name, name)
                    self.assertTrue(result.outputs)
                    self.assertTrue(all(path.is_file() for path in result.outputs))

    def test_unknown_demo_lists_valid_names(self):
        with self.assertRaises(ConfigError) as ctx:
            demo_for("juggling")
        self.assertIn("tray-angle", str(ctx.exception))

    def test_cup_model_includes_rim_handle_and_walls(self):
        cup = Cup()
        points = cup_model_cloud(cup).points
        bottom = points[points[:, 2] == 0.0]
        radius = np.hypot(bottom[:, 0], bottom[:, 1])
        self.assertTrue(((radius >= cup.inner_radius) & (radius <= cup.outer_radius)).any())
        self.assertTrue((np.abs(bottom[:, 0] - cup.handle_centre) < 0.002).any())
        self.assertGreater(points[:, 2].max(), 0.015)
        self.assertFalse(np.isclose(points[:, 2], cup.base_height).any())


if __name__ == '__main__':
    unittest.main()
