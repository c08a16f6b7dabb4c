# contact_fusion/tests/test_settings_models.py
import logging
import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from contact_fusion.errors import ConfigError, MissingInputError
from contact_fusion.models import (
    DemoConfig,
    FusionConfig,
    GridConfig,
    HsvRange,
    MechanicsModelConfig,
    MembraneSpec,
    SceneSpec,
    ThresholdConfig,
    load_config,
    parse_config,
)
from contact_fusion.settings import PROJECT_ROOT, Settings

CONFIG_DIR = PROJECT_ROOT / "configs"


class TestSettings(unittest.TestCase):

    def test_log_level_names(self):
        self.assertEqual(Settings(LOG="WARNING").LOG, "warn")
        self.assertEqual(Settings(LOG=" Debug ").log_level, logging.DEBUG)
        self.assertEqual(Settings(LOG="error").log_level, logging.ERROR)

    def test_unknown_log_level_falls_back_to_warn(self):
        self.assertEqual(Settings(LOG="chatty").LOG, "warn")

    def test_log_level_from_environment(self):
        with patch.dict(os.environ, {"CONTACT_FUSION_LOG": "info"}):
            self.assertEqual(Settings().log_level, logging.INFO)

    def test_default_jobs(self):
        self.assertEqual(Settings(JOBS=3).default_jobs, 3)
        with patch("contact_fusion.settings.os.cpu_count", return_value=12):
            self.assertEqual(Settings(JOBS=0).default_jobs, 12)
        with patch("contact_fusion.settings.os.cpu_count", return_value=None):
            self.assertEqual(Settings(JOBS=0).default_jobs, 1)


class TestConfigParsing(unittest.TestCase):

    def test_field_errors_name_the_offending_path(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config({"membrane": {"nx": 4}, "object": {"primitive": "teapot"}}, SceneSpec, "scene.toml")
        paths = [message.split(":")[0] for message in ctx.exception.field_errors]
        self.assertIn("membrane.nx", paths)
        self.assertIn("object.primitive", paths)
        self.assertIn("scene.toml", str(ctx.exception))

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(ConfigError):
            parse_config({"fusion_tolerance": 0.05}, FusionConfig)

    def test_cross_field_rules(self):
        with self.assertRaises(ConfigError):
            parse_config({"hue_min": 50, "hue_max": 10}, HsvRange)
        with self.assertRaises(ConfigError):
            parse_config({"apex_height": 0.2}, MembraneSpec)
        self.assertEqual(parse_config({"apex_height": 0.2, "pressure": 0.0}, MembraneSpec).pressure, 0.0)

    def test_seed_override_keeps_the_rest_of_the_noise(self):
        spec = parse_config({"noise": {"seed": 1, "blob_count": 0}}, SceneSpec).with_seed(9)
        self.assertEqual((spec.noise.seed, spec.noise.blob_count), (9, 0))

    def test_mechanics_config_follows_the_scene(self):
        spec = parse_config({"membrane": {"nx": 64, "ny": 48, "tension": 2.0}}, SceneSpec)
        cfg = MechanicsModelConfig.for_scene(spec, mesh_nx=20)
        self.assertEqual(cfg.tension, 2.0)
        self.assertEqual(cfg.mesh_nx, 20)
        self.assertAlmostEqual(cfg.crop_cell_size[0], spec.membrane.hx)
        self.assertEqual(cfg.tactile_camera, spec.tactile_camera)


class TestLoadConfig(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.tmp = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def test_missing_file(self):
        with self.assertRaises(MissingInputError) as ctx:
            load_config(self.tmp / "absent.toml", SceneSpec)
        self.assertEqual(ctx.exception.exit_code, 4)

    def test_malformed_toml(self):
        path = self.tmp / "bad.toml"
        path.write_text("tolerance = = 1")
        with self.assertRaises(ConfigError):
            load_config(path, FusionConfig)

    def test_missing_section_uses_defaults(self):
        path = self.tmp / "only_fusion.toml"
        path.write_text("[fusion]\ntolerance = 0.05\n")
        self.assertEqual(load_config(path, FusionConfig, "fusion").tolerance, 0.05)
        self.assertEqual(load_config(path, ThresholdConfig, "thresholds"), ThresholdConfig())

    def test_shipped_configs_load(self):
        self.assertEqual(load_config(CONFIG_DIR / "scene_cube_medium.toml", SceneSpec).press.regime, "medium")
        self.assertEqual(load_config(CONFIG_DIR / "scene_free_membrane.toml", SceneSpec).press.hover, 0.005)
        self.assertEqual(load_config(CONFIG_DIR / "grid.toml", GridConfig).seeds, [0, 1, 2, 3, 4])
        self.assertEqual(load_config(CONFIG_DIR / "demo.toml", DemoConfig).pose_track.frames, 16)
        self.assertEqual(load_config(CONFIG_DIR / "algorithms.toml", MechanicsModelConfig, "mechanics").mesh_nx, 36)


if __name__ == '__main__':
    unittest.main()
