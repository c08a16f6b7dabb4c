# contact_fusion/tests/scenes.py
"""Small, fast scene builders shared by the test modules."""

from typing import Optional

from contact_fusion.geometry.depth import PinholeIntrinsics
from contact_fusion.models import CameraSpec, FusionConfig, MembraneSpec, NoiseSpec, PressSpec, SceneSpec
from contact_fusion.simulator.scene import scene_for_cell

# 160x120 at f=100 px covers the whole membrane from 0.3 m
SMALL_CAMERA = PinholeIntrinsics(fx=100.0, fy=100.0, cx=80.0, cy=60.0, width=160, height=120)
SMALL_MEMBRANE = MembraneSpec(nx=49, ny=33)


def small_scene_spec(primitive: str = "cube", regime: str = "medium", seed: int = 0,
                     depth: Optional[float] = 0.010, hover: float = 0.0,
                     membrane: Optional[MembraneSpec] = None, **noise) -> SceneSpec:
    """Scene on a coarse grid with small cameras. `depth=None` resolves the regime's strain target."""
    spec = scene_for_cell(primitive, regime, seed, membrane or SMALL_MEMBRANE, NoiseSpec(seed=seed, **noise))
    return spec.model_copy(update={
        "press": PressSpec(regime=regime, depth=depth, hover=hover),
        "proximity_camera": CameraSpec(intrinsics=SMALL_CAMERA),
        "tactile_camera": CameraSpec(intrinsics=SMALL_CAMERA, position=(0.010, 0.0, 0.0)),
    })


def small_fusion_config(**overrides) -> FusionConfig:
    return FusionConfig(intrinsics=SMALL_CAMERA, **overrides)
