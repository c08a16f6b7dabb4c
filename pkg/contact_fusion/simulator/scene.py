# contact_fusion/simulator/scene.py
"""
Scene assembly: strain regimes, press-depth resolution and the full
simulated capture (free and pressed membrane, both depth images, RGB,
reference renders and the contact oracle).
"""

import logging
import time
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from contact_fusion.geometry.depth import DepthImage, Homography, RgbImage
from contact_fusion.geometry.point_cloud import ContactPatch
from contact_fusion.models import (
    APEX_HEIGHT,
    HIGH_STRAIN_APEX_HEIGHT,
    MembraneSpec,
    NoiseSpec,
    ObjectSpec,
    PressSpec,
    SceneSpec,
)
from contact_fusion.simulator.membrane import MembraneGrid, MembraneState, inflate_membrane
from contact_fusion.simulator.obstacles import RigidObstacle, place_obstacle
from contact_fusion.simulator.rendering import render_proximity_depth, render_references, render_tactile_depth
from contact_fusion.simulator.solver import ContactOracle, press_object
from contact_fusion.simulator.strain import displacement_for_strain

log = logging.getLogger(__name__)


class RegimeSetting(NamedTuple):
    strain: float
    apex_height: float
    x_offset: float
    nominal_depth: float  # reference press depth, metres; first bisection probe


REGIME_TARGETS: dict[str, RegimeSetting] = {
    "low": RegimeSetting(0.10, APEX_HEIGHT, 0.0, 0.004),
    "medium": RegimeSetting(0.60, APEX_HEIGHT, 0.0, 0.024),
    "high": RegimeSetting(1.00, HIGH_STRAIN_APEX_HEIGHT, 0.070, 0.120),
}


def scene_for_cell(primitive: str, regime: str, seed: int, membrane: Optional[MembraneSpec] = None,
                   noise: Optional[NoiseSpec] = None, yaw_deg: float = 0.0) -> SceneSpec:
    """Scene spec for one evaluation cell: the regime fixes apex height and object pose."""
    setting = REGIME_TARGETS[regime]
    membrane = (membrane or MembraneSpec()).model_copy(update={"apex_height": setting.apex_height})
    noise = (noise or NoiseSpec()).model_copy(update={"seed": seed})
    return SceneSpec(
        object=ObjectSpec(primitive=primitive, x=setting.x_offset, y=0.0, yaw_deg=yaw_deg),
        press=PressSpec(regime=regime),
        membrane=membrane,
        noise=noise,
    )


def resolve_press_depth(spec: SceneSpec) -> float:
    """Explicit press depth, otherwise the depth that reaches the regime's strain target."""
    if spec.press.hover > 0:
        return 0.0
    if spec.press.depth is not None:
        return spec.press.depth
    setting = REGIME_TARGETS[spec.press.regime]
    return displacement_for_strain(setting.strain, spec, initial_guess=setting.nominal_depth)


def simulator_homography(spec: SceneSpec) -> Homography:
    """Tactile-to-proximity pixel map, exact for points on the apex plane."""
    tactile = np.asarray(spec.tactile_camera.position, dtype=np.float64)
    proximity = np.asarray(spec.proximity_camera.position, dtype=np.float64)
    plane_depth = spec.membrane.apex_height - proximity[2]
    return Homography.from_camera_offset(spec.proximity_camera.intrinsics, tactile - proximity, plane_depth)


@dataclass(frozen=True, eq=False)
class SimulatedScene:
    spec: SceneSpec
    free: MembraneState
    pressed: MembraneState
    obstacle: RigidObstacle
    oracle: ContactOracle
    press_depth: float
    proximity_depth: DepthImage
    proximity_rgb: RgbImage
    blob_mask: np.ndarray
    tactile_depth: DepthImage
    reference_tactile: DepthImage
    reference_proximity: DepthImage
    homography: Homography
    timestamp: float

    def ground_truth_patch(self) -> ContactPatch:
        return ContactPatch(self.oracle.cloud, "ground-truth", self.timestamp,
                            diagnostics={"nodes": self.oracle.node_count})

    @property
    def grid(self) -> MembraneGrid:
        return self.free.grid

    @property
    def pressure(self) -> float:
        return self.free.pressure

    @property
    def oracle_mask(self) -> np.ndarray:
        return self.oracle.mask

    @property
    def proximity_position(self) -> tuple[float, float, float]:
        return self.spec.proximity_camera.position

    @property
    def tactile_position(self) -> tuple[float, float, float]:
        return self.spec.tactile_camera.position


def generate_scene(spec: SceneSpec, timestamp: float = 0.0) -> SimulatedScene:
    """Runs the full simulation for one scene."""
    start = time.perf_counter()
    free = inflate_membrane(spec)
    depth = resolve_press_depth(spec)
    obstacle = place_obstacle(spec.object, free, depth, spec.press.hover)
    pressed, oracle = press_object(free, obstacle, spec.solver, spec.proximity_camera.position)
    tactile = render_tactile_depth(pressed, spec)
    proximity, rgb, blobs = render_proximity_depth(pressed, obstacle, spec)
    reference_tactile, reference_proximity = render_references(free, spec)
    log.info(f"Generated {spec.object.primitive} scene (regime {spec.press.regime}, seed {spec.noise.seed}): "
             f"press {depth * 1000:.1f} mm, {oracle.node_count} contact nodes, "
             f"{(time.perf_counter() - start) * 1000:.0f} ms")
    return SimulatedScene(
        spec=spec,
        free=free,
        pressed=pressed,
        obstacle=obstacle,
        oracle=oracle,
        press_depth=depth,
        proximity_depth=proximity,
        proximity_rgb=rgb,
        blob_mask=blobs,
        tactile_depth=tactile,
        reference_tactile=reference_tactile,
        reference_proximity=reference_proximity,
        homography=simulator_homography(spec),
        timestamp=timestamp,
    )
