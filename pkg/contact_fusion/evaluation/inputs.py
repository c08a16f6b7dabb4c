# contact_fusion/evaluation/inputs.py
"""
Adapters from a capture (a freshly simulated scene or a bundle loaded from
disk, which expose the same fields) to the inputs of each algorithm, and a
single dispatcher that runs an algorithm by name.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from contact_fusion.baselines.mechanics import mechanics_model
from contact_fusion.baselines.thresholding import ReferenceState, proximity_only, tactile_only
from contact_fusion.errors import ConfigError
from contact_fusion.fusion.pipeline import FrameBundle, config_homography, estimate_contact_patch, proximity_mask
from contact_fusion.geometry.depth import warp_depth
from contact_fusion.geometry.point_cloud import ContactPatch
from contact_fusion.models import FusionConfig, MechanicsModelConfig, ThresholdConfig
from contact_fusion.simulator.bundle import LoadedBundle
from contact_fusion.simulator.scene import SimulatedScene

log = logging.getLogger(__name__)

Capture = Union[SimulatedScene, LoadedBundle]


@dataclass(frozen=True)
class AlgorithmConfigs:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    mechanics: MechanicsModelConfig = field(default_factory=MechanicsModelConfig)


def frame_bundle(capture: Capture) -> FrameBundle:
    return FrameBundle(capture.proximity_depth, capture.tactile_depth, capture.proximity_rgb, capture.timestamp)


def fusion_config_for(capture: Capture, cfg: FusionConfig) -> FusionConfig:
    """Fills in the capture's homography and intrinsics unless the config pins its own homography."""
    update = {"intrinsics": capture.spec.proximity_camera.intrinsics}
    if cfg.homography is None:
        update["homography"] = capture.homography.to_list()
    return cfg.model_copy(update=update)


def mechanics_config_for(capture: Capture, cfg: MechanicsModelConfig) -> MechanicsModelConfig:
    """Mesh settings from `cfg`, geometry and cameras from the capture's scene."""
    return MechanicsModelConfig.for_scene(
        capture.spec,
        **cfg.model_dump(include={
            "mesh_nx", "mesh_ny", "crop_margin_cells", "regularization", "debias_regularization", "lambda_tol_rel",
            "contact_threshold", "min_observed_fraction", "kkt_tolerance", "max_refinement_iterations",
            "osqp_max_iter",
        }),
    )


def aligned_reference(capture: Capture, cfg: FusionConfig) -> ReferenceState:
    """Reference state in the proximity pixel grid (tactile reference warped like the live frame)."""
    h = config_homography(cfg)
    proximity = capture.reference_proximity
    tactile = warp_depth(capture.reference_tactile, h, (proximity.width, proximity.height))
    return ReferenceState(tactile=tactile, proximity=proximity, pressure=capture.pressure)


def run_algorithm(name: str, capture: Capture, configs: Optional[AlgorithmConfigs] = None,
                  mask: Optional[np.ndarray] = None) -> ContactPatch:
    """
    Runs one algorithm on a capture. `mask` is the colour keep-mask shared by
    fusion and proximity-only; it is computed from the RGB image when absent.
    """
    configs = configs or AlgorithmConfigs()
    fusion_cfg = fusion_config_for(capture, configs.fusion)
    if mask is None and fusion_cfg.apply_mask and name in ("fusion", "proximity"):
        mask = proximity_mask(capture.proximity_rgb, fusion_cfg)

    started = time.perf_counter()
    if name == "fusion":
        patch = estimate_contact_patch(frame_bundle(capture), fusion_cfg, mask)
    elif name == "tactile":
        h = config_homography(fusion_cfg)
        d_p = capture.proximity_depth
        d_t = warp_depth(capture.tactile_depth, h, (d_p.width, d_p.height))
        patch = tactile_only(d_t, aligned_reference(capture, fusion_cfg), configs.thresholds,
                             fusion_cfg.intrinsics, capture.timestamp)
    elif name == "proximity":
        d_p = capture.proximity_depth.masked(mask) if fusion_cfg.apply_mask else capture.proximity_depth
        reference = ReferenceState(tactile=capture.reference_tactile, proximity=capture.reference_proximity,
                                   pressure=capture.pressure)
        patch = proximity_only(d_p, reference, fusion_cfg.intrinsics, capture.timestamp)
    elif name == "mechanics":
        patch = mechanics_model(capture.tactile_depth, capture.pressure,
                                mechanics_config_for(capture, configs.mechanics), capture.timestamp)
    else:
        raise ConfigError(f"Unknown algorithm '{name}'")
    patch.timings_ms["wall"] = (time.perf_counter() - started) * 1000.0
    return patch
