# contact_fusion/baselines/thresholding.py
"""Single-modality baselines that compare a frame against the uncontacted reference."""

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from contact_fusion.errors import ConfigError
from contact_fusion.geometry.depth import DepthImage, PinholeIntrinsics, deproject
from contact_fusion.geometry.point_cloud import ContactPatch
from contact_fusion.models import ThresholdConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceState:
    """The inflated membrane with nothing touching it, seen by both cameras."""
    tactile: DepthImage
    proximity: DepthImage
    pressure: float

    def __post_init__(self):
        if not self.pressure > 0:
            raise ConfigError(f"Reference pressure must be > 0, got {self.pressure}")


def _patch(depth: DepthImage, selected: np.ndarray, intrinsics: PinholeIntrinsics, source: str,
           timestamp: float, started: float, diagnostics: dict) -> ContactPatch:
    cloud = deproject(depth.masked(selected), intrinsics)
    return ContactPatch(
        cloud=cloud,
        source=source,
        timestamp=timestamp,
        pixel_mask=selected,
        timings_ms={"total": (time.perf_counter() - started) * 1000.0},
        diagnostics=diagnostics,
    )


def tactile_deformation(d_t: DepthImage, reference: DepthImage) -> np.ndarray:
    """Reference minus observed depth where both are valid (press-in is positive), else 0."""
    if d_t.shape != reference.shape:
        raise ConfigError(f"Tactile image {d_t.shape} and reference {reference.shape} differ in size")
    valid = d_t.valid & reference.valid
    return np.where(valid, reference.data - d_t.data, 0.0)


def select_top_deformation(deformation: np.ndarray, floor: float, keep_fraction: float) -> np.ndarray:
    """Deformed pixels (above `floor`) at or above the (1 - keep_fraction) percentile of their deformation."""
    deformed = deformation > floor
    if not deformed.any():
        return deformed
    cutoff = np.percentile(deformation[deformed], 100.0 * (1.0 - keep_fraction))
    return deformed & (deformation >= cutoff)


def tactile_only(d_t: DepthImage, ref: ReferenceState, cfg: Optional[ThresholdConfig] = None,
                 intrinsics: Optional[PinholeIntrinsics] = None, timestamp: float = 0.0) -> ContactPatch:
    """Contact = the most deformed part of the tactile image, deprojected from d_t."""
    started = time.perf_counter()
    cfg = cfg or ThresholdConfig()
    intrinsics = intrinsics or PinholeIntrinsics()
    deformation = tactile_deformation(d_t, ref.tactile)
    selected = select_top_deformation(deformation, cfg.deformation_floor, cfg.keep_fraction)
    if not selected.any():
        log.debug("Tactile-only: no deformed pixels")
    return _patch(d_t, selected, intrinsics, "tactile-only", timestamp, started,
                  {"deformed_pixels": int((deformation > cfg.deformation_floor).sum())})


def proximity_only(d_p: DepthImage, ref: ReferenceState, intrinsics: Optional[PinholeIntrinsics] = None,
                   timestamp: float = 0.0) -> ContactPatch:
    """Contact = proximity returns closer to the camera than the free membrane surface."""
    started = time.perf_counter()
    intrinsics = intrinsics or PinholeIntrinsics()
    if d_p.shape != ref.proximity.shape:
        raise ConfigError(f"Proximity image {d_p.shape} and reference {ref.proximity.shape} differ in size")
    selected = d_p.valid & ref.proximity.valid & (d_p.data < ref.proximity.data)
    return _patch(d_p, selected, intrinsics, "proximity-only", timestamp, started, {})
