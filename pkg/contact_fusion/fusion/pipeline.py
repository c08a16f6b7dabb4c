# contact_fusion/fusion/pipeline.py
"""
Proximity/tactile fusion. Each frame goes through:

    align      warp the tactile depth into the proximity pixel grid
    mask       drop proximity pixels whose colour is membrane or reflection
    intersect  keep pixels where both depths agree within t * d_p
    deproject  back-project the kept proximity depths
    filter     statistical outlier removal

The patch is built from the proximity depths, so every point it holds was
seen by the proximity camera.
"""

import logging
import time
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from contact_fusion.errors import ConfigError
from contact_fusion.geometry.depth import DepthImage, Homography, RgbImage, deproject, warp_depth
from contact_fusion.geometry.point_cloud import ContactPatch, statistical_outlier_filter
from contact_fusion.models import FusionConfig, HsvRange

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FrameBundle:
    """One synchronous capture: proximity depth and RGB, tactile depth, shared timestamp."""
    proximity_depth: DepthImage
    tactile_depth: DepthImage
    proximity_rgb: RgbImage
    timestamp: float = 0.0

    def __post_init__(self):
        rgb_shape = (self.proximity_rgb.height, self.proximity_rgb.width)
        if self.proximity_depth.shape != rgb_shape:
            raise ConfigError(f"Proximity depth {self.proximity_depth.shape} and RGB {rgb_shape} differ in size")
        if self.tactile_depth.shape != self.proximity_depth.shape:
            raise ConfigError(
                f"Tactile depth {self.tactile_depth.shape} and proximity depth "
                f"{self.proximity_depth.shape} differ in size"
            )


def config_homography(cfg: FusionConfig) -> Homography:
    return Homography(np.array(cfg.homography)) if cfg.homography is not None else Homography.identity()


def align_frames(f: FrameBundle, cfg: FusionConfig) -> FrameBundle:
    """Warps the tactile depth into the proximity grid; proximity images pass through."""
    h = config_homography(cfg)
    if np.array_equal(h.matrix, np.eye(3)):
        return f
    aligned = warp_depth(f.tactile_depth, h, (f.proximity_depth.width, f.proximity_depth.height))
    return replace(f, tactile_depth=aligned)


def _in_range(hsv: np.ndarray, r: HsvRange) -> np.ndarray:
    hue, sat, val = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    return ((hue >= r.hue_min) & (hue <= r.hue_max)
            & (sat >= r.sat_min) & (sat <= r.sat_max)
            & (val >= r.val_min) & (val <= r.val_max))


def proximity_mask(rgb: RgbImage, cfg: FusionConfig) -> np.ndarray:
    """True where a proximity pixel is kept, i.e. its colour falls in none of the masked ranges."""
    hsv = rgb.to_hsv()
    masked = np.zeros(hsv.shape[:2], dtype=bool)
    for r in cfg.mask_ranges:
        masked |= _in_range(hsv, r)
    return ~masked


def intersect(d_p: DepthImage, d_t: DepthImage, t: float) -> np.ndarray:
    """Pixels where both depths are valid and |d_p - d_t| <= t |d_p|."""
    if d_p.shape != d_t.shape:
        raise ConfigError(f"Cannot intersect depth images of shapes {d_p.shape} and {d_t.shape}")
    p, q = d_p.data, d_t.data
    return (p > 0) & (q > 0) & (np.abs(p - q) <= t * np.abs(p))


def estimate_contact_patch(f: FrameBundle, cfg: FusionConfig, mask: Optional[np.ndarray] = None) -> ContactPatch:
    """
    Full fusion for one frame. `mask` overrides the colour mask (True = keep),
    which lets callers share a mask between algorithms.
    """
    timings: dict[str, float] = {}
    clock = time.perf_counter()

    def lap(stage: str) -> None:
        nonlocal clock
        now = time.perf_counter()
        timings[stage] = (now - clock) * 1000.0
        clock = now

    aligned = align_frames(f, cfg)
    lap("align")

    d_p = aligned.proximity_depth
    if cfg.apply_mask:
        keep = mask if mask is not None else proximity_mask(aligned.proximity_rgb, cfg)
        d_p = d_p.masked(keep)
    lap("mask")

    contact = intersect(d_p, aligned.tactile_depth, cfg.tolerance)
    lap("intersect")

    cloud = deproject(d_p.masked(contact), cfg.intrinsics)
    lap("deproject")

    skipped = False
    if cfg.outlier.enabled:
        result = statistical_outlier_filter(cloud, cfg.outlier.k_neighbors, cfg.outlier.std_ratio)
        cloud, skipped = result.cloud, result.skipped
    lap("filter")

    pixel_mask = np.zeros(d_p.shape, dtype=bool)
    if cloud.pixel_index is not None:
        pixel_mask.flat[cloud.pixel_index] = True
    timings["total"] = sum(timings.values())
    log.debug(f"Fusion frame t={f.timestamp:.3f}: {int(contact.sum())} intersecting px, {len(cloud)} points, "
              f"{timings['total']:.1f} ms")
    return ContactPatch(
        cloud=cloud,
        source="fusion",
        timestamp=f.timestamp,
        pixel_mask=pixel_mask,
        timings_ms=timings,
        diagnostics={"intersection_pixels": int(contact.sum()), "outlier_filter_skipped": skipped},
    )
