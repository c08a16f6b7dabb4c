# contact_fusion/simulator/rendering.py
"""
Virtual cameras. The tactile camera sees the membrane height field from
below; the proximity camera looks through the membrane and sees only the
object, plus spurious near returns inside internal-reflection blobs that also
tint the RGB image.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np

from contact_fusion.errors import SceneError
from contact_fusion.geometry.depth import INVALID_DEPTH, DepthImage, PinholeIntrinsics, RgbImage
from contact_fusion.models import CameraSpec, NoiseSpec, SceneSpec
from contact_fusion.simulator.membrane import MembraneState
from contact_fusion.simulator.obstacles import RigidObstacle

log = logging.getLogger(__name__)

# RNG streams derived from the scene seed
TACTILE_STREAM = 1
PROXIMITY_STREAM = 2
BLOB_STREAM = 3

MARCH_STEPS = 64
BISECTION_STEPS = 30

PROXIMITY_RANGE = 0.100  # beyond the free-membrane apex

# HSV in degrees / unit saturation and value
MEMBRANE_COLOUR_HSV = (270.0, 0.6, 0.7)
OBJECT_COLOUR_HSV = (120.0, 0.6, 0.7)
REFLECTION_COLOUR_HSV = (30.0, 0.6, 0.7)

BLOB_SEMI_AXES_PX = (8, 25)
BLOB_DEPTH_RANGE = (0.10, 0.18)
BLOB_INNER_EXCLUSION = 0.35  # fraction of the half-diagonal kept free of blobs
BLOB_MAX_ATTEMPTS = 1000


def noise_rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def hsv_to_rgb(hsv: tuple[float, float, float]) -> tuple[int, int, int]:
    pixel = np.array([[hsv]], dtype=np.float32)
    rgb = cv2.cvtColor(pixel, cv2.COLOR_HSV2RGB)[0, 0]
    return tuple(int(v) for v in np.clip(np.rint(rgb * 255.0), 0, 255))


def render_membrane_depth(m: MembraneState, camera: CameraSpec, sigma: float = 0.0,
                          rng: Optional[np.random.Generator] = None) -> DepthImage:
    """
    z-depth of the membrane along every pixel ray from `camera`. Rays are
    marched over the height range of the field and the first crossing is
    refined by bisection; rays that leave the membrane before meeting it are
    invalid.
    """
    cx, cy, cz = (float(v) for v in camera.position)
    if cz >= m.boundary_height:
        raise SceneError(f"Camera at z={cz:.4f} m is inside the membrane volume (z_b={m.boundary_height:.4f} m)")

    a, b = camera.intrinsics.pixel_rays()
    z_min, z_max = float(m.z.min()), float(m.z.max())

    def below(t: np.ndarray) -> np.ndarray:
        # NaN (outside the membrane) counts as a hit
        surface = m.height_at(cx + a * t, cy + b * t)
        return cz + t < surface

    t_lo = np.full(a.shape, z_min - cz)
    t_hi = np.full(a.shape, z_max - cz)
    found = ~below(t_lo)
    hi = np.where(found, t_lo, t_hi)
    lo = t_lo.copy()
    for t in np.linspace(z_min - cz, z_max - cz, MARCH_STEPS)[1:]:
        if found.all():
            break
        step = np.full(a.shape, t)
        hit = ~found & ~below(step)
        hi = np.where(hit, step, hi)
        found |= hit
        lo = np.where(found, lo, step)

    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        under = below(mid)
        lo = np.where(under, mid, lo)
        hi = np.where(under, hi, mid)

    inside = m.grid.contains(cx + a * hi, cy + b * hi)
    depth = np.where(inside, hi, INVALID_DEPTH)
    if sigma > 0:
        rng = rng if rng is not None else np.random.default_rng()
        depth = np.where(inside, depth + rng.normal(0.0, sigma, depth.shape), INVALID_DEPTH)
    return DepthImage(depth)


def render_tactile_depth(m: MembraneState, spec: SceneSpec) -> DepthImage:
    """Tactile depth with seeded Gaussian noise on valid pixels."""
    return render_membrane_depth(m, spec.tactile_camera, spec.noise.tactile_sigma,
                                 noise_rng(spec.noise.seed, TACTILE_STREAM))


@dataclass(frozen=True)
class ReflectionBlob:
    centre: tuple[int, int]
    axes: tuple[int, int]
    angle_deg: float
    depth: float


def _blob_mask(shape: tuple[int, int], blob: ReflectionBlob) -> np.ndarray:
    canvas = np.zeros(shape, dtype=np.uint8)
    cv2.ellipse(canvas, blob.centre, blob.axes, blob.angle_deg, 0, 360, 255, thickness=-1)
    return canvas > 0


def place_reflection_blobs(intrinsics: PinholeIntrinsics, noise: NoiseSpec) -> tuple[list[ReflectionBlob], np.ndarray]:
    """Non-overlapping elliptical blobs in the outer part of the image; returns them with their union mask."""
    width, height = intrinsics.width, intrinsics.height
    shape = (height, width)
    rng = noise_rng(noise.seed, BLOB_STREAM)
    half_diagonal = 0.5 * np.hypot(width, height)
    occupied = np.zeros(shape, dtype=bool)
    blobs: list[ReflectionBlob] = []

    attempts = 0
    while len(blobs) < noise.blob_count:
        attempts += 1
        if attempts > BLOB_MAX_ATTEMPTS:
            raise SceneError(f"Could not place {noise.blob_count} reflection blobs in a {width}x{height} image")
        u = int(rng.integers(0, width))
        v = int(rng.integers(0, height))
        axes = (int(rng.integers(BLOB_SEMI_AXES_PX[0], BLOB_SEMI_AXES_PX[1] + 1)),
                int(rng.integers(BLOB_SEMI_AXES_PX[0], BLOB_SEMI_AXES_PX[1] + 1)))
        angle = float(rng.uniform(0.0, 180.0))
        depth = float(rng.uniform(*BLOB_DEPTH_RANGE))
        if np.hypot(u - width / 2, v - height / 2) < BLOB_INNER_EXCLUSION * half_diagonal:
            continue
        blob = ReflectionBlob((u, v), axes, angle, depth)
        mask = _blob_mask(shape, blob)
        if not mask.any():
            continue
        # keep a 2 px gap so blobs stay separate under 8-connectivity
        grown = cv2.dilate(mask.astype(np.uint8), np.ones((5, 5), np.uint8)) > 0
        if (grown & occupied).any():
            continue
        blobs.append(blob)
        occupied |= mask
    return blobs, occupied


def render_proximity_depth(m: MembraneState, obs: Optional[RigidObstacle],
                           spec: SceneSpec) -> tuple[DepthImage, RgbImage, np.ndarray]:
    """
    Proximity depth and RGB. Returns (depth, rgb, blob_mask); `blob_mask` marks
    the pixels carrying spurious reflection returns.
    """
    camera = spec.proximity_camera
    if float(camera.position[2]) >= m.boundary_height:
        raise SceneError("Proximity camera is inside the membrane volume")
    k = camera.intrinsics
    a, b = k.pixel_rays()
    shape = (k.height, k.width)

    depth = np.zeros(shape)
    if obs is not None:
        t = obs.ray_depth(camera.position, a, b)
        in_range = np.isfinite(t) & (float(camera.position[2]) + t <= spec.membrane.apex_height + PROXIMITY_RANGE)
        depth = np.where(in_range, t, INVALID_DEPTH)
    object_pixels = depth > INVALID_DEPTH

    blobs, blob_mask = place_reflection_blobs(k, spec.noise)
    for blob in blobs:
        depth = np.where(_blob_mask(shape, blob), blob.depth, depth)

    if spec.noise.proximity_sigma > 0:
        rng = noise_rng(spec.noise.seed, PROXIMITY_STREAM)
        noisy = depth + rng.normal(0.0, spec.noise.proximity_sigma, shape)
        depth = np.where(depth > INVALID_DEPTH, np.maximum(noisy, INVALID_DEPTH), INVALID_DEPTH)

    rgb = np.empty(shape + (3,), dtype=np.uint8)
    rgb[...] = hsv_to_rgb(MEMBRANE_COLOUR_HSV)
    rgb[object_pixels] = hsv_to_rgb(OBJECT_COLOUR_HSV)
    rgb[blob_mask] = hsv_to_rgb(REFLECTION_COLOUR_HSV)

    if blobs:
        log.debug(f"Rendered {len(blobs)} reflection blobs covering {int(blob_mask.sum())} px")
    return DepthImage(depth), RgbImage(rgb), blob_mask


def render_references(free: MembraneState, spec: SceneSpec) -> tuple[DepthImage, DepthImage]:
    """Noise-free free-membrane depth from the tactile and the proximity viewpoint."""
    return (render_membrane_depth(free, spec.tactile_camera),
            render_membrane_depth(free, spec.proximity_camera))
