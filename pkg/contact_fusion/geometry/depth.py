# contact_fusion/geometry/depth.py
"""
Depth and colour image containers, the pinhole camera model and the
homography warp used to bring the tactile image into the proximity grid.

Depth values are z-depths in metres along the optical axis. 0.0 is the
invalid-pixel sentinel everywhere in the package.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from contact_fusion.errors import ConfigError
from contact_fusion.geometry.point_cloud import PointCloud

log = logging.getLogger(__name__)

INVALID_DEPTH = 0.0


class PinholeIntrinsics(BaseModel):
    """Pinhole camera model. Lens distortion is not modelled."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    fx: float = Field(default=400.0, gt=0, description="Focal length along u, pixels.")
    fy: float = Field(default=400.0, gt=0, description="Focal length along v, pixels.")
    cx: float = Field(default=320.0, ge=0, description="Principal point u, pixels.")
    cy: float = Field(default=240.0, ge=0, description="Principal point v, pixels.")
    width: int = Field(default=640, gt=0)
    height: int = Field(default=480, gt=0)

    @model_validator(mode="after")
    def principal_point_in_image(self):
        if not (self.cx < self.width and self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )
        return self

    def pixel_rays(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-pixel ray slopes (x/z, y/z), each of shape (height, width)."""
        u = np.arange(self.width, dtype=np.float64)
        v = np.arange(self.height, dtype=np.float64)
        uu, vv = np.meshgrid(u, v)
        return (uu - self.cx) / self.fx, (vv - self.cy) / self.fy

    def project(self, points: np.ndarray) -> np.ndarray:
        """Projects (N, 3) camera-frame points to (N, 2) pixel coordinates (u, v)."""
        points = np.asarray(points, dtype=np.float64)
        z = points[:, 2]
        return np.column_stack((self.fx * points[:, 0] / z + self.cx,
                                self.fy * points[:, 1] / z + self.cy))


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True)
class DepthImage:
    """Row-major grid of z-depths in metres, shape (height, width)."""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 2:
            raise ConfigError(f"Depth image must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ConfigError("Depth image contains non-finite values; use 0.0 for invalid pixels")
        if np.any(data < 0):
            raise ConfigError("Depth image contains negative ranges")
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def from_flat(cls, width: int, height: int, values: Sequence[float]) -> "DepthImage":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ConfigError(f"Expected {width * height} depth values for {width}x{height}, got {values.size}")
        return cls(values.reshape(height, width))

    @classmethod
    def invalid(cls, width: int, height: int) -> "DepthImage":
        return cls(np.zeros((height, width)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def valid(self) -> np.ndarray:
        return self.data > INVALID_DEPTH

    def masked(self, keep: np.ndarray) -> "DepthImage":
        """Invalidates every pixel where `keep` is False."""
        if keep.shape != self.shape:
            raise ConfigError(f"Mask shape {keep.shape} does not match depth image {self.shape}")
        return DepthImage(np.where(keep, self.data, INVALID_DEPTH))


@dataclass(frozen=True)
class RgbImage:
    """8-bit colour image, shape (height, width, 3), channels in R, G, B order."""
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=np.uint8, copy=True)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ConfigError(f"RGB image must have shape (H, W, 3), got {data.shape}")
        object.__setattr__(self, "data", _readonly(data))

    @classmethod
    def filled(cls, width: int, height: int, rgb: tuple[int, int, int]) -> "RgbImage":
        return cls(np.broadcast_to(np.array(rgb, dtype=np.uint8), (height, width, 3)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def to_hsv(self) -> np.ndarray:
        """HSV with hue in degrees [0, 360) and saturation/value in [0, 1]."""
        rgb = self.data.astype(np.float32) / 255.0
        return cv2.cvtColor(rgb, cv2.COLOR_RGB2HSV)


@dataclass(frozen=True)
class Homography:
    """Projective map between pixel grids, normalised so that H[2, 2] == 1."""
    matrix: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        if m.shape != (3, 3) or not np.all(np.isfinite(m)):
            raise ConfigError(f"Homography must be a finite 3x3 matrix, got shape {m.shape}")
        if abs(m[2, 2]) < 1e-12:
            raise ConfigError("Homography cannot be normalised: H[2,2] is zero")
        m = m / m[2, 2]
        det = np.linalg.det(m)
        if abs(det) <= 1e-9:
            raise ConfigError(f"Homography is not invertible (|det| = {abs(det):.3e})")
        object.__setattr__(self, "matrix", _readonly(m))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, du: float, dv: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, du], [0.0, 1.0, dv], [0.0, 0.0, 1.0]]))

    @classmethod
    def from_camera_offset(cls, intrinsics: PinholeIntrinsics, offset: Sequence[float],
                           plane_depth: float) -> "Homography":
        """
        Plane-induced homography for two cameras with identical intrinsics and
        parallel optical axes. `offset` is the source camera position minus the
        target camera position; the map is exact for points at `plane_depth`.
        """
        dx, dy = float(offset[0]), float(offset[1])
        return cls.translation(intrinsics.fx * dx / plane_depth, intrinsics.fy * dy / plane_depth)

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def apply(self, uv: np.ndarray) -> np.ndarray:
        """Maps (N, 2) pixel coordinates through the homography."""
        uv = np.asarray(uv, dtype=np.float64)
        homogeneous = np.column_stack((uv, np.ones(len(uv)))) @ self.matrix.T
        return homogeneous[:, :2] / homogeneous[:, 2:3]

    def to_list(self) -> list[list[float]]:
        return self.matrix.tolist()


def deproject(depth: DepthImage, k: PinholeIntrinsics) -> PointCloud:
    """Back-projects every valid pixel to a camera-frame point, in row-major pixel order."""
    if not (0 <= k.cx < depth.width and 0 <= k.cy < depth.height):
        raise ConfigError(
            f"Intrinsics principal point ({k.cx}, {k.cy}) outside the {depth.width}x{depth.height} depth image"
        )
    v, u = np.nonzero(depth.valid)
    z = depth.data[v, u]
    x = (u - k.cx) * z / k.fx
    y = (v - k.cy) * z / k.fy
    pixel_index = v.astype(np.int64) * depth.width + u
    return PointCloud(np.column_stack((x, y, z)), pixel_index=pixel_index)


def warp_depth(src: DepthImage, h: Homography, out_dims: Optional[tuple[int, int]] = None) -> DepthImage:
    """
    Resamples `src` into a new pixel grid: output (u, v) takes the source value
    at h^-1 (u, v, 1) with nearest-neighbour lookup. Out-of-bounds samples and
    invalid source pixels both come out as the invalid sentinel.
    """
    width, height = out_dims if out_dims is not None else (src.width, src.height)
    warped = cv2.warpPerspective(
        src.data,
        h.matrix,
        (int(width), int(height)),
        flags=cv2.INTER_NEAREST,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=INVALID_DEPTH,
    )
    return DepthImage(warped)
