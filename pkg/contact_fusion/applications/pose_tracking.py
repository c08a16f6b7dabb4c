# contact_fusion/applications/pose_tracking.py
"""
Frame-to-frame pose tracking of a known object model against a sequence of
contact patches. Each frame registers the patch onto the model with
point-to-plane ICP, starting from the previous pose; poses map model
coordinates into the camera frame.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import polars as pl

from contact_fusion.errors import ConfigError, DataError, ModelError
from contact_fusion.geometry import io
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud
from contact_fusion.geometry.registration import (
    estimate_normals,
    icp_point_to_plane,
    invert_transform,
    is_proper_rigid,
    orthonormalize,
    to_quaternion,
)

log = logging.getLogger(__name__)

MIN_TRACKING_POINTS = 30
MAX_CORRESPONDENCE = 0.010
FITNESS_FLOOR = 0.3


@dataclass(frozen=True)
class PoseFrame:
    timestamp: float
    transform: np.ndarray  # model -> camera
    fitness: float
    rmse_mm: float
    stable: bool
    points: int


@dataclass
class PoseTrack:
    frames: list[PoseFrame] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def transforms(self) -> list[np.ndarray]:
        return [f.transform for f in self.frames]

    @property
    def unstable_frames(self) -> list[int]:
        return [i for i, f in enumerate(self.frames) if not f.stable]

    def to_frame(self) -> pl.DataFrame:
        rows = []
        for f in self.frames:
            qx, qy, qz, qw = to_quaternion(f.transform)
            tx, ty, tz = f.transform[:3, 3]
            rows.append({
                "timestamp": f.timestamp, "tx": tx, "ty": ty, "tz": tz,
                "qx": qx, "qy": qy, "qz": qz, "qw": qw,
                "fitness": f.fitness, "rmse_mm": f.rmse_mm, "stable": f.stable,
            })
        return pl.from_dicts(rows) if rows else pl.DataFrame()

    def write_csv(self, path) -> None:
        io.write_text(path, self.to_frame().write_csv(float_precision=9))


class PoseTracker:
    """Sequential tracker for one object; feed patches in timestamp order."""

    def __init__(self, model: PointCloud, init: np.ndarray, max_correspondence: float = MAX_CORRESPONDENCE,
                 min_points: int = MIN_TRACKING_POINTS, fitness_floor: float = FITNESS_FLOOR):
        if model.is_empty:
            raise ConfigError("Pose tracking needs a non-empty object model")
        init = np.asarray(init, dtype=np.float64)
        if init.shape != (4, 4) or not is_proper_rigid(orthonormalize(init)):
            raise ConfigError("Initial pose must be a 4x4 rigid transform")
        self.model = model.points
        self.model_normals = estimate_normals(self.model)
        self.pose = orthonormalize(init)
        self.max_correspondence = max_correspondence
        self.min_points = min_points
        self.fitness_floor = fitness_floor
        self.track = PoseTrack()

    def update(self, patch: ContactPatch) -> PoseFrame:
        first = len(self.track) == 0
        n = len(patch)
        if n < self.min_points:
            if first:
                raise DataError(f"Initialization failed: first patch has {n} points, need {self.min_points}")
            log.warning(f"Frame {len(self.track)} at t={patch.timestamp:.3f}s has {n} points; holding previous pose")
            frame = PoseFrame(patch.timestamp, self.pose.copy(), 0.0, float("nan"), False, n)
            self.track.frames.append(frame)
            return frame

        # patch -> model registration, seeded with the inverse of the previous pose
        result = icp_point_to_plane(patch.points, self.model, self.model_normals,
                                    init=invert_transform(self.pose),
                                    max_correspondence=self.max_correspondence)
        if first and result.fitness < self.fitness_floor:
            raise DataError(f"Initialization failed: frame 0 fitness {result.fitness:.2f} < {self.fitness_floor}")

        pose = orthonormalize(invert_transform(result.transform))
        if not is_proper_rigid(pose):
            raise ModelError("Tracked pose is not a proper rigid transform")
        self.pose = pose
        frame = PoseFrame(patch.timestamp, pose.copy(), result.fitness, result.rmse * 1000.0, True, n)
        self.track.frames.append(frame)
        log.debug(f"Frame {len(self.track) - 1}: fitness {result.fitness:.2f}, rmse {frame.rmse_mm:.2f} mm, "
                  f"{result.iterations} ICP iterations")
        return frame


def icp_track(patches: Sequence[ContactPatch], model: PointCloud, init: np.ndarray,
              max_correspondence: float = MAX_CORRESPONDENCE, min_points: Optional[int] = None) -> PoseTrack:
    tracker = PoseTracker(model, init, max_correspondence, min_points or MIN_TRACKING_POINTS)
    for patch in patches:
        tracker.update(patch)
    return tracker.track
