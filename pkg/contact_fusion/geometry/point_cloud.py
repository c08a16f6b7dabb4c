# contact_fusion/geometry/point_cloud.py

import logging
from dataclasses import dataclass, field
from typing import Any, Literal, NamedTuple, Optional

import numpy as np
from scipy.spatial import cKDTree

from contact_fusion.errors import ConfigError, MetricError

log = logging.getLogger(__name__)

PatchSource = Literal["fusion", "tactile-only", "proximity-only", "mechanics-model", "ground-truth"]


@dataclass(frozen=True)
class PointCloud:
    """Ordered (N, 3) points in metres, optionally tagged with their source pixel index."""
    points: np.ndarray
    pixel_index: Optional[np.ndarray] = None

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise ConfigError("Point cloud contains non-finite coordinates")
        points.flags.writeable = False
        object.__setattr__(self, "points", points)
        if self.pixel_index is not None:
            index = np.array(self.pixel_index, dtype=np.int64, copy=True).reshape(-1)
            if index.size != len(points):
                raise ConfigError(f"pixel_index has {index.size} entries for {len(points)} points")
            index.flags.writeable = False
            object.__setattr__(self, "pixel_index", index)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        return len(self.points) == 0

    def subset(self, keep: np.ndarray) -> "PointCloud":
        index = self.pixel_index[keep] if self.pixel_index is not None else None
        return PointCloud(self.points[keep], pixel_index=index)

    def transformed(self, transform: np.ndarray) -> "PointCloud":
        """Applies a 4x4 homogeneous rigid transform."""
        rotated = self.points @ transform[:3, :3].T + transform[:3, 3]
        return PointCloud(rotated, pixel_index=self.pixel_index)

    def translated(self, offset) -> "PointCloud":
        return PointCloud(self.points + np.asarray(offset, dtype=np.float64), pixel_index=self.pixel_index)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass(frozen=True)
class ContactPatch:
    """A contact estimate in the proximity-camera frame."""
    cloud: PointCloud
    source: PatchSource
    timestamp: float = 0.0
    pixel_mask: Optional[np.ndarray] = None
    timings_ms: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cloud)

    @property
    def is_empty(self) -> bool:
        return self.cloud.is_empty

    @property
    def points(self) -> np.ndarray:
        return self.cloud.points


class OutlierFilterResult(NamedTuple):
    cloud: PointCloud
    inlier_mask: np.ndarray
    skipped: bool


def mean_neighbour_distances(points: np.ndarray, k_neighbors: int) -> np.ndarray:
    """Mean distance from each point to its k nearest neighbours, excluding itself."""
    tree = cKDTree(points)
    distances, _ = tree.query(points, k=k_neighbors + 1, workers=-1)
    return distances[:, 1:].mean(axis=1)


def statistical_outlier_filter(cloud: PointCloud, k_neighbors: int = 20, std_ratio: float = 2.0) -> OutlierFilterResult:
    """
    Removes points whose mean k-neighbour distance exceeds the global mean of
    that statistic plus `std_ratio` standard deviations.
    """
    if k_neighbors < 1:
        raise ConfigError(f"k_neighbors must be >= 1, got {k_neighbors}")
    if std_ratio <= 0:
        raise ConfigError(f"std_ratio must be > 0, got {std_ratio}")

    n = len(cloud)
    if n < k_neighbors + 1:
        if n > 0:
            log.warning(f"Outlier filter skipped: {n} points is fewer than k_neighbors + 1 = {k_neighbors + 1}")
        return OutlierFilterResult(cloud, np.ones(n, dtype=bool), skipped=n > 0)

    mean_dist = mean_neighbour_distances(cloud.points, k_neighbors)
    threshold = mean_dist.mean() + std_ratio * mean_dist.std()
    # ties within rounding of the threshold are kept
    inliers = mean_dist <= threshold * (1.0 + 1e-9)
    removed = n - int(inliers.sum())
    if removed:
        log.debug(f"Outlier filter removed {removed} of {n} points (threshold {threshold:.6f} m)")
    return OutlierFilterResult(cloud.subset(inliers), inliers, skipped=False)


def nearest_distances(est: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance and index of the nearest `ref` point for every `est` point."""
    tree = cKDTree(ref)
    distances, indices = tree.query(est, k=1, workers=-1)
    return distances, indices


def rmse_between(est: PointCloud, ref: PointCloud) -> float:
    """Root-mean-square nearest-neighbour distance from est to ref, in millimetres."""
    if est.is_empty or ref.is_empty:
        raise MetricError("no points: rmse_between needs non-empty estimate and reference clouds")
    distances, _ = nearest_distances(est.points, ref.points)
    return float(np.sqrt(np.mean(distances ** 2)) * 1000.0)
