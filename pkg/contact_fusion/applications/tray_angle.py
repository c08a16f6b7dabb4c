# contact_fusion/applications/tray_angle.py
"""
In-plane orientation of a contact patch from the first principal component
of its projection onto the image plane. Angles are degrees in (-90, 90],
counter-clockwise positive as seen from the camera (x right, y down), so an
object yawed by +a about the optical axis reads as -a.
"""

import json
import logging
import time
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from sklearn.decomposition import PCA

from contact_fusion.errors import DataError
from contact_fusion.geometry import io
from contact_fusion.geometry.point_cloud import ContactPatch

log = logging.getLogger(__name__)

MIN_POINTS = 10
MIN_EIGEN_RATIO = 1.05


@dataclass(frozen=True)
class TrayAngleEstimate:
    angle_deg: float
    points: int           # confidence: number of points used
    eigen_ratio: float
    timestamp: float = 0.0
    source: str = "fusion"
    elapsed_ms: float = 0.0


def wrap_half_turn(angle_deg: float) -> float:
    """Folds an axis direction into (-90, 90]."""
    wrapped = (angle_deg + 90.0) % 180.0 - 90.0
    return 90.0 if wrapped == -90.0 else wrapped


def pca_angle(patch: ContactPatch) -> TrayAngleEstimate:
    started = time.perf_counter()
    n = len(patch)
    if n < MIN_POINTS:
        raise DataError(f"Insufficient data: {n} points in {patch.source} patch, need {MIN_POINTS}")

    pca = PCA(n_components=2).fit(patch.points[:, :2])
    major, minor = pca.explained_variance_
    ratio = float(major / minor) if minor > 0 else float("inf")
    if ratio < MIN_EIGEN_RATIO:
        raise DataError(f"Degenerate orientation: eigenvalue ratio {ratio:.3f} < {MIN_EIGEN_RATIO}")

    vx, vy = pca.components_[0]
    angle = wrap_half_turn(float(np.degrees(np.arctan2(-vy, vx))))
    return TrayAngleEstimate(angle, n, ratio, patch.timestamp, patch.source,
                             (time.perf_counter() - started) * 1000.0)


def angle_stream_line(estimate: TrayAngleEstimate) -> str:
    return json.dumps(asdict(estimate), sort_keys=True)


def write_angle_stream(path, estimates: Iterable[TrayAngleEstimate]) -> None:
    """Line-delimited JSON, one estimate per frame."""
    io.write_text(path, "".join(angle_stream_line(e) + "\n" for e in estimates))
