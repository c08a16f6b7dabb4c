# contact_fusion/evaluation/scoring.py
"""Scores a contact estimate against the simulator's ground truth."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from contact_fusion.errors import MetricError
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud, rmse_between
from contact_fusion.geometry.registration import IcpResult, icp_point_to_point
from contact_fusion.simulator.membrane import MembraneGrid

log = logging.getLogger(__name__)

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def align_for_scoring(est: PointCloud, oracle: PointCloud, max_iterations: int = 50,
                      tolerance: float = 1e-6) -> IcpResult:
    """Point-to-point ICP from the estimate onto the oracle cloud, starting at identity."""
    if est.is_empty or oracle.is_empty:
        raise MetricError("no points: alignment needs a non-empty estimate and oracle")
    return icp_point_to_point(est.points, oracle.points, np.eye(4), max_iterations, tolerance)


def node_mask(cloud: PointCloud, grid: MembraneGrid, camera_position=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Grid nodes hit by at least one point; points are in the frame of the camera at `camera_position`."""
    mask = np.zeros(grid.shape, dtype=bool)
    if cloud.is_empty:
        return mask
    world = cloud.points + np.asarray(camera_position, dtype=np.float64)
    inside = grid.contains(world[:, 0], world[:, 1])
    row, col = grid.nearest_node(world[inside, 0], world[inside, 1])
    mask[row, col] = True
    return mask


def mask_scores(predicted: np.ndarray, truth: np.ndarray) -> tuple[float, float, float]:
    """IoU, precision and recall of two boolean masks. Empty sets score 1 against empty sets and 0 otherwise."""
    tp = int((predicted & truth).sum())
    n_pred, n_true = int(predicted.sum()), int(truth.sum())
    union = int((predicted | truth).sum())
    iou = tp / union if union else 1.0
    precision = tp / n_pred if n_pred else float(n_true == 0)
    recall = tp / n_true if n_true else float(n_pred == 0)
    return iou, precision, recall


def connected_components(mask: np.ndarray) -> int:
    _, count = ndimage.label(mask, structure=EIGHT_CONNECTED)
    return int(count)


@dataclass(frozen=True)
class PatchScore:
    rmse_mm: Optional[float]
    iou: float
    precision: float
    recall: float
    no_contact: bool
    alignment_residual_mm: Optional[float]
    alignment_flagged: bool
    points: int


def score_patch(patch: ContactPatch, oracle_cloud: PointCloud, oracle_mask: np.ndarray, grid: MembraneGrid,
                camera_position=(0.0, 0.0, 0.0), residual_threshold_mm: float = 5.0) -> PatchScore:
    """
    RMSE after ICP alignment plus node-mask IoU/precision/recall. An empty
    estimate or oracle is reported as no-contact with no RMSE.
    """
    predicted = node_mask(patch.cloud, grid, camera_position)
    iou, precision, recall = mask_scores(predicted, oracle_mask)

    try:
        alignment = align_for_scoring(patch.cloud, oracle_cloud)
    except MetricError:
        return PatchScore(None, iou, precision, recall, True, None, False, len(patch))

    rmse_mm = rmse_between(patch.cloud.transformed(alignment.transform), oracle_cloud)
    residual_mm = alignment.rmse * 1000.0
    flagged = residual_mm > residual_threshold_mm
    if flagged:
        log.warning(f"{patch.source}: alignment residual {residual_mm:.2f} mm exceeds {residual_threshold_mm} mm")
    return PatchScore(rmse_mm, iou, precision, recall, False, residual_mm, flagged, len(patch))
