# contact_fusion/geometry/registration.py
"""
Rigid-transform helpers and the two ICP variants used in the package:
point-to-point (scoring alignment) and point-to-plane (pose tracking).
Transforms are 4x4 homogeneous matrices acting on column vectors.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

log = logging.getLogger(__name__)

ORTHONORMAL_TOL = 1e-9


def make_transform(rotation: np.ndarray, translation) -> np.ndarray:
    transform = np.eye(4)
    transform[:3, :3] = rotation
    transform[:3, 3] = np.asarray(translation, dtype=np.float64)
    return transform


def invert_transform(transform: np.ndarray) -> np.ndarray:
    rotation = transform[:3, :3]
    return make_transform(rotation.T, -rotation.T @ transform[:3, 3])


def rotation_about_z(angle_deg: float) -> np.ndarray:
    return Rotation.from_euler("z", angle_deg, degrees=True).as_matrix()


def yaw_degrees(transform: np.ndarray) -> float:
    """Rotation about the optical axis, in degrees."""
    return float(np.degrees(np.arctan2(transform[1, 0], transform[0, 0])))


def to_quaternion(transform: np.ndarray) -> np.ndarray:
    """(x, y, z, w) quaternion of the rotation block."""
    return Rotation.from_matrix(transform[:3, :3]).as_quat()


def orthonormalize(transform: np.ndarray) -> np.ndarray:
    """Projects the rotation block back onto SO(3)."""
    u, _, vt = np.linalg.svd(transform[:3, :3])
    rotation = u @ vt
    if np.linalg.det(rotation) < 0:
        u[:, -1] *= -1
        rotation = u @ vt
    return make_transform(rotation, transform[:3, 3])


def is_proper_rigid(transform: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    rotation = transform[:3, :3]
    return (np.allclose(rotation.T @ rotation, np.eye(3), atol=tol)
            and abs(np.linalg.det(rotation) - 1.0) <= tol
            and np.allclose(transform[3], [0.0, 0.0, 0.0, 1.0]))


def best_fit_transform(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Least-squares rigid transform mapping corresponding `source` points onto `target` (Kabsch)."""
    centroid_s = source.mean(axis=0)
    centroid_t = target.mean(axis=0)
    h = (source - centroid_s).T @ (target - centroid_t)
    u, _, vt = np.linalg.svd(h)
    rotation = vt.T @ u.T
    # special reflection case
    if np.linalg.det(rotation) < 0:
        vt[-1, :] *= -1
        rotation = vt.T @ u.T
    return make_transform(rotation, centroid_t - rotation @ centroid_s)


@dataclass(frozen=True)
class IcpResult:
    transform: np.ndarray
    rmse: float          # metres, over correspondences
    fitness: float       # fraction of source points with a correspondence
    iterations: int
    converged: bool


def _apply(transform: np.ndarray, points: np.ndarray) -> np.ndarray:
    return points @ transform[:3, :3].T + transform[:3, 3]


def _correspondences(tree: cKDTree, points: np.ndarray, max_distance: Optional[float]):
    distances, indices = tree.query(points, k=1, workers=-1)
    if max_distance is None:
        mask = np.ones(len(points), dtype=bool)
    else:
        mask = distances <= max_distance
    return distances, indices, mask


def icp_point_to_point(source: np.ndarray, target: np.ndarray, init: Optional[np.ndarray] = None,
                       max_iterations: int = 50, tolerance: float = 1e-6,
                       max_correspondence: Optional[float] = None) -> IcpResult:
    """Aligns `source` to `target`; stops when the RMSE changes by less than `tolerance` metres."""
    transform = np.eye(4) if init is None else np.array(init, dtype=np.float64)
    tree = cKDTree(target)
    prev_rmse = np.inf
    converged = False
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        current = _apply(transform, source)
        distances, indices, mask = _correspondences(tree, current, max_correspondence)
        if mask.sum() < 3:
            log.warning(f"ICP stopped after {iterations - 1} iterations: fewer than 3 correspondences")
            break
        rmse = float(np.sqrt(np.mean(distances[mask] ** 2)))
        if abs(prev_rmse - rmse) < tolerance:
            converged = True
            break
        prev_rmse = rmse
        step = best_fit_transform(current[mask], target[indices[mask]])
        transform = step @ transform

    distances, _, mask = _correspondences(tree, _apply(transform, source), max_correspondence)
    rmse = float(np.sqrt(np.mean(distances[mask] ** 2))) if mask.any() else np.inf
    return IcpResult(orthonormalize(transform), rmse, float(mask.mean()), iterations, converged)


def estimate_normals(points: np.ndarray, k_neighbors: int = 10) -> np.ndarray:
    """Unit normals from the smallest principal axis of each k-neighbourhood, oriented towards -z."""
    k = min(k_neighbors, len(points))
    tree = cKDTree(points)
    _, indices = tree.query(points, k=k, workers=-1)
    neighbourhoods = points[indices.reshape(len(points), k)]
    centred = neighbourhoods - neighbourhoods.mean(axis=1, keepdims=True)
    covariance = np.einsum("nki,nkj->nij", centred, centred)
    _, eigenvectors = np.linalg.eigh(covariance)
    normals = eigenvectors[:, :, 0]
    normals[normals[:, 2] > 0] *= -1
    return normals


def icp_point_to_plane(source: np.ndarray, target: np.ndarray, target_normals: np.ndarray,
                       init: Optional[np.ndarray] = None, max_correspondence: float = 0.010,
                       max_iterations: int = 50, tolerance: float = 1e-9,
                       point_weight: float = 0.05) -> IcpResult:
    """
    Point-to-plane ICP. A small point-to-point term (`point_weight`) keeps
    motions that slide along a flat patch observable.
    """
    transform = np.eye(4) if init is None else np.array(init, dtype=np.float64)
    tree = cKDTree(target)
    converged = False
    iterations = 0

    for iterations in range(1, max_iterations + 1):
        current = _apply(transform, source)
        _, indices, mask = _correspondences(tree, current, max_correspondence)
        if mask.sum() < 6:
            log.warning(f"Point-to-plane ICP stopped: {int(mask.sum())} correspondences")
            break
        p = current[mask]
        q = target[indices[mask]]
        n = target_normals[indices[mask]]

        plane_rows = np.hstack((np.cross(p, n), n))
        plane_rhs = -np.einsum("ij,ij->i", n, p - q)
        normal_matrix = plane_rows.T @ plane_rows
        rhs = plane_rows.T @ plane_rhs

        if point_weight > 0:
            # d(omega x p)/d(omega) = -[p]x
            skew = np.zeros((len(p), 3, 3))
            skew[:, 0, 1], skew[:, 0, 2] = -p[:, 2], p[:, 1]
            skew[:, 1, 0], skew[:, 1, 2] = p[:, 2], -p[:, 0]
            skew[:, 2, 0], skew[:, 2, 1] = -p[:, 1], p[:, 0]
            jac = np.concatenate((-skew, np.broadcast_to(np.eye(3), skew.shape)), axis=2)
            residual = q - p
            normal_matrix += point_weight * np.einsum("nki,nkj->ij", jac, jac)
            rhs += point_weight * np.einsum("nki,nk->i", jac, residual)

        try:
            x = np.linalg.solve(normal_matrix, rhs)
        except np.linalg.LinAlgError:
            log.warning("Point-to-plane ICP normal matrix is singular; stopping")
            break
        step = make_transform(Rotation.from_rotvec(x[:3]).as_matrix(), x[3:])
        transform = orthonormalize(step @ transform)
        if np.linalg.norm(x) < tolerance:
            converged = True
            break

    distances, _, mask = _correspondences(tree, _apply(transform, source), max_correspondence)
    rmse = float(np.sqrt(np.mean(distances[mask] ** 2))) if mask.any() else np.inf
    return IcpResult(transform, rmse, float(mask.mean()) if len(mask) else 0.0, iterations, converged)
