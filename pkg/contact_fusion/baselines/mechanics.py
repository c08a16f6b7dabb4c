# contact_fusion/baselines/mechanics.py
"""
Membrane-mechanics baseline: infer nodal contact forces from the observed
tactile height field with the same linear membrane model the simulator uses.

With w the interior deflection, K the stiffness and f the pressure load, the
membrane satisfies K w = f - lambda where lambda >= 0 is the downward contact
force. Given an observation w_hat with node weights W the estimator solves

    minimise  (w - w_hat)' W (w - w_hat) + mu |lambda_s|^2
    subject to  K_s w + lambda_s = f_s,  lambda_s >= 0

in scaled units (K_s = K / s, f_s = f / s, lambda_s = lambda / s, s the
largest diagonal entry of K). OSQP gives a first solution; an exact
active-set iteration on the KKT system then certifies it.

The penalty spreads force onto nodes next to the true contact. The certified
support is therefore refitted with a much weaker penalty, and the contact set
is read off the refitted forces.

Every equality-constrained solve is reduced to the nodes allowed to carry
force: with G = K_s^-1 S the deflection is w = K_s^-1 f_s - G lambda_S, so
only a small dense system in lambda_S remains. K_s^-1 reuses the membrane's
cached sparse factorisation.
"""

import itertools
import logging
import time
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Any, Optional

import numpy as np
import osqp
from scipy import linalg, sparse

from contact_fusion.errors import DataError, SolverError
from contact_fusion.geometry.depth import DepthImage, deproject
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud
from contact_fusion.models import MechanicsModelConfig
from contact_fusion.simulator.membrane import MembraneGrid, MembraneModel, build_membrane_model, tension_field

log = logging.getLogger(__name__)

# sign checks in the refinement accept values this far (relative to kkt_tolerance) on the wrong side of zero
SIGN_SLACK = 1e-3


@dataclass(frozen=True)
class Observation:
    """Observed node heights (interior, flat) with per-node weights; unobserved nodes carry weight 0."""
    z: np.ndarray
    weights: np.ndarray

    @property
    def observed_fraction(self) -> float:
        return float(np.mean(self.weights > 0)) if self.weights.size else 0.0


@dataclass(frozen=True)
class InverseSolution:
    w: np.ndarray
    forces: np.ndarray
    free_set: np.ndarray
    residuals: dict[str, float]
    osqp_status: str
    osqp_iterations: int
    refinement_iterations: int


@dataclass(frozen=True)
class ForceRefit:
    w: np.ndarray
    forces: np.ndarray
    support: np.ndarray
    residuals: dict[str, float]
    iterations: int


@dataclass(frozen=True)
class MechanicsEstimate:
    patch: ContactPatch
    solution: InverseSolution
    refit: ForceRefit
    contact_mask: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)


class MechanicsModel:
    """Stiffness, scaling and constraint blocks for one mesh configuration."""

    def __init__(self, cfg: MechanicsModelConfig):
        self.cfg = cfg
        self.grid = MembraneGrid(cfg.mesh_nx, cfg.mesh_ny, cfg.length, cfg.width, cfg.boundary_height)
        self.membrane: MembraneModel = build_membrane_model(self.grid, tension_field(self.grid, cfg.tension))
        k = self.membrane.stiffness
        self.scale = float(k.diagonal().max())
        self.k_scaled = (k / self.scale).tocsc()
        self.n = self.grid.n_interior

    @cached_property
    def constraints(self) -> sparse.csc_matrix:
        eye = sparse.identity(self.n, format="csc")
        zero = sparse.csc_matrix((self.n, self.n))
        return sparse.bmat([[self.k_scaled, eye], [zero, eye]], format="csc")

    @cached_property
    def crop_keep(self) -> np.ndarray:
        """Interior nodes far enough from the clamped edge to be reported."""
        mx = self.cfg.crop_margin_cells * self.cfg.crop_cell_size[0]
        my = self.cfg.crop_margin_cells * self.cfg.crop_cell_size[1]
        xx, yy = self.grid.xy
        keep = (np.abs(xx) <= self.grid.length / 2 - mx) & (np.abs(yy) <= self.grid.width / 2 - my)
        return self.membrane.to_interior(keep)

    # --- Observation ---

    def resample(self, d_t: DepthImage) -> Observation:
        """Bins deprojected tactile points onto their nearest mesh node and averages the heights."""
        camera = self.cfg.tactile_camera
        cloud = deproject(d_t, camera.intrinsics).translated(camera.position)
        sums = np.zeros(self.grid.shape)
        counts = np.zeros(self.grid.shape)
        if not cloud.is_empty:
            pts = cloud.points
            inside = self.grid.contains(pts[:, 0], pts[:, 1])
            row, col = self.grid.nearest_node(pts[inside, 0], pts[inside, 1])
            flat = row * self.grid.nx + col
            size = self.grid.nx * self.grid.ny
            sums = np.bincount(flat, weights=pts[inside, 2], minlength=size).reshape(self.grid.shape)
            counts = np.bincount(flat, minlength=size).reshape(self.grid.shape).astype(np.float64)
        mean = np.divide(sums, counts, out=np.full(self.grid.shape, self.grid.boundary_height), where=counts > 0)
        observation = Observation(self.membrane.to_interior(mean),
                                  self.membrane.to_interior((counts > 0).astype(np.float64)))
        if observation.observed_fraction < self.cfg.min_observed_fraction:
            raise DataError(
                f"Tactile image covers {observation.observed_fraction:.0%} of mesh nodes; "
                f"need {self.cfg.min_observed_fraction:.0%}"
            )
        return observation

    # --- QP ---

    def _osqp(self, w_hat: np.ndarray, weights: np.ndarray, f_scaled: np.ndarray) -> tuple[Optional[np.ndarray], str, int]:
        mu = self.cfg.regularization
        p = sparse.block_diag([sparse.diags(2.0 * weights), sparse.identity(self.n) * (2.0 * mu)], format="csc")
        q = np.concatenate([-2.0 * weights * w_hat, np.zeros(self.n)])
        lower = np.concatenate([f_scaled, np.zeros(self.n)])
        upper = np.concatenate([f_scaled, np.full(self.n, np.inf)])
        solver = osqp.OSQP()
        solver.setup(P=sparse.triu(p, format="csc"), q=q, A=self.constraints, l=lower, u=upper,
                     eps_abs=1e-8, eps_rel=1e-8, max_iter=self.cfg.osqp_max_iter, verbose=False)
        result = solver.solve()
        status = str(result.info.status)
        x = result.x
        if x is None or not np.all(np.isfinite(x)):
            return None, status, int(result.info.iter)
        return np.asarray(x, dtype=np.float64), status, int(result.info.iter)

    def _inverse(self, rhs: np.ndarray) -> np.ndarray:
        """K_s^-1 rhs for a vector or a stack of columns."""
        return self.scale * self.membrane.factor.solve(rhs)

    def _restricted_solve(self, w_hat: np.ndarray, weights: np.ndarray, f_scaled: np.ndarray,
                          support: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Equality-constrained solve with forces fixed at zero outside `support`; returns (w, forces, nu)."""
        idx = np.flatnonzero(support)
        free_deflection = self._inverse(f_scaled)
        forces = np.zeros(self.n)
        w = free_deflection
        if idx.size:
            select = np.zeros((self.n, idx.size))
            select[idx, np.arange(idx.size)] = 1.0
            g = self._inverse(select)
            weighted = weights[:, None] * g
            reduced = g.T @ weighted + mu * np.eye(idx.size)
            try:
                forces[idx] = linalg.solve(reduced, weighted.T @ (free_deflection - w_hat), assume_a="pos")
            except linalg.LinAlgError as e:
                raise SolverError(f"Reduced mechanics system on {idx.size} nodes is not positive definite",
                                  {"support": int(idx.size), "regularization": mu}) from e
            w = free_deflection - g @ forces[idx]
        nu = -2.0 * self._inverse(weights * (w - w_hat))
        return w, forces, nu

    def residuals(self, w_hat, weights, f_scaled, w, forces, nu, mu: Optional[float] = None) -> dict[str, float]:
        mu = self.cfg.regularization if mu is None else mu
        bound_dual = 2.0 * mu * forces + nu
        return {
            "stationarity_w": float(np.abs(2.0 * weights * (w - w_hat) + self.k_scaled.T @ nu).max(initial=0.0)),
            "stationarity_forces": float(np.abs(np.where(forces > 0, bound_dual, 0.0)).max(initial=0.0)),
            "primal": float(np.abs(self.k_scaled @ w + forces - f_scaled).max(initial=0.0)),
            "primal_bound": float(max(0.0, -forces.min(initial=0.0))),
            "dual": float(max(0.0, -bound_dual.min(initial=0.0))),
            "complementarity": float(np.abs(forces * bound_dual).max(initial=0.0)),
        }

    def solve(self, observation: Observation, pressure: float) -> InverseSolution:
        w_hat = observation.z - self.grid.boundary_height
        weights = observation.weights
        f_scaled = np.full(self.n, pressure / self.scale)
        mu = self.cfg.regularization
        slack = SIGN_SLACK * self.cfg.kkt_tolerance

        x, status, osqp_iterations = self._osqp(w_hat, weights, f_scaled)
        if x is None:
            log.warning(f"OSQP returned no solution (status '{status}'); refining from zero contact forces")
        elif status != "solved":
            log.debug(f"OSQP status '{status}' after {osqp_iterations} iterations")
        if x is not None:
            forces0 = x[self.n:]
            free_set = forces0 > 1e-3 * max(float(forces0.max(initial=0.0)), pressure / self.scale)
        else:
            free_set = np.zeros(self.n, dtype=bool)

        for iteration in range(1, self.cfg.max_refinement_iterations + 1):
            w, forces, nu = self._restricted_solve(w_hat, weights, f_scaled, free_set, mu)
            # bound multiplier of lambda_s >= 0 on fixed nodes
            bound_dual = nu
            settled = (forces[free_set] >= -slack).all() and (bound_dual[~free_set] >= -slack).all()
            if settled:
                residuals = self.residuals(w_hat, weights, f_scaled, w, forces, nu)
                worst = max(residuals.values())
                if worst > self.cfg.kkt_tolerance:
                    raise SolverError("Mechanics QP converged with KKT residuals above tolerance", residuals)
                return InverseSolution(w, np.maximum(forces, 0.0) * self.scale, free_set, residuals,
                                       status, osqp_iterations, iteration)
            free_set = (free_set & (forces >= -slack)) | (~free_set & (bound_dual < -slack))

        residuals = self.residuals(w_hat, weights, f_scaled, w, np.maximum(forces, 0.0), nu)
        raise SolverError(
            f"Mechanics active-set refinement did not settle in {self.cfg.max_refinement_iterations} iterations",
            dict(residuals, osqp_status=status, free_nodes=int(free_set.sum())),
        )

    def refit(self, observation: Observation, solution: InverseSolution, pressure: float) -> ForceRefit:
        """
        Re-solves on the support of `solution` with the weaker debias_regularization
        penalty. Nodes whose force turns negative leave the support until none do.
        """
        w_hat = observation.z - self.grid.boundary_height
        weights = observation.weights
        f_scaled = np.full(self.n, pressure / self.scale)
        mu = self.cfg.debias_regularization
        slack = SIGN_SLACK * self.cfg.kkt_tolerance
        peak = float(solution.forces.max(initial=0.0))
        support = solution.free_set & (solution.forces > self.cfg.lambda_tol_rel * peak)

        # the support shrinks every round, so this ends by the time it is empty
        for iteration in itertools.count(1):
            try:
                w, forces, nu = self._restricted_solve(w_hat, weights, f_scaled, support, mu)
            except SolverError as e:
                log.warning(f"Force refit failed, keeping the regularised forces: {e}")
                return ForceRefit(solution.w, solution.forces, solution.free_set, solution.residuals, iteration - 1)
            negative = support & (forces < -slack)
            if not negative.any():
                residuals = self.residuals(w_hat, weights, f_scaled, w, forces, nu, mu)
                return ForceRefit(w, np.maximum(forces, 0.0) * self.scale, support, residuals, iteration)
            support &= ~negative

    def estimate(self, observation: Observation, pressure: float, timestamp: float = 0.0) -> MechanicsEstimate:
        started = time.perf_counter()
        solution = self.solve(observation, pressure)
        refit = self.refit(observation, solution, pressure)
        forces = refit.forces
        tol = max(self.cfg.lambda_tol_rel * float(forces.max(initial=0.0)), self.cfg.contact_threshold * pressure)
        contact = (forces > tol) & (forces > 0)
        cropped = contact & ~self.crop_keep
        contact &= self.crop_keep

        z = self.membrane.to_grid(refit.w) + self.grid.boundary_height
        mask = self.membrane.to_grid(contact.astype(np.float64)) > 0
        xx, yy = self.grid.xy
        points = np.column_stack((xx[mask], yy[mask], z[mask])) - np.asarray(self.cfg.proximity_position)

        diagnostics = {
            "osqp_status": solution.osqp_status,
            "osqp_iterations": solution.osqp_iterations,
            "refinement_iterations": solution.refinement_iterations,
            "refit_iterations": refit.iterations,
            "kkt": solution.residuals,
            "kkt_refit": refit.residuals,
            "active_set_size": int(solution.free_set.sum()),
            "refit_support": int(refit.support.sum()),
            "contact_nodes": int(contact.sum()),
            "cropped_nodes": int(cropped.sum()),
            "observed_fraction": observation.observed_fraction,
            "force_tolerance": tol,
        }
        elapsed = (time.perf_counter() - started) * 1000.0
        log.debug(f"Mechanics estimate: {diagnostics['contact_nodes']} contact nodes "
                  f"({diagnostics['active_set_size']} before the refit), {elapsed:.1f} ms")
        patch = ContactPatch(PointCloud(points), "mechanics-model", timestamp,
                             timings_ms={"total": elapsed}, diagnostics=diagnostics)
        return MechanicsEstimate(patch, solution, refit, mask, diagnostics)


@lru_cache(maxsize=8)
def mechanics_model_for(cfg: MechanicsModelConfig) -> MechanicsModel:
    """Shared model (and its factorisation) per configuration."""
    return MechanicsModel(cfg)


def mechanics_model(d_t: DepthImage, pressure: float, cfg: Optional[MechanicsModelConfig] = None,
                    timestamp: float = 0.0) -> ContactPatch:
    """Contact patch from a raw (unaligned) tactile image and the chamber pressure."""
    started = time.perf_counter()
    model = mechanics_model_for(cfg or MechanicsModelConfig())
    observation = model.resample(d_t)
    estimate = model.estimate(observation, pressure, timestamp)
    estimate.patch.timings_ms["total"] = (time.perf_counter() - started) * 1000.0
    return estimate.patch
