# contact_fusion/simulator/solver.py
"""
Obstacle problem for the pressed membrane:

    minimise 1/2 w'Kw - f'w   subject to   w <= psi

with w = z - z_b on interior nodes and psi = phi - z_b the object underside.
The default path runs red-black projected SOR and then polishes its active set
with a primal-dual active-set iteration, which gives exact multipliers.
A cold-start active-set solve is available as an independent cross-check.
"""

import logging
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.sparse.linalg import spsolve

from contact_fusion.errors import SceneError, SolverError
from contact_fusion.geometry.point_cloud import PointCloud
from contact_fusion.models import SolverSpec
from contact_fusion.simulator.membrane import MembraneModel, MembraneState, state_from_deflection
from contact_fusion.simulator.obstacles import RigidObstacle

log = logging.getLogger(__name__)

ACTIVE_SET_SEED_TOLERANCE = 1e-9
CONTACT_TOLERANCE_REL = 1e-8
CONTACT_TOLERANCE_PRESSURE = 1e-12


@dataclass(frozen=True)
class ObstacleSolution:
    w: np.ndarray
    multipliers: np.ndarray
    active: np.ndarray
    method: str
    sweeps: int
    active_set_iterations: int
    elapsed_s: float
    # projected SOR iterate and its contact set before the active-set polish
    relaxed_w: Optional[np.ndarray] = None
    relaxed_active: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class ContactOracle:
    """Ground-truth contact: grid nodes whose obstacle constraint is active, and their positions."""
    mask: np.ndarray
    multipliers: np.ndarray
    cloud: PointCloud
    tolerance: float

    @property
    def node_count(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return self.node_count == 0


def _finite_psi(psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    finite = np.isfinite(psi)
    return finite, np.where(finite, psi, 0.0)


def projected_sor(model: MembraneModel, pressure: float, psi: np.ndarray, omega: float = 1.9,
                  max_sweeps: int = 20000, tolerance: float = 1e-10) -> tuple[np.ndarray, int, bool]:
    """
    Red-black projected SOR on the grid stencil. Returns the interior
    deflection vector, the sweeps used and whether the update fell below
    `tolerance` (max-norm, metres).
    """
    grid = model.grid
    c = model.coefficients
    diag = c.diagonal
    bound = psi.reshape(grid.ny - 2, grid.nx - 2)
    w = np.zeros(grid.shape)
    jj, ii = np.mgrid[0:grid.ny - 2, 0:grid.nx - 2]
    colours = [(ii + jj) % 2 == 0, (ii + jj) % 2 == 1]

    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for colour in colours:
            inner = w[1:-1, 1:-1]
            gauss_seidel = (pressure
                            + c.east * w[1:-1, 2:] + c.west * w[1:-1, :-2]
                            + c.north * w[2:, 1:-1] + c.south * w[:-2, 1:-1]) / diag
            relaxed = np.minimum(inner + omega * (gauss_seidel - inner), bound)
            step = np.abs(relaxed - inner)[colour]
            if step.size:
                change = max(change, float(step.max()))
            inner[colour] = relaxed[colour]
        if change < tolerance:
            return model.to_interior(w), sweep, True
    return model.to_interior(w), max_sweeps, False


def active_set_solve(model: MembraneModel, pressure: float, psi: np.ndarray,
                     initial_active: np.ndarray, max_iterations: int = 200) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """
    Primal-dual active-set iteration. Each step fixes w = psi on the active
    set, solves the free nodes exactly and updates the set from
    lambda + c (w - psi) > 0. Terminates when the set repeats.
    """
    k = model.stiffness
    f = model.load(pressure)
    finite, psi_safe = _finite_psi(psi)
    c = float(k.diagonal().mean())
    active = initial_active & finite
    n = len(f)

    for iteration in range(1, max_iterations + 1):
        act = np.flatnonzero(active)
        free = np.flatnonzero(~active)
        w = np.zeros(n)
        w[act] = psi_safe[act]
        if free.size:
            rhs = f[free] - k[free][:, act] @ psi_safe[act] if act.size else f[free]
            w[free] = spsolve(k[free][:, free].tocsc(), rhs)
        multipliers = np.zeros(n)
        multipliers[act] = (f - k @ w)[act]
        updated = finite & (multipliers + c * (w - psi_safe) > 0)
        if np.array_equal(updated, active):
            return w, multipliers, active, iteration
        active = updated

    violation = float(np.max(np.where(finite, w - psi_safe, -np.inf), initial=0.0))
    raise SolverError(
        f"Active-set iteration did not settle in {max_iterations} iterations",
        {"iterations": max_iterations, "primal_violation": violation,
         "active_nodes": int(active.sum()), "min_multiplier": float(multipliers.min(initial=0.0))},
    )


def kkt_residuals(model: MembraneModel, pressure: float, w: np.ndarray, psi: np.ndarray,
                  multipliers: np.ndarray) -> dict[str, float]:
    """Max-norm KKT residuals, measured only where the obstacle constrains the node."""
    finite, psi_safe = _finite_psi(psi)
    gap = np.where(finite, psi_safe - w, 0.0)
    stationarity = model.load(pressure) - model.stiffness @ w - multipliers
    return {
        "primal": float(max(0.0, -gap.min(initial=0.0))),
        "dual": float(max(0.0, -multipliers.min(initial=0.0))),
        "complementarity": float(np.abs(multipliers * gap).max(initial=0.0)),
        "stationarity": float(np.abs(stationarity).max(initial=0.0)),
    }


def solve_obstacle(model: MembraneModel, pressure: float, psi: np.ndarray,
                   spec: Optional[SolverSpec] = None) -> ObstacleSolution:
    spec = spec or SolverSpec()
    start = time.perf_counter()
    finite, psi_safe = _finite_psi(psi)

    if not finite.any():
        w = pressure * model.unit_deflection
        return ObstacleSolution(w, np.zeros_like(w), np.zeros(len(w), dtype=bool), spec.method, 0, 0,
                                time.perf_counter() - start)

    if spec.method == "psor":
        w0, sweeps, converged = projected_sor(model, pressure, psi, spec.omega, spec.max_sweeps, spec.sweep_tolerance)
        if not converged:
            log.warning(f"Projected SOR stopped after {sweeps} sweeps; polishing from its current active set")
        seed = finite & (w0 >= psi_safe - ACTIVE_SET_SEED_TOLERANCE)
        relaxed = (w0, seed)
    else:
        sweeps = 0
        relaxed = (None, None)
        free_w = pressure * model.unit_deflection
        seed = finite & (free_w > psi_safe)

    w, multipliers, active, iterations = active_set_solve(model, pressure, psi, seed, spec.max_active_set_iterations)
    elapsed = time.perf_counter() - start
    log.debug(f"Obstacle solve ({spec.method}): {sweeps} sweeps, {iterations} active-set iterations, "
              f"{int(active.sum())} active nodes, {elapsed * 1000:.1f} ms")
    return ObstacleSolution(w, multipliers, active, spec.method, sweeps, iterations, elapsed, *relaxed)


def contact_tolerance(multipliers: np.ndarray, pressure: float) -> float:
    peak = float(multipliers.max(initial=0.0))
    return max(CONTACT_TOLERANCE_REL * peak, CONTACT_TOLERANCE_PRESSURE * pressure)


def press_object(m: MembraneState, obs: RigidObstacle, solver: Optional[SolverSpec] = None,
                 camera_position=(0.0, 0.0, 0.0)) -> tuple[MembraneState, ContactOracle]:
    """
    Presses `obs` into the membrane and returns the deformed state with the
    contact oracle. The oracle cloud is expressed in the frame of a camera at
    `camera_position` (the proximity camera).
    """
    model = m.model
    grid = m.grid
    if obs.top <= grid.boundary_height:
        raise SceneError(f"Obstacle passes below the clamp plane (top at z={obs.top:.4f} m)")

    psi = model.to_interior(obs.phi - grid.boundary_height)
    solution = solve_obstacle(model, m.pressure, psi, solver)
    residuals = kkt_residuals(model, m.pressure, solution.w, psi, solution.multipliers)
    if residuals["primal"] > 1e-9:
        raise SolverError("Obstacle solution violates the object surface", residuals)

    pressed = state_from_deflection(model, solution.w, m.pressure)
    multipliers = model.to_grid(solution.multipliers)
    tol = contact_tolerance(solution.multipliers, m.pressure)
    mask = multipliers > tol

    xx, yy = grid.xy
    points = np.column_stack((xx[mask], yy[mask], pressed.z[mask])) - np.asarray(camera_position, dtype=np.float64)
    oracle = ContactOracle(mask, multipliers, PointCloud(points), tol)
    log.debug(f"Contact oracle: {oracle.node_count} nodes (lambda_tol {tol:.3e})")
    return pressed, oracle
