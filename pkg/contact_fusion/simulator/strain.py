# contact_fusion/simulator/strain.py
"""
Dot-grid strain measurement and the press-depth search that hits a strain
target. Dots sit on a 10 mm plan-view lattice; the membrane only moves
vertically, so each dot keeps its (x, y) and takes the local height.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from contact_fusion.errors import ConfigError, MeasurementError, ModelError, StrainRangeError
from contact_fusion.models import NoiseSpec, PressSpec, SceneSpec
from contact_fusion.simulator.membrane import MembraneGrid, MembraneState, inflate_membrane
from contact_fusion.simulator.obstacles import first_contact_height, place_obstacle, shape_for
from contact_fusion.simulator.solver import press_object

log = logging.getLogger(__name__)

DOT_PITCH = 0.010
STRAIN_TOLERANCE = 0.01
MONOTONICITY_SLACK = 0.02
BOTTOM_CLEARANCE = 1e-4
MAX_BISECTIONS = 60


@dataclass(frozen=True)
class DotGrid:
    """Dot centroids, each array of shape (rows, cols, 3). NaN marks a missing centroid."""
    undeformed: np.ndarray
    deformed: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.undeformed.shape[:2]


def lattice(grid: MembraneGrid, pitch: float = DOT_PITCH) -> tuple[np.ndarray, np.ndarray]:
    """Plan-view dot coordinates: multiples of `pitch` that fit inside the membrane."""
    kx = int(np.floor(grid.length / 2 / pitch + 1e-9))
    ky = int(np.floor(grid.width / 2 / pitch + 1e-9))
    return pitch * np.arange(-kx, kx + 1), pitch * np.arange(-ky, ky + 1)


def build_dot_grid(reference: MembraneState, deformed: MembraneState, pitch: float = DOT_PITCH) -> DotGrid:
    xs, ys = lattice(reference.grid, pitch)
    xx, yy = np.meshgrid(xs, ys)

    def centroids(state: MembraneState) -> np.ndarray:
        return np.stack((xx, yy, state.height_at(xx, yy)), axis=-1)

    return DotGrid(centroids(reference), centroids(deformed))


def measure_strain(g: DotGrid) -> float:
    """Largest relative stretch between row- or column-adjacent dots."""
    for points in (g.undeformed, g.deformed):
        missing = np.argwhere(~np.all(np.isfinite(points), axis=-1))
        if missing.size:
            index = tuple(int(i) for i in missing[0])
            raise MeasurementError(f"Dot centroid missing at grid index {index}", index)

    strains = []
    for axis in (0, 1):
        ref = np.linalg.norm(np.diff(g.undeformed, axis=axis), axis=-1)
        new = np.linalg.norm(np.diff(g.deformed, axis=axis), axis=-1)
        if ref.size:
            strains.append(((new - ref) / ref).max())
    if not strains:
        raise MeasurementError("Dot grid has no adjacent pairs")
    return float(max(strains))


def strain_at_depth(spec: SceneSpec, free: MembraneState, depth: float) -> float:
    obstacle = place_obstacle(spec.object, free, depth)
    pressed, _ = press_object(free, obstacle, spec.solver)
    return measure_strain(build_dot_grid(free, pressed))


def _geometry_only(spec: SceneSpec) -> SceneSpec:
    """Drops the fields that do not influence strain so cached searches are shared across seeds."""
    return spec.model_copy(update={"noise": NoiseSpec(), "press": PressSpec(regime="medium")})


def displacement_for_strain(target: float, spec: SceneSpec, tolerance: float = STRAIN_TOLERANCE,
                            initial_guess: float | None = None) -> float:
    """
    Press depth (metres past first contact) whose dot-grid strain is within
    `tolerance` of `target`, by bisection between first contact and the
    object sinking entirely below the clamp plane.
    """
    if target == 0:
        return 0.0
    if not 0 < target <= 2:
        raise ConfigError(f"Strain target must lie in (0, 2], got {target}")
    return _cached_displacement(float(target), _geometry_only(spec), float(tolerance), initial_guess)


@lru_cache(maxsize=64)
def _cached_displacement(target: float, spec: SceneSpec, tolerance: float, initial_guess: float | None) -> float:
    free = inflate_membrane(spec)
    shape = shape_for(spec.object.primitive)
    contact = first_contact_height(shape, free.grid, free, spec.object)
    # the object may sink into the housing until its top reaches the clamp plane
    deepest = contact + shape.height - free.boundary_height - BOTTOM_CLEARANCE
    if deepest <= 0:
        raise StrainRangeError(f"{spec.object.primitive} cannot be pressed: no clearance above the clamp plane")

    samples: list[tuple[float, float]] = []

    def evaluate(depth: float) -> float:
        strain = strain_at_depth(spec, free, depth)
        samples.append((depth, strain))
        ordered = sorted(samples)
        for (d0, s0), (d1, s1) in zip(ordered, ordered[1:]):
            if s1 < s0 - MONOTONICITY_SLACK:
                raise ModelError(
                    f"Strain is not monotone in press depth: {s0:.4f} at {d0 * 1000:.2f} mm "
                    f"but {s1:.4f} at {d1 * 1000:.2f} mm"
                )
        return strain

    top = evaluate(deepest)
    if top < target - tolerance:
        raise StrainRangeError(
            f"Strain target {target:.2f} unreachable for {spec.object.primitive} at "
            f"({spec.object.x:.3f}, {spec.object.y:.3f}): {top:.3f} at the deepest press "
            f"({deepest * 1000:.1f} mm)"
        )
    if abs(top - target) <= tolerance:
        return deepest

    lo, hi = 0.0, deepest
    depth = initial_guess if initial_guess is not None and 0 < initial_guess < deepest else 0.5 * deepest
    for _ in range(MAX_BISECTIONS):
        strain = evaluate(depth)
        if abs(strain - target) <= tolerance:
            log.info(f"Strain {strain:.3f} (target {target:.2f}) for {spec.object.primitive} "
                     f"at press depth {depth * 1000:.2f} mm")
            return depth
        if strain < target:
            lo = depth
        else:
            hi = depth
        depth = 0.5 * (lo + hi)
    raise StrainRangeError(f"Bisection for strain {target:.2f} did not reach tolerance {tolerance}")
