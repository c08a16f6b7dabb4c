# contact_fusion/simulator/obstacles.py
"""
Rigid press-in objects. Each shape is described in a local frame whose lowest
point sits at z = 0; a RigidObstacle poses it over the membrane (planar
position, yaw, height of the bottom) and exposes the underside height field
phi on the membrane grid plus analytic ray hits for the proximity camera.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Protocol

import numpy as np

from contact_fusion.errors import SceneError
from contact_fusion.models import ObjectSpec
from contact_fusion.simulator.membrane import MembraneGrid, MembraneState

log = logging.getLogger(__name__)

NO_HIT = np.inf


class Shape(Protocol):
    height: float

    def underside(self, lx: np.ndarray, ly: np.ndarray) -> np.ndarray:
        """Local height of the lowest surface above (lx, ly); inf outside the footprint."""

    def ray_depth(self, origin: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """First hit parameter t along origin + t (a, b, 1); inf when the ray misses."""


def _slab_hit(origin, a, b, lower, upper) -> np.ndarray:
    """Entry parameter of rays into an axis-aligned box, inf on a miss."""
    t_enter = np.full(np.shape(a), -np.inf)
    t_exit = np.full(np.shape(a), np.inf)
    for o, d, lo, hi in zip(origin, (a, b, np.ones_like(a)), lower, upper):
        parallel = d == 0
        safe = np.where(parallel, 1.0, d)
        t1 = (lo - o) / safe
        t2 = (hi - o) / safe
        near = np.where(parallel, np.where((o >= lo) & (o <= hi), -np.inf, np.inf), np.minimum(t1, t2))
        far = np.where(parallel, np.where((o >= lo) & (o <= hi), np.inf, -np.inf), np.maximum(t1, t2))
        t_enter = np.maximum(t_enter, near)
        t_exit = np.minimum(t_exit, far)
    hit = (t_enter <= t_exit) & (t_enter > 0)
    return np.where(hit, t_enter, NO_HIT)


def _cylinder_roots(origin, a, b, radius) -> tuple[np.ndarray, np.ndarray]:
    """Both crossings of the vertical cylinder r = radius; NaN where the ray misses it."""
    qa = a ** 2 + b ** 2
    qb = 2.0 * (origin[0] * a + origin[1] * b)
    qc = origin[0] ** 2 + origin[1] ** 2 - radius ** 2
    disc = qb ** 2 - 4.0 * qa * qc
    ok = (disc >= 0) & (qa > 0)
    root = np.sqrt(np.where(ok, disc, 0.0))
    denom = np.where(ok, 2.0 * qa, 1.0)
    return np.where(ok, (-qb - root) / denom, np.nan), np.where(ok, (-qb + root) / denom, np.nan)


@dataclass(frozen=True)
class Box:
    length: float
    width: float
    height: float

    def underside(self, lx, ly):
        inside = (np.abs(lx) <= self.length / 2) & (np.abs(ly) <= self.width / 2)
        return np.where(inside, 0.0, np.inf)

    def ray_depth(self, origin, a, b):
        return _slab_hit(origin, a, b,
                         (-self.length / 2, -self.width / 2, 0.0),
                         (self.length / 2, self.width / 2, self.height))


@dataclass(frozen=True)
class Sphere:
    radius: float

    @property
    def height(self) -> float:
        return 2.0 * self.radius

    def underside(self, lx, ly):
        r2 = lx ** 2 + ly ** 2
        inside = r2 <= self.radius ** 2
        return np.where(inside, self.radius - np.sqrt(np.where(inside, self.radius ** 2 - r2, 0.0)), np.inf)

    def ray_depth(self, origin, a, b):
        oc = np.asarray(origin, dtype=np.float64) - (0.0, 0.0, self.radius)
        qa = a ** 2 + b ** 2 + 1.0
        qb = 2.0 * (oc[0] * a + oc[1] * b + oc[2])
        qc = float(oc @ oc) - self.radius ** 2
        disc = qb ** 2 - 4.0 * qa * qc
        t = (-qb - np.sqrt(np.maximum(disc, 0.0))) / (2.0 * qa)
        return np.where((disc >= 0) & (t > 0), t, NO_HIT)


@dataclass(frozen=True)
class Cup:
    """Upturned cup: a tube standing on its rim, closed by a base, with a handle block beside it."""
    outer_radius: float = 0.045
    rim_width: float = 0.004
    height: float = 0.095
    base_height: float = 0.080
    handle_gap: float = 0.010
    handle_size: tuple[float, float, float] = (0.015, 0.025, 0.060)

    @property
    def inner_radius(self) -> float:
        return self.outer_radius - self.rim_width

    @property
    def handle(self) -> Box:
        return Box(*self.handle_size)

    @property
    def handle_centre(self) -> float:
        return self.outer_radius + self.handle_gap + self.handle_size[0] / 2

    def underside(self, lx, ly):
        r = np.hypot(lx, ly)
        phi = np.where(r <= self.outer_radius, 0.0, np.inf)
        phi = np.where(r < self.inner_radius, self.base_height, phi)
        return np.minimum(phi, self.handle.underside(lx - self.handle_centre, ly))

    def ray_depth(self, origin, a, b):
        ox, oy, oz = origin

        def height(t):
            return oz + t

        def radius(t):
            return np.hypot(ox + a * t, oy + b * t)

        candidates = []
        # rim face
        t_rim = np.full(np.shape(a), -oz)
        r_rim = radius(t_rim)
        candidates.append(np.where((r_rim >= self.inner_radius) & (r_rim <= self.outer_radius), t_rim, NO_HIT))
        # outer wall, entering from outside
        t_out, _ = _cylinder_roots(origin, a, b, self.outer_radius)
        with np.errstate(invalid="ignore"):
            ok = (t_out > 0) & (height(t_out) >= 0) & (height(t_out) <= self.height)
        candidates.append(np.where(ok, t_out, NO_HIT))
        # inner wall, seen from inside the cavity
        _, t_in = _cylinder_roots(origin, a, b, self.inner_radius)
        with np.errstate(invalid="ignore"):
            ok = (t_in > 0) & (height(t_in) >= 0) & (height(t_in) <= self.base_height)
        candidates.append(np.where(ok, t_in, NO_HIT))
        # underside of the base
        t_base = np.full(np.shape(a), self.base_height - oz)
        candidates.append(np.where(radius(t_base) < self.inner_radius, t_base, NO_HIT))
        candidates.append(self.handle.ray_depth(
            np.array([ox - self.handle_centre, oy, oz]), a, b))
        return np.minimum.reduce(candidates)


SHAPES: dict[str, Shape] = {
    "octopus": Sphere(radius=0.040),
    "cube": Box(0.057, 0.057, 0.057),
    "cup": Cup(),
    "tray": Box(0.180, 0.030, 0.040),
}


def shape_for(primitive: str) -> Shape:
    try:
        return SHAPES[primitive]
    except KeyError:
        raise SceneError(f"Unknown primitive '{primitive}'") from None


@dataclass(frozen=True, eq=False)
class RigidObstacle:
    """A posed shape. `z_bottom` is the world height of the shape's lowest point."""
    shape: Shape
    grid: MembraneGrid
    x: float
    y: float
    yaw: float
    z_bottom: float

    def to_local(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        dx, dy = np.asarray(x) - self.x, np.asarray(y) - self.y
        return c * dx + s * dy, -s * dx + c * dy

    @cached_property
    def local_underside(self) -> np.ndarray:
        return self.shape.underside(*self.to_local(*self.grid.xy))

    @cached_property
    def phi(self) -> np.ndarray:
        """Underside height field on the membrane grid, inf outside the footprint."""
        return self.z_bottom + self.local_underside

    @property
    def top(self) -> float:
        return self.z_bottom + self.shape.height

    @property
    def footprint(self) -> np.ndarray:
        return np.isfinite(self.local_underside)

    def lifted(self, dz: float) -> "RigidObstacle":
        return RigidObstacle(self.shape, self.grid, self.x, self.y, self.yaw, self.z_bottom + dz)

    def ray_depth(self, camera_position, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """z-depth from the camera to the first surface hit per pixel ray, inf on a miss."""
        cx, cy, cz = (float(v) for v in camera_position)
        c, s = np.cos(self.yaw), np.sin(self.yaw)
        lx, ly = self.to_local(cx, cy)
        origin = np.array([float(lx), float(ly), cz - self.z_bottom])
        la = c * a + s * b
        lb = -s * a + c * b
        return self.shape.ray_depth(origin, la, lb)


def first_contact_height(shape: Shape, grid: MembraneGrid, free: MembraneState, spec: ObjectSpec) -> float:
    """Bottom height at which the object just touches the free membrane."""
    probe = RigidObstacle(shape, grid, spec.x, spec.y, np.deg2rad(spec.yaw_deg), 0.0)
    footprint = probe.footprint
    if not footprint.any():
        raise SceneError(f"{spec.primitive} at ({spec.x}, {spec.y}) has no footprint on the membrane grid")
    return float(np.max(free.z[footprint] - probe.local_underside[footprint]))


def place_obstacle(spec: ObjectSpec, free: MembraneState, depth: float = 0.0, hover: float = 0.0) -> RigidObstacle:
    """
    Poses the object `depth` metres past first contact (or `hover` metres short
    of it). The object may sink into the housing below the clamp plane as long
    as its top stays above it.
    """
    shape = shape_for(spec.primitive)
    grid = free.grid
    z_bottom = first_contact_height(shape, grid, free, spec) - depth + hover
    obstacle = RigidObstacle(shape, grid, spec.x, spec.y, np.deg2rad(spec.yaw_deg), z_bottom)
    if obstacle.top <= grid.boundary_height:
        raise SceneError(
            f"{spec.primitive} pressed {depth * 1000:.1f} mm passes below the clamp plane "
            f"z_b={grid.boundary_height:.4f} m (top at z={obstacle.top:.4f} m)"
        )
    log.debug(f"Placed {spec.primitive} at ({spec.x:.3f}, {spec.y:.3f}) yaw {spec.yaw_deg:.1f} deg, "
              f"bottom z={z_bottom:.4f} m (depth {depth * 1000:.1f} mm, hover {hover * 1000:.1f} mm)")
    return obstacle
