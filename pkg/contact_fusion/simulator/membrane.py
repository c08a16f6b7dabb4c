# contact_fusion/simulator/membrane.py
"""
Pressurised membrane model: the clamped height field z solving
-div(T grad z) = p on a regular grid, discretised with the 5-point
finite-difference stencil. Unknowns are the interior deflections
w = z - z_b; boundary nodes are eliminated (w = 0).
"""

import logging
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy import sparse
from scipy.ndimage import map_coordinates
from scipy.optimize import bisect
from scipy.sparse.linalg import splu

from contact_fusion.errors import ModelError
from contact_fusion.models import MembraneSpec, SceneSpec

log = logging.getLogger(__name__)

RESIDUAL_TOLERANCE = 1e-10


@dataclass(frozen=True)
class MembraneGrid:
    """Node layout centred on the proximity optical axis. Fields have shape (ny, nx)."""
    nx: int
    ny: int
    length: float
    width: float
    boundary_height: float

    @classmethod
    def from_spec(cls, spec: MembraneSpec) -> "MembraneGrid":
        return cls(spec.nx, spec.ny, spec.length, spec.width, spec.boundary_height)

    @property
    def hx(self) -> float:
        return self.length / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.width / (self.ny - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(-self.length / 2, self.length / 2, self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return np.linspace(-self.width / 2, self.width / 2, self.ny)

    @cached_property
    def xy(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y)

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[1:-1, 1:-1] = True
        return mask

    @property
    def n_interior(self) -> int:
        return (self.nx - 2) * (self.ny - 2)

    def contains(self, x, y) -> np.ndarray:
        return (np.abs(x) <= self.length / 2) & (np.abs(y) <= self.width / 2)

    def fractional_index(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """(row, column) fractional node coordinates of world points."""
        return (np.asarray(y) + self.width / 2) / self.hy, (np.asarray(x) + self.length / 2) / self.hx

    def nearest_node(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        row, col = self.fractional_index(x, y)
        return (np.clip(np.rint(row), 0, self.ny - 1).astype(np.int64),
                np.clip(np.rint(col), 0, self.nx - 1).astype(np.int64))

    def sample(self, field: np.ndarray, x, y) -> np.ndarray:
        """Bilinear interpolation of a nodal field; NaN outside the membrane."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        row, col = self.fractional_index(x, y)
        values = map_coordinates(field, [row.ravel(), col.ravel()], order=1, mode="nearest").reshape(x.shape)
        return np.where(self.contains(x, y), values, np.nan)


def tension_field(grid: MembraneGrid, tension: float, tension_map: str = "uniform",
                  stiffness_ratio: float = 8.0) -> np.ndarray:
    """Per-node tension. The two-zone map stiffens two diagonal quadrants by `stiffness_ratio`."""
    field = np.full(grid.shape, float(tension))
    if tension_map == "two_zone":
        xx, yy = grid.xy
        stiff = (xx < 0) ^ (yy < 0)
        field[stiff] *= stiffness_ratio
    elif tension_map != "uniform":
        raise ModelError(f"Unknown tension map '{tension_map}'")
    return field


@dataclass(frozen=True)
class StencilCoefficients:
    """Neighbour couplings of every interior node, each of shape (ny-2, nx-2)."""
    east: np.ndarray
    west: np.ndarray
    north: np.ndarray
    south: np.ndarray

    @property
    def diagonal(self) -> np.ndarray:
        return self.east + self.west + self.north + self.south


def stencil_coefficients(grid: MembraneGrid, tension: np.ndarray) -> StencilCoefficients:
    # edge tension is the mean of its two end nodes
    tx = 0.5 * (tension[:, 1:] + tension[:, :-1]) / grid.hx ** 2
    ty = 0.5 * (tension[1:, :] + tension[:-1, :]) / grid.hy ** 2
    return StencilCoefficients(
        east=tx[1:-1, 1:],
        west=tx[1:-1, :-1],
        north=ty[1:, 1:-1],
        south=ty[:-1, 1:-1],
    )


def assemble_stiffness(grid: MembraneGrid, coefficients: StencilCoefficients) -> sparse.csr_matrix:
    """Symmetric positive definite interior stiffness matrix K."""
    ni, nj = grid.nx - 2, grid.ny - 2
    index = np.arange(ni * nj).reshape(nj, ni)
    rows = [index.ravel()]
    cols = [index.ravel()]
    vals = [coefficients.diagonal.ravel()]

    def couple(src, dst, coeff):
        rows.append(src.ravel())
        cols.append(dst.ravel())
        vals.append(-coeff.ravel())

    couple(index[:, :-1], index[:, 1:], coefficients.east[:, :-1])
    couple(index[:, 1:], index[:, :-1], coefficients.west[:, 1:])
    couple(index[:-1, :], index[1:, :], coefficients.north[:-1, :])
    couple(index[1:, :], index[:-1, :], coefficients.south[1:, :])

    k = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ni * nj, ni * nj),
    )
    return k.tocsr()


@dataclass(frozen=True, eq=False)
class MembraneModel:
    """Discretised operator for one grid and tension map; shared by every state built on it."""
    grid: MembraneGrid
    tension: np.ndarray
    coefficients: StencilCoefficients
    stiffness: sparse.csr_matrix

    @cached_property
    def factor(self):
        return splu(self.stiffness.tocsc())

    @cached_property
    def unit_deflection(self) -> np.ndarray:
        """Interior deflection under unit pressure."""
        return self.factor.solve(np.ones(self.grid.n_interior))

    def load(self, pressure: float) -> np.ndarray:
        return np.full(self.grid.n_interior, float(pressure))

    def to_interior(self, field: np.ndarray) -> np.ndarray:
        return np.ascontiguousarray(field[1:-1, 1:-1]).ravel()

    def to_grid(self, interior: np.ndarray, boundary_value: float = 0.0) -> np.ndarray:
        field = np.full(self.grid.shape, boundary_value, dtype=np.float64)
        field[1:-1, 1:-1] = interior.reshape(self.grid.ny - 2, self.grid.nx - 2)
        return field

    def energy(self, w: np.ndarray, pressure: float) -> float:
        return float(0.5 * w @ (self.stiffness @ w) - self.load(pressure) @ w)


def build_membrane_model(grid: MembraneGrid, tension: np.ndarray) -> MembraneModel:
    if np.any(~np.isfinite(tension)) or np.any(tension <= 0):
        raise ModelError("Tension must be finite and strictly positive at every node")
    coefficients = stencil_coefficients(grid, tension)
    return MembraneModel(grid, tension, coefficients, assemble_stiffness(grid, coefficients))


@lru_cache(maxsize=16)
def model_for_spec(nx: int, ny: int, length: float, width: float, boundary_height: float,
                   tension: float, tension_map: str, stiffness_ratio: float) -> MembraneModel:
    grid = MembraneGrid(nx, ny, length, width, boundary_height)
    return build_membrane_model(grid, tension_field(grid, tension, tension_map, stiffness_ratio))


def membrane_model(spec: MembraneSpec) -> MembraneModel:
    return model_for_spec(spec.nx, spec.ny, spec.length, spec.width, spec.boundary_height,
                          spec.tension, spec.tension_map, spec.stiffness_ratio)


@dataclass(frozen=True, eq=False)
class MembraneState:
    """Height field z (metres above the camera plane) with its model and chamber pressure."""
    model: MembraneModel
    z: np.ndarray
    pressure: float

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64, copy=True)
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @property
    def grid(self) -> MembraneGrid:
        return self.model.grid

    @property
    def tension(self) -> np.ndarray:
        return self.model.tension

    @property
    def boundary_height(self) -> float:
        return self.grid.boundary_height

    @property
    def deflection(self) -> np.ndarray:
        """Interior w = z - z_b as a flat vector."""
        return self.model.to_interior(self.z - self.boundary_height)

    @property
    def apex(self) -> float:
        return float(self.z.max())

    def height_at(self, x, y) -> np.ndarray:
        return self.grid.sample(self.z, x, y)


def state_from_deflection(model: MembraneModel, w: np.ndarray, pressure: float) -> MembraneState:
    return MembraneState(model, model.to_grid(w) + model.grid.boundary_height, pressure)


def calibrate_pressure(model: MembraneModel, apex_height: float) -> float:
    """Pressure whose free inflation puts the apex at `apex_height`, found by bisection."""
    target = apex_height - model.grid.boundary_height
    unit_apex = float(model.unit_deflection.max())
    if target <= 0 or unit_apex <= 0:
        raise ModelError(f"Cannot calibrate pressure for apex {apex_height} over clamp {model.grid.boundary_height}")

    def apex_error(p: float) -> float:
        return p * unit_apex - target

    upper = 1.0
    while apex_error(upper) < 0:
        upper *= 2.0
    pressure = bisect(apex_error, 0.0, upper, xtol=1e-14, rtol=1e-15, maxiter=200)
    log.debug(f"Calibrated pressure {pressure:.6f} for apex {apex_height:.4f} m")
    return float(pressure)


def inflate(model: MembraneModel, pressure: float) -> MembraneState:
    if pressure < 0:
        raise ModelError(f"Pressure must be >= 0, got {pressure}")
    f = model.load(pressure)
    w = model.factor.solve(f)
    norm = np.linalg.norm(f)
    if norm > 0:
        residual = np.linalg.norm(model.stiffness @ w - f) / norm
        if residual > RESIDUAL_TOLERANCE:
            raise ModelError(f"Membrane solve residual {residual:.3e} exceeds {RESIDUAL_TOLERANCE}")
    return state_from_deflection(model, w, pressure)


def inflate_membrane(spec: SceneSpec) -> MembraneState:
    """Free (contact-free) membrane for a scene; pressure calibrated to the apex when unset."""
    model = membrane_model(spec.membrane)
    pressure = spec.membrane.pressure
    if pressure is None:
        pressure = calibrate_pressure(model, spec.membrane.apex_height)
    return inflate(model, pressure)
