# contact_fusion/models.py

import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal, Optional, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from contact_fusion.errors import ConfigError, MissingInputError
from contact_fusion.geometry.depth import PinholeIntrinsics

log = logging.getLogger(__name__)

Primitive = Literal["octopus", "cube", "cup", "tray"]
Regime = Literal["low", "medium", "high"]
Algorithm = Literal["fusion", "tactile", "proximity", "mechanics"]
TensionMap = Literal["uniform", "two_zone"]

ALGORITHMS: tuple[str, ...] = ("fusion", "tactile", "proximity", "mechanics")
EVALUATION_OBJECTS: tuple[str, ...] = ("octopus", "cube", "cup")
REGIMES: tuple[str, ...] = ("low", "medium", "high")

# Simulator defaults, metres
MEMBRANE_LENGTH = 0.355
MEMBRANE_WIDTH = 0.205
BOUNDARY_HEIGHT = 0.229
APEX_HEIGHT = 0.314
HIGH_STRAIN_APEX_HEIGHT = 0.380
DEFAULT_GRID = 128


class FrozenModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# --- Cameras ---
class CameraSpec(FrozenModel):
    """A virtual camera looking along +z from `position` (translation-only pose)."""
    intrinsics: PinholeIntrinsics = Field(default_factory=PinholeIntrinsics)
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)


# --- Scene ---
class MembraneSpec(FrozenModel):
    nx: int = Field(default=DEFAULT_GRID, ge=32, description="Grid nodes along x (membrane length).")
    ny: int = Field(default=DEFAULT_GRID, ge=32, description="Grid nodes along y (membrane width).")
    length: float = Field(default=MEMBRANE_LENGTH, gt=0)
    width: float = Field(default=MEMBRANE_WIDTH, gt=0)
    boundary_height: float = Field(default=BOUNDARY_HEIGHT, gt=0, description="Clamp plane z_b.")
    apex_height: float = Field(default=APEX_HEIGHT, description="Target free-membrane apex when pressure is calibrated.")
    pressure: Optional[float] = Field(default=None, ge=0, description="Chamber pressure; calibrated from apex_height when unset.")
    tension: float = Field(default=1.0, gt=0, description="Base tension, N/m.")
    tension_map: TensionMap = "uniform"
    stiffness_ratio: float = Field(default=8.0, ge=1.0, description="Stiff/soft ratio for the two-zone map.")

    @model_validator(mode="after")
    def apex_above_clamp(self):
        if self.pressure is None and self.apex_height <= self.boundary_height:
            raise ValueError("apex_height must be above boundary_height when pressure is calibrated")
        return self

    @property
    def hx(self) -> float:
        return self.length / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.width / (self.ny - 1)


class ObjectSpec(FrozenModel):
    primitive: Primitive = "cube"
    x: float = 0.0
    y: float = 0.0
    yaw_deg: float = 0.0


class PressSpec(FrozenModel):
    regime: Optional[Regime] = "medium"
    depth: Optional[float] = Field(default=None, ge=0, description="Press depth below first contact; overrides the regime calibration.")
    hover: float = Field(default=0.0, ge=0, description="Gap left above first contact (object not touching).")

    @model_validator(mode="after")
    def depth_or_regime(self):
        if self.depth is None and self.regime is None:
            raise ValueError("either press.depth or press.regime must be given")
        if self.hover > 0 and self.depth not in (None, 0.0):
            log.warning(f"PressSpec: hover={self.hover} with depth={self.depth}; hover wins.")
        return self


class NoiseSpec(FrozenModel):
    seed: int = Field(default=0, ge=0)
    tactile_sigma: float = Field(default=0.0005, ge=0)
    proximity_sigma: float = Field(default=0.0, ge=0)
    blob_count: int = Field(default=2, ge=0)


class SolverSpec(FrozenModel):
    method: Literal["psor", "active_set"] = "psor"
    omega: float = Field(default=1.9, gt=0, lt=2)
    max_sweeps: int = Field(default=20000, gt=0)
    sweep_tolerance: float = Field(default=1e-10, gt=0)
    max_active_set_iterations: int = Field(default=200, gt=0)


class SceneSpec(FrozenModel):
    object: ObjectSpec = Field(default_factory=ObjectSpec)
    press: PressSpec = Field(default_factory=PressSpec)
    membrane: MembraneSpec = Field(default_factory=MembraneSpec)
    proximity_camera: CameraSpec = Field(default_factory=CameraSpec)
    tactile_camera: CameraSpec = Field(default_factory=lambda: CameraSpec(position=(0.010, 0.0, 0.0)))
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)

    def with_seed(self, seed: int) -> "SceneSpec":
        return self.model_copy(update={"noise": self.noise.model_copy(update={"seed": seed})})


# --- Fusion ---
class HsvRange(FrozenModel):
    """Inclusive HSV box; hue in degrees, saturation and value in [0, 1]."""
    hue_min: float = Field(ge=0, le=360)
    hue_max: float = Field(ge=0, le=360)
    sat_min: float = Field(default=0.0, ge=0, le=1)
    sat_max: float = Field(default=1.0, ge=0, le=1)
    val_min: float = Field(default=0.0, ge=0, le=1)
    val_max: float = Field(default=1.0, ge=0, le=1)

    @model_validator(mode="after")
    def well_ordered(self):
        for low, high in (("hue_min", "hue_max"), ("sat_min", "sat_max"), ("val_min", "val_max")):
            if getattr(self, low) > getattr(self, high):
                raise ValueError(f"{low} must not exceed {high}")
        return self


MEMBRANE_HSV = HsvRange(hue_min=255, hue_max=285, sat_min=0.3, val_min=0.15)
REFLECTION_HSV = HsvRange(hue_min=15, hue_max=45, sat_min=0.3, val_min=0.15)


class OutlierFilterSpec(FrozenModel):
    enabled: bool = True
    k_neighbors: int = Field(default=20, ge=1)
    std_ratio: float = Field(default=2.0, gt=0)


class FusionConfig(FrozenModel):
    tolerance: float = Field(default=0.03, gt=0, lt=1, description="Relative band t in |d_p - d_t| <= t|d_p|.")
    apply_mask: bool = True
    mask_ranges: list[HsvRange] = Field(default_factory=lambda: [MEMBRANE_HSV, REFLECTION_HSV])
    outlier: OutlierFilterSpec = Field(default_factory=OutlierFilterSpec)
    homography: Optional[list[list[float]]] = None
    intrinsics: PinholeIntrinsics = Field(default_factory=PinholeIntrinsics)

    @field_validator("homography")
    @classmethod
    def homography_shape(cls, v):
        if v is not None and (len(v) != 3 or any(len(row) != 3 for row in v)):
            raise ValueError("homography must be a 3x3 nested list")
        return v


# --- Baselines ---
class ThresholdConfig(FrozenModel):
    deformation_floor: float = Field(default=0.0015, ge=0, description="Deformation treated as noise by tactile-only, metres.")
    keep_fraction: float = Field(default=0.60, gt=0, le=1, description="Top fraction of deformed pixels kept.")


class MechanicsModelConfig(FrozenModel):
    mesh_nx: int = Field(default=36, ge=8)
    mesh_ny: int = Field(default=21, ge=8)
    length: float = Field(default=MEMBRANE_LENGTH, gt=0)
    width: float = Field(default=MEMBRANE_WIDTH, gt=0)
    boundary_height: float = Field(default=BOUNDARY_HEIGHT, gt=0)
    tension: float = Field(default=1.0, gt=0)
    crop_margin_cells: int = Field(default=6, ge=0)
    crop_cell_size: tuple[float, float] = (MEMBRANE_LENGTH / (DEFAULT_GRID - 1), MEMBRANE_WIDTH / (DEFAULT_GRID - 1))
    regularization: float = Field(default=1e-6, gt=0, description="Weight mu on the scaled contact forces.")
    debias_regularization: float = Field(default=1e-10, gt=0, description="Weight on the scaled forces when refitting the detected support.")
    lambda_tol_rel: float = Field(default=1e-8, ge=0)
    contact_threshold: float = Field(default=0.5, ge=0, description="Minimum contact force as a fraction of pressure.")
    min_observed_fraction: float = Field(default=0.5, gt=0, le=1)
    kkt_tolerance: float = Field(default=1e-8, gt=0)
    max_refinement_iterations: int = Field(default=30, gt=0)
    osqp_max_iter: int = Field(default=20000, gt=0)
    tactile_camera: CameraSpec = Field(default_factory=lambda: CameraSpec(position=(0.010, 0.0, 0.0)))
    proximity_position: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def hx(self) -> float:
        return self.length / (self.mesh_nx - 1)

    @property
    def hy(self) -> float:
        return self.width / (self.mesh_ny - 1)

    @classmethod
    def for_scene(cls, spec: SceneSpec, **overrides) -> "MechanicsModelConfig":
        m = spec.membrane
        values = dict(
            length=m.length,
            width=m.width,
            boundary_height=m.boundary_height,
            tension=m.tension,
            crop_cell_size=(m.hx, m.hy),
            tactile_camera=spec.tactile_camera,
            proximity_position=spec.proximity_camera.position,
        )
        values.update(overrides)
        return cls(**values)


# --- Evaluation ---
class GridConfig(FrozenModel):
    objects: list[Primitive] = Field(default_factory=lambda: list(EVALUATION_OBJECTS))
    regimes: list[Regime] = Field(default_factory=lambda: list(REGIMES))
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])
    algorithms: list[Algorithm] = Field(default_factory=lambda: list(ALGORITHMS))
    membrane: MembraneSpec = Field(default_factory=MembraneSpec)
    noise: NoiseSpec = Field(default_factory=NoiseSpec)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    mechanics: MechanicsModelConfig = Field(default_factory=MechanicsModelConfig)
    strain_tolerance: float = Field(default=0.05, gt=0)
    alignment_residual_mm: float = Field(default=5.0, gt=0, description="Post-ICP residual above which RMSE is flagged.")
    dump_cells: bool = False


class ReportRow(FrozenModel):
    object: str
    regime: str
    algorithm: str
    seeds: int
    scored: int
    rmse_mean_mm: Optional[float]
    rmse_std_mm: Optional[float]
    iou: float
    precision: float
    recall: float
    no_contact: int
    alignment_flagged: int


class CellFailure(FrozenModel):
    object: str
    regime: str
    seed: int
    algorithm: Optional[str]
    error: str


class EvaluationReport(FrozenModel):
    rows: list[ReportRow] = Field(default_factory=list)
    failures: list[CellFailure] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=list)
    runtime_ms: dict[str, float] = Field(default_factory=dict, description="Mean runtime per algorithm; kept out of the canonical JSON.")

    def canonical_dict(self) -> dict:
        return self.model_dump(mode="json", exclude={"runtime_ms"})


# --- Applications ---
class VariedStiffnessDemoConfig(FrozenModel):
    primitive: Primitive = "cube"
    regime: Regime = "medium"
    stiffness_ratio: float = Field(default=8.0, ge=1.0)
    seed: int = 0


class TrayAngleDemoConfig(FrozenModel):
    start_deg: float = -10.0
    stop_deg: float = 10.0
    steps: int = Field(default=11, ge=2)
    press_depth: float = Field(default=0.012, gt=0)
    static_frames: int = Field(default=10, ge=2, description="Frames in the static noise comparison.")
    seed: int = 0


class PoseTrackDemoConfig(FrozenModel):
    frames: int = Field(default=16, ge=2)
    total_yaw_deg: float = 45.0
    press_depth: float = Field(default=0.020, gt=0)
    frame_period_s: float = Field(default=1.0 / 30.0, gt=0)
    seed: int = 0


class DemoConfig(FrozenModel):
    membrane: MembraneSpec = Field(default_factory=MembraneSpec)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    thresholds: ThresholdConfig = Field(default_factory=ThresholdConfig)
    varied_stiffness: VariedStiffnessDemoConfig = Field(default_factory=VariedStiffnessDemoConfig)
    tray_angle: TrayAngleDemoConfig = Field(default_factory=TrayAngleDemoConfig)
    pose_track: PoseTrackDemoConfig = Field(default_factory=PoseTrackDemoConfig)


# --- CLI ---
class RunManifest(FrozenModel):
    command: str
    config_paths: list[str] = Field(default_factory=list)
    seeds: list[int] = Field(default_factory=list)
    output_dir: str
    tool_version: str
    timings_s: dict[str, float] = Field(default_factory=dict)
    outputs: dict[str, str] = Field(default_factory=dict, description="Relative output path -> sha256.")


# --- Loading ---
ModelT = TypeVar("ModelT", bound=BaseModel)


def validation_messages(error: ValidationError) -> list[str]:
    return [f"{'.'.join(str(part) for part in e['loc']) or '<root>'}: {e['msg']}" for e in error.errors()]


def parse_config(data: dict, model: Type[ModelT], source: str = "<config>") -> ModelT:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid {model.__name__} in {source}", validation_messages(e)) from e


def load_config(path, model: Type[ModelT], section: Optional[str] = None) -> ModelT:
    """Reads a TOML file (optionally one top-level table of it) into `model`."""
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(path)
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {path}: {e}") from e
    if section is not None:
        data = data.get(section, {})
    return parse_config(data, model, str(path))
