# contact_fusion/simulator/bundle.py
"""
Scene bundles: a directory holding everything an estimator or the scorer
needs from one simulated capture, written atomically.

    scene.toml               the SceneSpec
    metadata.json            homography, timestamp, press depth, pressure, counts
    proximity_depth.dpth     DPTH float32 depth images
    tactile_depth.dpth
    reference_tactile.dpth   free-membrane renders (no noise)
    reference_proximity.dpth
    proximity_rgb.png
    blob_mask.pgm            8-bit pixel masks
    oracle_mask.pgm          8-bit grid-node mask (ny x nx)
    oracle.ply               contact nodes in the proximity-camera frame
"""

import logging
import os
import shutil
import tempfile
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import tomli_w

from contact_fusion.errors import ConfigError, MissingInputError, OutputError
from contact_fusion.geometry import io
from contact_fusion.geometry.depth import DepthImage, Homography, RgbImage
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud
from contact_fusion.models import SceneSpec, parse_config
from contact_fusion.simulator.membrane import MembraneGrid
from contact_fusion.simulator.scene import SimulatedScene

log = logging.getLogger(__name__)

SCENE_FILE = "scene.toml"
METADATA_FILE = "metadata.json"
DEPTH_FILES = {
    "proximity_depth": "proximity_depth.dpth",
    "tactile_depth": "tactile_depth.dpth",
    "reference_tactile": "reference_tactile.dpth",
    "reference_proximity": "reference_proximity.dpth",
}
RGB_FILE = "proximity_rgb.png"
BLOB_MASK_FILE = "blob_mask.pgm"
ORACLE_MASK_FILE = "oracle_mask.pgm"
ORACLE_CLOUD_FILE = "oracle.ply"


def scene_to_toml(spec: SceneSpec) -> str:
    return tomli_w.dumps(spec.model_dump(mode="json", exclude_none=True))


def replace_directory(staging: Path, target: Path) -> None:
    """Moves a fully written staging directory onto `target`, replacing any previous contents."""
    backup = None
    try:
        if target.exists():
            backup = target.with_name(f".{target.name}.old")
            if backup.exists():
                shutil.rmtree(backup)
            os.replace(target, backup)
        os.replace(staging, target)
    except OSError as e:
        raise OutputError(f"Could not move bundle into {target}: {e}") from e
    if backup is not None:
        shutil.rmtree(backup, ignore_errors=True)


def export_bundle(scene: SimulatedScene, out_dir) -> Path:
    """Writes the scene's bundle into `out_dir` (created or replaced as a whole)."""
    target = Path(out_dir)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp"))
    except OSError as e:
        raise OutputError(f"Could not create a staging directory next to {target}: {e}") from e

    try:
        io.write_text(staging / SCENE_FILE, scene_to_toml(scene.spec))
        for attribute, name in DEPTH_FILES.items():
            io.write_depth_binary(staging / name, getattr(scene, attribute))
        io.write_rgb_png(staging / RGB_FILE, scene.proximity_rgb)
        io.write_mask_pgm(staging / BLOB_MASK_FILE, scene.blob_mask)
        io.write_mask_pgm(staging / ORACLE_MASK_FILE, scene.oracle.mask)
        io.write_ply(staging / ORACLE_CLOUD_FILE, scene.oracle.cloud)
        io.write_json(staging / METADATA_FILE, {
            "homography": scene.homography.to_list(),
            "timestamp": scene.timestamp,
            "press_depth": scene.press_depth,
            "pressure": scene.free.pressure,
            "free_apex": scene.free.apex,
            "oracle_nodes": scene.oracle.node_count,
            "oracle_tolerance": scene.oracle.tolerance,
            "blob_pixels": int(scene.blob_mask.sum()),
            "seed": scene.spec.noise.seed,
        })
    except Exception:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    replace_directory(staging, target)
    log.info(f"Exported bundle to {target}")
    return target


@dataclass(frozen=True, eq=False)
class LoadedBundle:
    """A bundle read back from disk; exposes the same capture fields as SimulatedScene."""
    path: Path
    spec: SceneSpec
    proximity_depth: DepthImage
    tactile_depth: DepthImage
    reference_tactile: DepthImage
    reference_proximity: DepthImage
    proximity_rgb: RgbImage
    blob_mask: np.ndarray
    oracle_mask: np.ndarray
    oracle_cloud: PointCloud
    homography: Homography
    timestamp: float
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def grid(self) -> MembraneGrid:
        return MembraneGrid.from_spec(self.spec.membrane)

    @property
    def pressure(self) -> float:
        return float(self.metadata["pressure"])

    @property
    def proximity_position(self) -> tuple[float, float, float]:
        return self.spec.proximity_camera.position

    @property
    def tactile_position(self) -> tuple[float, float, float]:
        return self.spec.tactile_camera.position

    def ground_truth_patch(self) -> ContactPatch:
        return ContactPatch(self.oracle_cloud, "ground-truth", self.timestamp,
                            diagnostics={"nodes": int(self.oracle_mask.sum())})


def load_bundle(path) -> LoadedBundle:
    root = Path(path)
    if not root.is_dir():
        raise MissingInputError(root)
    scene_path = root / SCENE_FILE
    if not scene_path.is_file():
        raise MissingInputError(scene_path)
    try:
        spec = parse_config(tomllib.loads(scene_path.read_text(encoding="utf-8")), SceneSpec, str(scene_path))
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {scene_path}: {e}") from e

    metadata = io.read_json(root / METADATA_FILE)
    depths = {attribute: io.read_depth_binary(root / name) for attribute, name in DEPTH_FILES.items()}
    oracle_mask = io.read_mask_pgm(root / ORACLE_MASK_FILE)
    grid = MembraneGrid.from_spec(spec.membrane)
    if oracle_mask.shape != grid.shape:
        raise ConfigError(f"Oracle mask shape {oracle_mask.shape} does not match the {grid.shape} membrane grid")

    return LoadedBundle(
        path=root,
        spec=spec,
        proximity_rgb=io.read_rgb_png(root / RGB_FILE),
        blob_mask=io.read_mask_pgm(root / BLOB_MASK_FILE),
        oracle_mask=oracle_mask,
        oracle_cloud=io.read_ply(root / ORACLE_CLOUD_FILE),
        homography=Homography(np.array(metadata["homography"], dtype=np.float64)),
        timestamp=float(metadata.get("timestamp", 0.0)),
        metadata=metadata,
        **depths,
    )
