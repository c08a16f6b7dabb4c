# contact_fusion/geometry/io.py
"""
File formats: ASCII PLY clouds, 16-bit PGM depth (1 unit = 0.1 mm), the
DPTH float32 binary, 8-bit PGM masks, PNG colour images and atomic JSON.
"""

import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Union

import cv2
import numpy as np

from contact_fusion.errors import ConfigError, MissingInputError, OutputError
from contact_fusion.geometry.depth import DepthImage, RgbImage
from contact_fusion.geometry.point_cloud import ContactPatch, PointCloud

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

PGM_DEPTH_SCALE = 10000.0  # units per metre (0.1 mm)
DPTH_MAGIC = b"DPTH"
DPTH_HEADER = np.dtype([("magic", "S4"), ("width", "<u4"), ("height", "<u4"), ("reserved", "<u4")])


def _require(path: PathLike) -> Path:
    path = Path(path)
    if not path.is_file():
        raise MissingInputError(path)
    return path


def _write_bytes_atomic(path: PathLike, payload: bytes) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except OSError as e:
        raise OutputError(f"Could not write {path}: {e}") from e


# --- Point clouds ---

def write_ply(path: PathLike, cloud: PointCloud) -> None:
    header = (
        "ply\n"
        "format ascii 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\n"
        "property float y\n"
        "property float z\n"
        "end_header\n"
    )
    body = "".join(f"{x:.6f} {y:.6f} {z:.6f}\n" for x, y, z in cloud.points.tolist())
    _write_bytes_atomic(path, (header + body).encode("ascii"))


def read_ply(path: PathLike) -> PointCloud:
    lines = _require(path).read_text(encoding="ascii").splitlines()
    try:
        end = lines.index("end_header")
        count = next(int(line.split()[-1]) for line in lines[:end] if line.startswith("element vertex"))
    except (ValueError, StopIteration) as e:
        raise ConfigError(f"Malformed PLY header in {path}") from e
    rows = [line.split()[:3] for line in lines[end + 1:end + 1 + count]]
    if len(rows) != count:
        raise ConfigError(f"PLY {path} declares {count} vertices but holds {len(rows)}")
    return PointCloud(np.array(rows, dtype=np.float64).reshape(-1, 3))


# --- Depth images ---

def write_depth_pgm(path: PathLike, depth: DepthImage) -> None:
    scaled = np.clip(np.rint(depth.data * PGM_DEPTH_SCALE), 0, np.iinfo(np.uint16).max).astype(np.uint16)
    _write_encoded(path, ".pgm", scaled)


def read_depth_pgm(path: PathLike) -> DepthImage:
    raw = cv2.imread(str(_require(path)), cv2.IMREAD_UNCHANGED)
    if raw is None or raw.dtype != np.uint16:
        raise ConfigError(f"{path} is not a 16-bit PGM depth image")
    return DepthImage(raw.astype(np.float64) / PGM_DEPTH_SCALE)


def write_depth_binary(path: PathLike, depth: DepthImage) -> None:
    header = np.array([(DPTH_MAGIC, depth.width, depth.height, 0)], dtype=DPTH_HEADER)
    payload = header.tobytes() + depth.data.astype("<f4").tobytes()
    _write_bytes_atomic(path, payload)


def read_depth_binary(path: PathLike) -> DepthImage:
    payload = _require(path).read_bytes()
    if len(payload) < DPTH_HEADER.itemsize:
        raise ConfigError(f"{path} is too short for a DPTH header")
    header = np.frombuffer(payload[:DPTH_HEADER.itemsize], dtype=DPTH_HEADER)[0]
    if header["magic"] != DPTH_MAGIC:
        raise ConfigError(f"{path} does not start with the DPTH magic")
    width, height = int(header["width"]), int(header["height"])
    values = np.frombuffer(payload[DPTH_HEADER.itemsize:], dtype="<f4")
    if values.size != width * height:
        raise ConfigError(f"{path}: expected {width * height} floats, found {values.size}")
    return DepthImage(values.astype(np.float64).reshape(height, width))


# --- Masks and colour ---

def write_mask_pgm(path: PathLike, mask: np.ndarray) -> None:
    _write_encoded(path, ".pgm", np.where(mask, 255, 0).astype(np.uint8))


def read_mask_pgm(path: PathLike) -> np.ndarray:
    raw = cv2.imread(str(_require(path)), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ConfigError(f"{path} is not a readable PGM mask")
    return raw > 0


def write_rgb_png(path: PathLike, image: RgbImage) -> None:
    _write_encoded(path, ".png", cv2.cvtColor(image.data, cv2.COLOR_RGB2BGR))


def read_rgb_png(path: PathLike) -> RgbImage:
    raw = cv2.imread(str(_require(path)), cv2.IMREAD_COLOR)
    if raw is None:
        raise ConfigError(f"{path} is not a readable colour image")
    return RgbImage(cv2.cvtColor(raw, cv2.COLOR_BGR2RGB))


def _write_encoded(path: PathLike, extension: str, array: np.ndarray) -> None:
    ok, encoded = cv2.imencode(extension, array)
    if not ok:
        raise OutputError(f"Could not encode {path} as {extension}")
    _write_bytes_atomic(path, encoded.tobytes())


# --- JSON ---

def write_json(path: PathLike, payload: Any) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    _write_bytes_atomic(path, text.encode("utf-8"))


def write_text(path: PathLike, text: str) -> None:
    _write_bytes_atomic(path, text.encode("utf-8"))


def read_json(path: PathLike) -> Any:
    try:
        return json.loads(_require(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed JSON in {path}: {e}") from e


# --- Contact patches ---

def patch_sidecar(patch: ContactPatch) -> dict[str, Any]:
    return {
        "source": patch.source,
        "points": len(patch),
        "timestamp": patch.timestamp,
        "timings_ms": {stage: round(ms, 3) for stage, ms in patch.timings_ms.items()},
        "diagnostics": patch.diagnostics,
    }


def write_patch(path: PathLike, patch: ContactPatch) -> tuple[Path, Path]:
    """Writes `<path>.ply` and its `<path>.json` sidecar; returns both paths."""
    base = Path(path).with_suffix("")
    ply, sidecar = base.with_suffix(".ply"), base.with_suffix(".json")
    write_ply(ply, patch.cloud)
    write_json(sidecar, patch_sidecar(patch))
    return ply, sidecar
