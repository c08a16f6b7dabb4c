# contact_fusion/applications/demos.py
"""
Scripted demonstration scenarios run on the simulator:

- varied-stiffness: fusion vs tactile-only on a two-zone tension membrane
- tray-angle: PCA angle of a tilted tray edge over a scripted sweep
- pose-track: a cup rotated about its handle, tracked with ICP
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from contact_fusion.applications.pose_tracking import icp_track
from contact_fusion.applications.tray_angle import TrayAngleEstimate, pca_angle, wrap_half_turn, write_angle_stream
from contact_fusion.errors import ConfigError, DataError
from contact_fusion.evaluation.inputs import AlgorithmConfigs, run_algorithm
from contact_fusion.evaluation.scoring import score_patch
from contact_fusion.geometry import io
from contact_fusion.geometry.point_cloud import PointCloud
from contact_fusion.geometry.registration import make_transform, rotation_about_z, yaw_degrees
from contact_fusion.models import DemoConfig, NoiseSpec, ObjectSpec, PressSpec, SceneSpec
from contact_fusion.simulator.obstacles import Cup, shape_for
from contact_fusion.simulator.scene import SimulatedScene, generate_scene, scene_for_cell

log = logging.getLogger(__name__)

TRAY_CONTROL_RATE_HZ = 29.0


@dataclass
class DemoResult:
    name: str
    summary: dict
    outputs: list[Path] = field(default_factory=list)


def _configs(cfg: DemoConfig) -> AlgorithmConfigs:
    return AlgorithmConfigs(fusion=cfg.fusion, thresholds=cfg.thresholds)


def _pressed_scene(cfg: DemoConfig, obj: ObjectSpec, depth: float, seed: int, timestamp: float = 0.0) -> SimulatedScene:
    spec = SceneSpec(
        object=obj,
        press=PressSpec(regime=None, depth=depth),
        membrane=cfg.membrane,
        noise=NoiseSpec(seed=seed),
    )
    return generate_scene(spec, timestamp)


# --- Varied stiffness ---

def run_varied_stiffness(cfg: DemoConfig, out_dir) -> DemoResult:
    demo = cfg.varied_stiffness
    out = Path(out_dir)
    membrane = cfg.membrane.model_copy(update={"tension_map": "two_zone", "stiffness_ratio": demo.stiffness_ratio})
    scene = generate_scene(scene_for_cell(demo.primitive, demo.regime, demo.seed, membrane))

    summary: dict = {"primitive": demo.primitive, "regime": demo.regime, "stiffness_ratio": demo.stiffness_ratio,
                     "press_depth_mm": scene.press_depth * 1000.0}
    outputs: list[Path] = []
    for name in ("fusion", "tactile"):
        patch = run_algorithm(name, scene, _configs(cfg))
        score = score_patch(patch, scene.oracle.cloud, scene.oracle.mask, scene.grid, scene.proximity_position)
        summary[name] = {"rmse_mm": score.rmse_mm, "iou": score.iou, "points": score.points}
        outputs.extend(io.write_patch(out / f"{name}_patch.ply", patch))

    fusion_rmse, tactile_rmse = summary["fusion"]["rmse_mm"], summary["tactile"]["rmse_mm"]
    summary["fusion_not_worse"] = (fusion_rmse is not None and
                                   (tactile_rmse is None or fusion_rmse <= tactile_rmse))
    log.info(f"Varied stiffness: fusion RMSE {fusion_rmse} mm, tactile-only RMSE {tactile_rmse} mm")
    outputs.append(out / "varied_stiffness.json")
    io.write_json(outputs[-1], summary)
    return DemoResult("varied-stiffness", summary, outputs)


# --- Tray angle ---

def _angle_or_none(scene: SimulatedScene, name: str, cfg: DemoConfig) -> tuple[Optional[TrayAngleEstimate], float]:
    patch = run_algorithm(name, scene, _configs(cfg))
    try:
        return pca_angle(patch), patch.timings_ms["wall"]
    except DataError as e:
        log.warning(f"Frame t={scene.timestamp:.3f}s: no {name} angle ({e})")
        return None, patch.timings_ms["wall"]


def run_tray_angle(cfg: DemoConfig, out_dir) -> DemoResult:
    demo = cfg.tray_angle
    out = Path(out_dir)
    period = 1.0 / TRAY_CONTROL_RATE_HZ

    stream: list[TrayAngleEstimate] = []
    sweep = []
    frame_ms = []
    for k, yaw in enumerate(np.linspace(demo.start_deg, demo.stop_deg, demo.steps)):
        scene = _pressed_scene(cfg, ObjectSpec(primitive="tray", yaw_deg=float(yaw)), demo.press_depth,
                               demo.seed + k, timestamp=k * period)
        estimate, runtime_ms = _angle_or_none(scene, "fusion", cfg)
        expected = wrap_half_turn(-float(yaw))
        if estimate is not None:
            stream.append(estimate)
            frame_ms.append(runtime_ms + estimate.elapsed_ms)
        sweep.append({
            "commanded_yaw_deg": float(yaw),
            "expected_angle_deg": expected,
            "fusion_angle_deg": None if estimate is None else estimate.angle_deg,
            "error_deg": None if estimate is None else abs(wrap_half_turn(estimate.angle_deg - expected)),
        })

    static = {"fusion": [], "proximity": []}
    static_yaw = 0.5 * (demo.start_deg + demo.stop_deg)
    for k in range(demo.static_frames):
        scene = _pressed_scene(cfg, ObjectSpec(primitive="tray", yaw_deg=static_yaw), demo.press_depth,
                               demo.seed + 1000 + k, timestamp=k * period)
        for name in static:
            estimate, _ = _angle_or_none(scene, name, cfg)
            if estimate is not None:
                static[name].append(estimate.angle_deg)

    errors = [row["error_deg"] for row in sweep if row["error_deg"] is not None]
    summary = {
        "sweep": sweep,
        "max_error_deg": max(errors) if errors else None,
        "static_std_deg": {name: float(np.std(angles)) if len(angles) > 1 else None for name, angles in static.items()},
        "frame_period_ms": period * 1000.0,
        "median_frame_ms": float(np.median(frame_ms)) if frame_ms else None,
    }
    summary["within_frame_period"] = summary["median_frame_ms"] is not None and summary["median_frame_ms"] <= period * 1000.0
    log.info(f"Tray angle: max error {summary['max_error_deg']} deg over {len(errors)} frames")

    outputs = [out / "tray_angles.jsonl", out / "tray_angle.json"]
    write_angle_stream(outputs[0], stream)
    io.write_json(outputs[1], summary)
    return DemoResult("tray-angle", summary, outputs)


# --- Pose tracking ---

def cup_model_cloud(cup: Optional[Cup] = None, spacing: float = 0.002, wall_height: float = 0.020) -> PointCloud:
    """Surface samples of the cup's lower part in its local frame: rim, handle bottom and the walls above them."""
    cup = cup or Cup()
    length, width, _ = cup.handle_size
    hx = cup.handle_centre

    extent = cup.outer_radius + cup.handle_gap + length
    axis = np.arange(-extent, extent + spacing / 2, spacing)
    gx, gy = np.meshgrid(axis, axis)
    under = cup.underside(gx, gy)
    flat = under <= wall_height
    parts = [np.column_stack((gx[flat], gy[flat], under[flat]))]

    heights = np.arange(spacing, wall_height + spacing / 2, spacing)
    angles = np.arange(0.0, 2 * np.pi, spacing / cup.outer_radius)
    ring_a, ring_z = np.meshgrid(angles, heights)
    parts.append(np.column_stack((cup.outer_radius * np.cos(ring_a).ravel(),
                                  cup.outer_radius * np.sin(ring_a).ravel(), ring_z.ravel())))

    sx, zx = (a.ravel() for a in np.meshgrid(np.arange(-length / 2, length / 2 + spacing / 2, spacing), heights))
    sy, zy = (a.ravel() for a in np.meshgrid(np.arange(-width / 2, width / 2 + spacing / 2, spacing), heights))
    for side in (-1.0, 1.0):
        parts.append(np.column_stack((hx + sx, np.full_like(sx, side * width / 2), zx)))
        parts.append(np.column_stack((np.full_like(sy, hx + side * length / 2), sy, zy)))
    return PointCloud(np.vstack(parts))


def true_pose(scene: SimulatedScene) -> np.ndarray:
    """Object pose (local -> proximity camera frame) used to render the scene."""
    obstacle = scene.obstacle
    position = np.array([obstacle.x, obstacle.y, obstacle.z_bottom]) - np.asarray(scene.proximity_position)
    return make_transform(rotation_about_z(np.degrees(obstacle.yaw)), position)


def run_pose_track(cfg: DemoConfig, out_dir) -> DemoResult:
    demo = cfg.pose_track
    out = Path(out_dir)
    cup = shape_for("cup")
    pivot = np.array([cup.handle_centre, 0.0])

    scenes = []
    yaws = np.linspace(0.0, demo.total_yaw_deg, demo.frames)
    for k, yaw in enumerate(yaws):
        # rotate about the handle: the handle centre stays put
        centre = pivot - rotation_about_z(yaw)[:2, :2] @ pivot
        obj = ObjectSpec(primitive="cup", x=float(centre[0]), y=float(centre[1]), yaw_deg=float(yaw))
        scenes.append(_pressed_scene(cfg, obj, demo.press_depth, demo.seed + k, timestamp=k * demo.frame_period_s))

    patches = [run_algorithm("fusion", scene, _configs(cfg)) for scene in scenes]
    track = icp_track(patches, cup_model_cloud(cup), true_pose(scenes[0]))

    truth = [true_pose(scene) for scene in scenes]
    final_yaw = yaw_degrees(track.transforms[-1])
    final_error = abs((final_yaw - demo.total_yaw_deg + 180.0) % 360.0 - 180.0)
    translation_error_mm = [float(np.linalg.norm(t[:3, 3] - g[:3, 3]) * 1000.0)
                            for t, g in zip(track.transforms, truth)]
    summary = {
        "frames": len(track),
        "commanded_yaw_deg": float(demo.total_yaw_deg),
        "final_yaw_deg": final_yaw,
        "final_yaw_error_deg": final_error,
        "max_translation_error_mm": max(translation_error_mm),
        "unstable_frames": track.unstable_frames,
    }
    log.info(f"Pose track: final yaw {final_yaw:.2f} deg (commanded {demo.total_yaw_deg}), error {final_error:.2f} deg")

    outputs = [out / "pose_track.csv", out / "pose_track.json"]
    track.write_csv(outputs[0])
    io.write_json(outputs[1], summary)
    return DemoResult("pose-track", summary, outputs)


DEMOS: dict[str, Callable[[DemoConfig, Path], DemoResult]] = {
    "varied-stiffness": run_varied_stiffness,
    "tray-angle": run_tray_angle,
    "pose-track": run_pose_track,
}


def demo_for(name: str) -> Callable[[DemoConfig, Path], DemoResult]:
    try:
        return DEMOS[name]
    except KeyError:
        raise ConfigError(f"Unknown demo '{name}'; valid demos: {', '.join(sorted(DEMOS))}") from None


def run_demo(name: str, cfg: DemoConfig, out_dir) -> DemoResult:
    demo = demo_for(name)
    log.info(f"Running demo {name}")
    return demo(cfg, out_dir)
