# contact_fusion/evaluation/grid.py
"""
Object x strain-regime evaluation grid. Every (object, regime, seed) job
simulates one scene and scores every requested algorithm on it; jobs run on a
thread pool and the report is reduced from the sorted per-job scores, so the
result does not depend on completion order.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import polars as pl
from tabulate import tabulate

from contact_fusion.errors import ContactFusionError, ModelError
from contact_fusion.evaluation.inputs import AlgorithmConfigs, run_algorithm
from contact_fusion.evaluation.scoring import score_patch
from contact_fusion.fusion.pipeline import proximity_mask
from contact_fusion.geometry import io
from contact_fusion.models import CellFailure, EvaluationReport, GridConfig, ReportRow, SceneSpec
from contact_fusion.settings import settings as default_settings
from contact_fusion.simulator.bundle import export_bundle
from contact_fusion.simulator.scene import REGIME_TARGETS, SimulatedScene, generate_scene, scene_for_cell
from contact_fusion.simulator.strain import build_dot_grid, measure_strain

log = logging.getLogger(__name__)

METRIC_DECIMALS = 6


def failure_message(e: Exception) -> str:
    return str(e) if isinstance(e, ContactFusionError) else f"{type(e).__name__}: {e}"


@dataclass(frozen=True)
class GridResult:
    report: EvaluationReport
    scores: pl.DataFrame  # one row per (object, regime, seed, algorithm)
    table: pl.DataFrame   # aggregated rows with mean runtime


class ExperimentGrid:
    """Runs the configured grid; `jobs` defaults to the CONTACT_FUSION_JOBS setting."""

    def __init__(self, config: GridConfig, settings=None):
        self.config = config
        self.settings = settings or default_settings
        self.configs = AlgorithmConfigs(config.fusion, config.thresholds, config.mechanics)

    def cells(self) -> list[tuple[str, str]]:
        return [(obj, regime) for obj in self.config.objects for regime in self.config.regimes]

    def jobs(self) -> list[tuple[str, str, int]]:
        return [(obj, regime, seed) for obj, regime in self.cells() for seed in self.config.seeds]

    def scene_spec(self, obj: str, regime: str, seed: int) -> SceneSpec:
        return scene_for_cell(obj, regime, seed, self.config.membrane, self.config.noise)

    def _validate_strain(self, scene: SimulatedScene, regime: str) -> None:
        target = REGIME_TARGETS[regime].strain
        strain = measure_strain(build_dot_grid(scene.free, scene.pressed))
        if abs(strain - target) > self.config.strain_tolerance:
            raise ModelError(f"Scene strain {strain:.3f} is outside {target:.2f} +/- {self.config.strain_tolerance}")

    def run_job(self, obj: str, regime: str, seed: int, algorithms: Sequence[str],
                dump_dir: Optional[Path] = None) -> tuple[list[dict], list[CellFailure]]:
        scores: list[dict] = []
        failures: list[CellFailure] = []
        try:
            scene = generate_scene(self.scene_spec(obj, regime, seed))
            self._validate_strain(scene, regime)
        except Exception as e:
            log.exception(f"Cell {obj}/{regime} seed {seed} failed during simulation: {e}")
            return scores, [CellFailure(object=obj, regime=regime, seed=seed, algorithm=None, error=failure_message(e))]

        cell_dir = dump_dir / f"{obj}-{regime}-s{seed}" if dump_dir is not None else None
        if cell_dir is not None:
            export_bundle(scene, cell_dir / "bundle")

        fusion_cfg = self.configs.fusion
        mask = proximity_mask(scene.proximity_rgb, fusion_cfg) if fusion_cfg.apply_mask else None
        for name in algorithms:
            try:
                patch = run_algorithm(name, scene, self.configs, mask)
                score = score_patch(patch, scene.oracle.cloud, scene.oracle.mask, scene.grid,
                                    scene.proximity_position, self.config.alignment_residual_mm)
            except Exception as e:
                log.exception(f"Cell {obj}/{regime} seed {seed} algorithm {name} failed: {e}")
                failures.append(CellFailure(object=obj, regime=regime, seed=seed, algorithm=name,
                                            error=failure_message(e)))
                continue
            if cell_dir is not None:
                io.write_patch(cell_dir / f"{name}.ply", patch)
            scores.append({
                "object": obj, "regime": regime, "algorithm": name, "seed": seed,
                "rmse_mm": score.rmse_mm, "iou": score.iou, "precision": score.precision, "recall": score.recall,
                "no_contact": score.no_contact, "alignment_flagged": score.alignment_flagged,
                "alignment_residual_mm": score.alignment_residual_mm, "points": score.points,
                "runtime_ms": patch.timings_ms.get("wall", patch.timings_ms.get("total", 0.0)),
            })
        return scores, failures

    def run(self, algorithms: Optional[Sequence[str]] = None, jobs: Optional[int] = None,
            dump_dir: Optional[Path] = None) -> GridResult:
        algorithms = list(algorithms or self.config.algorithms)
        work = self.jobs()
        workers = max(1, min(jobs or self.settings.default_jobs, len(work) or 1))
        log.info(f"Running {len(work)} grid jobs x {len(algorithms)} algorithms on {workers} workers")
        start = time.perf_counter()

        scores: list[dict] = []
        failures: list[CellFailure] = []
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(self.run_job, obj, regime, seed, algorithms, dump_dir): (obj, regime, seed)
                       for obj, regime, seed in work}
            for future in as_completed(futures):
                job_scores, job_failures = future.result()
                scores.extend(job_scores)
                failures.extend(job_failures)

        log.info(f"Grid finished in {time.perf_counter() - start:.1f} s: {len(scores)} scores, {len(failures)} failures")
        return assemble_report(scores, failures, self.config.seeds)


def _scores_frame(scores: list[dict]) -> pl.DataFrame:
    schema = {
        "object": pl.Utf8, "regime": pl.Utf8, "algorithm": pl.Utf8, "seed": pl.Int64,
        "rmse_mm": pl.Float64, "iou": pl.Float64, "precision": pl.Float64, "recall": pl.Float64,
        "no_contact": pl.Boolean, "alignment_flagged": pl.Boolean, "alignment_residual_mm": pl.Float64,
        "points": pl.Int64, "runtime_ms": pl.Float64,
    }
    if not scores:
        return pl.DataFrame(schema=schema)
    return pl.from_dicts(scores, schema=schema).sort(["object", "regime", "algorithm", "seed"])


def _rounded(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(float(value), METRIC_DECIMALS)


def assemble_report(scores: list[dict], failures: list[CellFailure], seeds: Sequence[int]) -> GridResult:
    frame = _scores_frame(scores)
    table = (
        frame.group_by(["object", "regime", "algorithm"], maintain_order=True)
        .agg([
            pl.len().alias("seeds"),
            pl.col("rmse_mm").count().alias("scored"),
            pl.col("rmse_mm").mean().alias("rmse_mean_mm"),
            pl.col("rmse_mm").std(ddof=0).alias("rmse_std_mm"),
            pl.col("iou").mean(),
            pl.col("precision").mean(),
            pl.col("recall").mean(),
            pl.col("no_contact").sum(),
            pl.col("alignment_flagged").sum(),
            pl.col("runtime_ms").mean().alias("runtime_mean_ms"),
        ])
    )
    rows = [
        ReportRow(
            object=r["object"], regime=r["regime"], algorithm=r["algorithm"],
            seeds=int(r["seeds"]), scored=int(r["scored"]),
            rmse_mean_mm=_rounded(r["rmse_mean_mm"]), rmse_std_mm=_rounded(r["rmse_std_mm"]),
            iou=_rounded(r["iou"]), precision=_rounded(r["precision"]), recall=_rounded(r["recall"]),
            no_contact=int(r["no_contact"]), alignment_flagged=int(r["alignment_flagged"]),
        )
        for r in table.iter_rows(named=True)
    ]
    runtime = (
        frame.group_by("algorithm").agg(pl.col("runtime_ms").mean()).sort("algorithm")
        if frame.height else frame.select(["algorithm", "runtime_ms"])
    )
    report = EvaluationReport(
        rows=rows,
        failures=sorted(failures, key=lambda f: (f.object, f.regime, f.seed, f.algorithm or "")),
        seeds=list(seeds),
        runtime_ms={r["algorithm"]: round(r["runtime_ms"], 3) for r in runtime.iter_rows(named=True)},
    )
    return GridResult(report, frame, table)


def run_grid(g: GridConfig, algorithms: Optional[Sequence[str]] = None, jobs: Optional[int] = None,
             dump_dir: Optional[Path] = None) -> GridResult:
    return ExperimentGrid(g).run(algorithms, jobs, dump_dir)


def write_report(result: GridResult, out_dir) -> list[Path]:
    """report.json (canonical, no runtimes), report.csv, cells.csv and timings.json."""
    out = Path(out_dir)
    paths = [out / "report.json", out / "report.csv", out / "cells.csv", out / "timings.json"]
    io.write_json(paths[0], result.report.canonical_dict())
    io.write_text(paths[1], result.table.write_csv())
    io.write_text(paths[2], result.scores.write_csv())
    io.write_json(paths[3], {"runtime_ms": result.report.runtime_ms})
    return paths


def summary_table(report: EvaluationReport) -> str:
    def fmt(value: Optional[float], spec: str = ".2f") -> str:
        return "-" if value is None else format(value, spec)

    rows = [
        [r.object, r.regime, r.algorithm, f"{r.scored}/{r.seeds}",
         f"{fmt(r.rmse_mean_mm)} ± {fmt(r.rmse_std_mm)}", fmt(r.iou, ".3f"),
         fmt(r.precision, ".3f"), fmt(r.recall, ".3f"), r.no_contact, r.alignment_flagged]
        for r in report.rows
    ]
    headers = ["object", "regime", "algorithm", "scored", "RMSE mm", "IoU", "precision", "recall",
               "no contact", "flagged"]
    return tabulate(rows, headers=headers, tablefmt="github")
