# contact_fusion/cli.py
"""
contact-fusion command-line tool.

    contact-fusion generate --config scene.toml --out bundles/cube-medium
    contact-fusion estimate bundles/cube-medium --algorithm fusion --out patches/
    contact-fusion eval --config grid.toml --out runs/grid --jobs 8
    contact-fusion demo tray-angle --config demo.toml --out runs/tray
    contact-fusion bench --frames 50

Exit codes: 0 success, 2 configuration, 3 model or range, 4 missing input, 5 I/O.
Log verbosity comes from CONTACT_FUSION_LOG; data goes to files, summaries to stdout.
"""

import argparse
import hashlib
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

from tabulate import tabulate

from contact_fusion.applications.demos import demo_for
from contact_fusion.errors import ContactFusionError, OutputError
from contact_fusion.evaluation.benchmark import benchmark_scene, run_benchmark
from contact_fusion.evaluation.grid import ExperimentGrid, summary_table, write_report
from contact_fusion.evaluation.inputs import AlgorithmConfigs, run_algorithm
from contact_fusion.geometry import io
from contact_fusion.models import (
    ALGORITHMS,
    DemoConfig,
    FusionConfig,
    GridConfig,
    MechanicsModelConfig,
    RunManifest,
    SceneSpec,
    ThresholdConfig,
    load_config,
)
from contact_fusion.settings import settings
from contact_fusion.simulator.bundle import export_bundle, load_bundle
from contact_fusion.simulator.scene import generate_scene

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def setup_logging() -> None:
    logging.basicConfig(
        level=settings.log_level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr,
    )


# --- Argument parsing ---

def seed_list(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed list '{text}'") from None
    if not seeds or any(s < 0 for s in seeds):
        raise argparse.ArgumentTypeError(f"seeds must be non-negative integers, got '{text}'")
    return seeds


def algorithm_name(text: str) -> str:
    if text not in ALGORITHMS:
        raise argparse.ArgumentTypeError(f"unknown algorithm '{text}' (choose from {', '.join(ALGORITHMS)})")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contact-fusion", description="Contact patch estimation toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Simulate one scene and write its bundle.")
    p.add_argument("--config", type=Path, help="Scene TOML (defaults: cube, medium strain).")
    p.add_argument("--out", type=Path, help="Bundle directory.")
    p.add_argument("--seed", type=seed_list, help="Noise seed (first value is used).")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="Run one algorithm on a bundle.")
    p.add_argument("bundle", type=Path)
    p.add_argument("--algorithm", type=algorithm_name, default="fusion")
    p.add_argument("--config", type=Path, help="TOML with [fusion], [thresholds] and [mechanics] tables.")
    p.add_argument("--out", type=Path, help="Directory for the patch PLY and JSON sidecar.")
    p.add_argument("--no-mask", action="store_true", help="Disable the colour mask on the proximity image.")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("eval", help="Run the object x strain-regime evaluation grid.")
    p.add_argument("--config", type=Path, help="Grid TOML.")
    p.add_argument("--out", type=Path, help="Report directory.")
    p.add_argument("--seed", type=seed_list, help="Comma-separated seeds, overriding the config.")
    p.add_argument("--jobs", type=int, help="Worker threads (default: logical cores).")
    p.add_argument("--algorithm", type=algorithm_name, action="append",
                   help="Restrict to an algorithm; may be repeated.")
    p.add_argument("--no-mask", action="store_true")
    p.add_argument("--dump-cells", action="store_true", help="Write each cell's bundle and patches.")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("demo", help="Run a scripted demonstration.")
    p.add_argument("name", help="varied-stiffness, tray-angle or pose-track")
    p.add_argument("--config", type=Path, help="Demo TOML.")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("bench", help="Median per-frame runtimes against the real-time budgets.")
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--config", type=Path, help="Scene TOML for the benchmark frame.")
    p.add_argument("--algorithm", type=algorithm_name, action="append")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bench)
    return parser


# --- Shared plumbing ---

def output_dir(args: argparse.Namespace) -> Path:
    return args.out if args.out is not None else settings.OUTPUT_ROOT / args.command


def ensure_writable(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"Cannot create output directory {path}: {e}") from e
    return path


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(args: argparse.Namespace, out: Path, outputs: Sequence[Path], seeds: Sequence[int],
                   started: float) -> Path:
    """Written last: every file it names exists."""
    hashes = {}
    for path in sorted(set(outputs)):
        hashes[path.relative_to(out).as_posix() if path.is_relative_to(out) else str(path)] = sha256_file(path)
    manifest = RunManifest(
        command=args.command,
        config_paths=[str(args.config)] if getattr(args, "config", None) else [],
        seeds=list(seeds),
        output_dir=str(out),
        tool_version=settings.TOOL_VERSION,
        timings_s={"total": round(time.perf_counter() - started, 3)},
        outputs=hashes,
    )
    path = out / MANIFEST_FILE
    io.write_json(path, manifest.model_dump(mode="json"))
    return path


def algorithm_configs(path: Optional[Path], no_mask: bool) -> AlgorithmConfigs:
    if path is None:
        configs = AlgorithmConfigs()
    else:
        configs = AlgorithmConfigs(
            fusion=load_config(path, FusionConfig, "fusion"),
            thresholds=load_config(path, ThresholdConfig, "thresholds"),
            mechanics=load_config(path, MechanicsModelConfig, "mechanics"),
        )
    if no_mask:
        configs = AlgorithmConfigs(configs.fusion.model_copy(update={"apply_mask": False}),
                                   configs.thresholds, configs.mechanics)
    return configs


# --- Commands ---

def cmd_generate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    spec = load_config(args.config, SceneSpec) if args.config else SceneSpec()
    if args.seed:
        spec = spec.with_seed(args.seed[0])
    out = output_dir(args)
    scene = generate_scene(spec)
    ensure_writable(out.parent)
    export_bundle(scene, out)
    outputs = [p for p in out.iterdir() if p.is_file() and p.name != MANIFEST_FILE]
    write_manifest(args, out, outputs, [spec.noise.seed], started)
    print(f"Wrote bundle {out}: press {scene.press_depth * 1000:.1f} mm, {scene.oracle.node_count} contact nodes")
    return 0


def cmd_estimate(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    configs = algorithm_configs(args.config, args.no_mask)
    bundle = load_bundle(args.bundle)
    patch = run_algorithm(args.algorithm, bundle, configs)
    out = ensure_writable(output_dir(args))
    outputs = list(io.write_patch(out / f"{args.algorithm}_patch.ply", patch))
    write_manifest(args, out, outputs, [bundle.spec.noise.seed], started)

    print(f"{patch.source}: {len(patch)} points")
    print(tabulate(sorted(patch.timings_ms.items()), headers=["stage", "ms"], floatfmt=".2f"))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    grid_cfg = load_config(args.config, GridConfig) if args.config else GridConfig()
    update = {}
    if args.seed:
        update["seeds"] = args.seed
    if args.algorithm:
        update["algorithms"] = args.algorithm
    if args.no_mask:
        update["fusion"] = grid_cfg.fusion.model_copy(update={"apply_mask": False})
    if args.dump_cells:
        update["dump_cells"] = True
    grid_cfg = grid_cfg.model_copy(update=update)

    out = ensure_writable(output_dir(args))
    dump_dir = out / "cells" if grid_cfg.dump_cells else None
    result = ExperimentGrid(grid_cfg).run(jobs=args.jobs, dump_dir=dump_dir)
    outputs = write_report(result, out)
    if dump_dir is not None and dump_dir.exists():
        outputs.extend(p for p in dump_dir.rglob("*") if p.is_file())
    write_manifest(args, out, outputs, grid_cfg.seeds, started)

    print(summary_table(result.report))
    if result.report.failures:
        print(f"{len(result.report.failures)} cell failures; see {out / 'report.json'}")
    return 0


def cmd_demo(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    demo = demo_for(args.name)
    cfg = load_config(args.config, DemoConfig) if args.config else DemoConfig()
    out = ensure_writable(output_dir(args) / args.name if args.out is None else args.out)
    result = demo(cfg, out)
    write_manifest(args, out, result.outputs, [], started)
    print(tabulate([(k, v) for k, v in result.summary.items() if not isinstance(v, (list, dict))],
                   headers=["demo " + result.name, "value"]))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    spec = load_config(args.config, SceneSpec) if args.config else None
    table = run_benchmark(args.frames, args.algorithm or ALGORITHMS, benchmark_scene(spec))
    print(tabulate(table.rows(), headers=table.columns, floatfmt=".2f"))
    if args.out is not None:
        out = ensure_writable(args.out)
        path = out / "budgets.json"
        io.write_json(path, table.to_dicts())
        write_manifest(args, out, [path], [], started)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    func: Callable[[argparse.Namespace], int] = args.func
    try:
        return func(args)
    except ContactFusionError as e:
        log.error(f"{args.command} failed: {e}")
        return e.exit_code
    except OSError as e:
        log.error(f"{args.command} failed writing outputs: {e}")
        return OutputError.exit_code


if __name__ == "__main__":
    sys.exit(main())
