"""Command-line experiment runner.

Subcommands:
  localize  --config <path>   run one localization experiment
  bench     --config <path>   run the runtime-scaling sweep
  build-map --scene <path> --out <path> --res <m> --trunc <m>

Exit codes: 0 success, 1 configuration error, 2 degenerate filter.
The MCL_LANES environment variable overrides the lane count whenever the
config leaves `lanes = 0`.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, DegenerateFilterError
from .runner import run_localization, run_scaling_benchmark
from .scene import build_tsdf, read_scene
from . import report as report_mod

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DEGENERATE = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsdf-mcl",
        description="Monte Carlo localization experiments in TSDF maps")
    sub = parser.add_subparsers(dest="command", required=True)

    p_loc = sub.add_parser("localize", help="run a localization experiment")
    p_loc.add_argument("--config", required=True, type=Path)

    p_bench = sub.add_parser("bench", help="run the runtime-scaling sweep")
    p_bench.add_argument("--config", required=True, type=Path)

    p_map = sub.add_parser("build-map", help="discretize a scene into a map file")
    p_map.add_argument("--scene", required=True, type=Path)
    p_map.add_argument("--out", required=True, type=Path)
    p_map.add_argument("--res", required=True, type=float, help="fine resolution [m]")
    p_map.add_argument("--trunc", required=True, type=float, help="truncation [m]")
    p_map.add_argument("--block-size", type=int, default=16)
    return parser


def _cmd_localize(config_path: Path) -> int:
    cfg = load_config(config_path)
    result = run_localization(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_mod.write_metrics_csv(result.records, out / "metrics.csv")
    report_mod.write_timings_csv(result.records, out / "timings.csv")
    report_mod.write_translation_error_csv(result.records, out / "translation_error.csv")
    report_mod.plot_translation_error(result.records, out / "translation_error.png")
    report_mod.write_localization_report_json(result, out / "report.json")
    print(f"localize: {result.iterations} iterations, "
          f"final position error {result.final_position_error_m:.4f} m, "
          f"converged={result.converged} "
          f"(threshold {result.threshold_m:.4f} m over last {result.window})")
    print(f"localize: reports written to {out}")
    return EXIT_OK


def _cmd_bench(config_path: Path) -> int:
    cfg = load_config(config_path)
    result = run_scaling_benchmark(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    primary = min(r.lanes for r in result.records)
    report_mod.write_runtime_scaling_csv(
        sorted((r for r in result.records if r.lanes == primary),
               key=lambda r: r.n_particles),
        out / "runtime_scaling.csv")
    report_mod.write_bench_jsonl(result.records, out / "bench_records.jsonl")
    report_mod.plot_runtime_scaling(result.records, out / "runtime_scaling.png")
    report_mod.write_scaling_report_json(result, out / "scaling_report.json")
    for lanes, r2 in sorted(result.r_squared.items()):
        print(f"bench: lanes={lanes} linear-fit R^2={r2:.4f}")
    for n, s in sorted(result.speedups.items()):
        print(f"bench: n={n} speedup={s:.2f}x")
    print(f"bench: reports written to {out}")
    return EXIT_OK


def _cmd_build_map(scene_path: Path, out_path: Path, res: float, trunc: float,
                   block_size: int) -> int:
    try:
        scene = read_scene(scene_path)
    except FileNotFoundError as exc:
        raise ConfigError("scene", str(exc)) from exc
    except ValueError as exc:
        raise ConfigError("scene", str(exc)) from exc
    try:
        tsdf_map = build_tsdf(scene, res, trunc, block_size)
    except ValueError as exc:
        raise ConfigError("build-map", str(exc)) from exc
    out_path.parent.mkdir(parents=True, exist_ok=True)
    tsdf_map.save(out_path)
    print(f"build-map: {tsdf_map.block_count} blocks "
          f"({tsdf_map.fine_resolution:.4g} m cells, "
          f"truncation {tsdf_map.truncation:.4g} m) -> {out_path}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "localize":
            return _cmd_localize(args.config)
        if args.command == "bench":
            return _cmd_bench(args.config)
        return _cmd_build_map(args.scene, args.out, args.res, args.trunc,
                              args.block_size)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateFilterError as exc:
        print(f"degenerate filter: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
