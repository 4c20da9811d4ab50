"""Report emission: delimited series plus rendered figures.

Every run produces CSV series (the canonical, diffable output) and a PNG
rendering of each series for quick inspection. Values are written with six
significant digits; wall-clock timings go to their own file so that the
metrics CSVs are byte-identical across same-seed runs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .parallel import BenchmarkRecord
from .runner import LocalizationReport, MetricsRecord, ScalingReport


def _fmt(value: float) -> str:
    return f"{value:.6g}"


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_metrics_csv(records: Sequence[MetricsRecord], path) -> None:
    _write_csv(path,
               ["iteration", "err_x_m", "err_y_m", "err_z_m", "rot_err_rad", "ess"],
               [(r.iteration, r.err_x, r.err_y, r.err_z, r.rot_err, r.ess)
                for r in records])


def write_timings_csv(records: Sequence[MetricsRecord], path) -> None:
    _write_csv(path, ["iteration", "sensor_ms"],
               [(r.iteration, r.sensor_ms) for r in records])


def write_translation_error_csv(records: Sequence[MetricsRecord], path) -> None:
    _write_csv(path, ["iteration", "err_x_m", "err_y_m", "err_z_m"],
               [(r.iteration, r.err_x, r.err_y, r.err_z) for r in records])


def write_runtime_scaling_csv(records: Sequence[BenchmarkRecord], path) -> None:
    _write_csv(path, ["n", "median_ms"],
               [(r.n_particles, r.median_ms) for r in records])


def write_bench_jsonl(records: Sequence[BenchmarkRecord], path) -> None:
    lines = [json.dumps(r.as_dict()) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def write_localization_report_json(report: LocalizationReport, path) -> None:
    payload = {
        "converged": report.converged,
        "threshold_m": report.threshold_m,
        "window": report.window,
        "final_position_error_m": report.final_position_error_m,
        "iterations": report.iterations,
        "seed": report.seed,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def write_scaling_report_json(report: ScalingReport, path) -> None:
    payload = {
        "r_squared": {str(k): v for k, v in report.r_squared.items()},
        "speedups": {str(k): v for k, v in report.speedups.items()},
        "records": [r.as_dict() for r in report.records],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def plot_translation_error(records: Sequence[MetricsRecord], path) -> None:
    """Per-axis translation error over iterations."""
    fig, ax = plt.subplots(figsize=(7, 4))
    iterations = [r.iteration for r in records]
    for attr, label in (("err_x", "|dx|"), ("err_y", "|dy|"), ("err_z", "|dz|")):
        ax.plot(iterations, [getattr(r, attr) for r in records], label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("translation error [m]")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_runtime_scaling(records: Sequence[BenchmarkRecord], path) -> None:
    """Median sensor-update runtime over particle count, one line per lane count."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for lanes in sorted(set(r.lanes for r in records)):
        group = sorted((r for r in records if r.lanes == lanes),
                       key=lambda r: r.n_particles)
        ax.plot([r.n_particles for r in group], [r.median_ms for r in group],
                marker="o", label=f"{lanes} lane{'s' if lanes != 1 else ''}")
    ax.set_xlabel("particles")
    ax.set_ylabel("median sensor update [ms]")
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
