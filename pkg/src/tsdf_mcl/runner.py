"""Experiment execution: localization runs and runtime-scaling sweeps.

A localization run walks a time-stamped trajectory. At each stamp it
simulates a scan at the ground-truth pose, synthesizes the odometry delta
from consecutive ground-truth poses (plus configurable noise), performs one
filter iteration (motion, sensor, normalize, estimate, resample), and emits
one metrics record against ground truth.

Convergence rule: the position error stays below 2x the fine map resolution
for the final CONVERGENCE_WINDOW consecutive iterations. The verdict is a
pure function of the metrics stream and can be re-derived from the CSV.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigError, DegenerateFilterError
from .geometry import (Pose6D, compose, inverse, read_trajectory,
                       rotation_angle_between)
from .mcl import (MotionNoiseParams, ParticleSet, effective_sample_size,
                  estimate_pose, initialize_global, initialize_local,
                  motion_update, normalize, resample, sensor_update)
from .parallel import BenchmarkRecord, benchmark_sensor_update, default_lanes
from .scene import build_tsdf, read_scene

CONVERGENCE_WINDOW = 5
CONVERGENCE_THRESHOLD_CELLS = 2.0

# Sub-stream tags for per-iteration seed derivation.
_INIT, _SCAN, _MOTION, _ODOM, _RESAMPLE = range(5)


def _stream_seed(seed: int, stream: int, iteration: int) -> np.random.SeedSequence:
    return np.random.SeedSequence((seed, stream, iteration))


@dataclass(frozen=True)
class MetricsRecord:
    """Per-iteration localization quality against ground truth."""

    iteration: int
    err_x: float
    err_y: float
    err_z: float
    rot_err: float
    sensor_ms: float
    ess: float

    def __post_init__(self):
        deterministic = (self.err_x, self.err_y, self.err_z, self.rot_err, self.ess)
        if any(not math.isfinite(v) or v < 0.0 for v in deterministic):
            raise ValueError("metrics must be finite and >= 0")

    @property
    def position_error(self) -> float:
        return math.sqrt(self.err_x**2 + self.err_y**2 + self.err_z**2)


@dataclass(frozen=True)
class LocalizationReport:
    records: tuple[MetricsRecord, ...]
    converged: bool
    threshold_m: float
    window: int
    final_position_error_m: float
    iterations: int
    seed: int


@dataclass(frozen=True)
class ScalingReport:
    records: tuple[BenchmarkRecord, ...]
    r_squared: dict[int, float]  # lanes -> R^2 of median_ms vs n
    speedups: dict[int, float]   # n -> median_ms at min lanes / at max lanes


def convergence_verdict(records, threshold_m: float,
                        window: int = CONVERGENCE_WINDOW) -> bool:
    if len(records) < window:
        return False
    return all(r.position_error < threshold_m for r in records[-window:])


def _load_inputs(cfg: ExperimentConfig):
    try:
        scene = read_scene(cfg.scene_file)
    except ValueError as exc:
        raise ConfigError("scene", str(exc)) from exc
    try:
        trajectory = read_trajectory(cfg.trajectory_file)
    except ValueError as exc:
        raise ConfigError("trajectory", str(exc)) from exc
    if not trajectory:
        raise ConfigError("trajectory", "trajectory file holds no poses")
    return scene, trajectory


def _noisy_delta(delta: Pose6D, cfg: ExperimentConfig, iteration: int) -> Pose6D:
    if cfg.odometry_noise_linear_m == 0.0 and cfg.odometry_noise_angular_rad == 0.0:
        return delta
    rng = np.random.default_rng(_stream_seed(cfg.seed, _ODOM, iteration))
    lin = cfg.odometry_noise_linear_m * rng.standard_normal(3)
    ang = cfg.odometry_noise_angular_rad * rng.standard_normal(3)
    return Pose6D(delta.x + lin[0], delta.y + lin[1], delta.z + lin[2],
                  delta.roll + ang[0], delta.pitch + ang[1], delta.yaw + ang[2])


def run_localization(cfg: ExperimentConfig) -> LocalizationReport:
    """Execute one localization experiment; returns the metrics stream and
    the convergence verdict. DegenerateFilterError carries the iteration."""
    scene, trajectory = _load_inputs(cfg)
    tsdf_map = build_tsdf(scene, cfg.map_fine_resolution_m, cfg.map_truncation_m,
                          cfg.map_block_size)
    tsdf_map.build_index()
    pattern = cfg.scan_pattern()
    params = cfg.sensor_params(tsdf_map.truncation)
    lanes = cfg.lanes if cfg.lanes > 0 else default_lanes()
    noise = MotionNoiseParams(cfg.motion_sigma_linear_m, cfg.motion_sigma_angular_rad)
    iterations = cfg.iterations if cfg.iterations > 0 else len(trajectory)

    truth0 = trajectory[0][1]
    if cfg.init_mode == "local":
        pset = initialize_local(truth0, cfg.init_sigmas(), cfg.particle_count,
                                seed=_stream_seed(cfg.seed, _INIT, 0))
    else:
        pset = initialize_global(scene, cfg.particle_count,
                                 orientation_mode=cfg.global_orientation_mode,
                                 seed=_stream_seed(cfg.seed, _INIT, 0),
                                 roll_pitch_bound=math.radians(cfg.global_roll_pitch_bound_deg))

    records: list[MetricsRecord] = []
    previous_truth = truth0
    for i in range(iterations):
        truth = trajectory[min(i, len(trajectory) - 1)][1]
        try:
            if i > 0:
                delta = compose(inverse(previous_truth), truth)
                delta = _noisy_delta(delta, cfg, i)
                pset = motion_update(pset, delta, noise,
                                     seed=_stream_seed(cfg.seed, _MOTION, i))
            scan = scene.simulate_scan(truth, pattern, cfg.scan_noise_sigma_m,
                                       seed=_stream_seed(cfg.seed, _SCAN, i))
            t0 = time.perf_counter()
            pset = sensor_update(pset, scan, tsdf_map, params, lanes)
            sensor_ms = (time.perf_counter() - t0) * 1e3
            pset = normalize(pset)
            estimate = estimate_pose(pset, "mean")
            records.append(MetricsRecord(
                iteration=i,
                err_x=abs(estimate.x - truth.x),
                err_y=abs(estimate.y - truth.y),
                err_z=abs(estimate.z - truth.z),
                rot_err=rotation_angle_between(estimate, truth),
                sensor_ms=sensor_ms,
                ess=effective_sample_size(pset),
            ))
            pset = resample(pset, seed=_stream_seed(cfg.seed, _RESAMPLE, i))
        except DegenerateFilterError as exc:
            raise DegenerateFilterError(f"iteration {i}: {exc}") from exc
        previous_truth = truth

    threshold = CONVERGENCE_THRESHOLD_CELLS * tsdf_map.fine_resolution
    return LocalizationReport(
        records=tuple(records),
        converged=convergence_verdict(records, threshold),
        threshold_m=threshold,
        window=CONVERGENCE_WINDOW,
        final_position_error_m=records[-1].position_error if records else math.inf,
        iterations=iterations,
        seed=cfg.seed,
    )


def linear_fit_r_squared(x, y) -> float:
    """R^2 of the least-squares line through (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    residuals = y - (slope * x + intercept)
    ss_res = float(np.sum(residuals**2))
    ss_tot = float(np.sum((y - y.mean())**2))
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - ss_res / ss_tot


def run_scaling_benchmark(cfg: ExperimentConfig) -> ScalingReport:
    """Sweep the sensor-update benchmark over the configured particle-count
    and lane grids; fit runtime vs particle count per lane setting."""
    scene, trajectory = _load_inputs(cfg)
    if not cfg.bench_particle_counts:
        raise ConfigError("bench_particle_counts", "grid must be non-empty")
    tsdf_map = build_tsdf(scene, cfg.map_fine_resolution_m, cfg.map_truncation_m,
                          cfg.map_block_size)
    tsdf_map.build_index()
    params = cfg.sensor_params(tsdf_map.truncation)
    center = trajectory[0][1]
    scan = scene.simulate_scan(center, cfg.scan_pattern(), cfg.scan_noise_sigma_m,
                               seed=_stream_seed(cfg.seed, _SCAN, 0))

    records: list[BenchmarkRecord] = []
    for lanes in cfg.bench_lanes:
        for n in cfg.bench_particle_counts:
            records.append(benchmark_sensor_update(
                n, scan, tsdf_map, params, lanes=lanes, trials=cfg.bench_trials,
                seed=_stream_seed(cfg.seed, _INIT, n), center=center,
                sigma_pos=cfg.bench_cloud_sigma_pos_m,
                sigma_ang=cfg.bench_cloud_sigma_ang_rad,
            ))

    r_squared: dict[int, float] = {}
    for lanes in sorted(set(r.lanes for r in records)):
        group = [r for r in records if r.lanes == lanes]
        if len(group) >= 2:
            r_squared[lanes] = linear_fit_r_squared(
                [r.n_particles for r in group], [r.median_ms for r in group])

    speedups: dict[int, float] = {}
    lane_values = sorted(set(r.lanes for r in records))
    if len(lane_values) >= 2:
        lo, hi = lane_values[0], lane_values[-1]
        by_key = {(r.lanes, r.n_particles): r.median_ms for r in records}
        for n in sorted(set(r.n_particles for r in records)):
            if (lo, n) in by_key and (hi, n) in by_key and by_key[(hi, n)] > 0.0:
                speedups[n] = by_key[(lo, n)] / by_key[(hi, n)]

    return ScalingReport(records=tuple(records), r_squared=r_squared, speedups=speedups)
