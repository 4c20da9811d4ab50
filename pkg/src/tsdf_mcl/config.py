"""Declarative experiment configuration.

Config files are flat `key = value` text with `#` comments. Keys carry
their unit as a suffix (`sensor_sigma_m`, `motion_sigma_angular_rad`) so the
file needs no schema to be unambiguous. Input paths are resolved relative
to the config file's directory; the output directory is resolved relative
to the working directory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .scene import ScanPattern
from .sensor import SensorModelParams, build_likelihood_lut


@dataclass
class ExperimentConfig:
    scene_file: Path
    trajectory_file: Path
    output_dir: Path
    map_fine_resolution_m: float
    map_truncation_m: float
    map_block_size: int = 16
    scan_ring_count: int = 8
    scan_elevation_min_deg: float = -15.0
    scan_elevation_max_deg: float = 15.0
    scan_azimuth_count: int = 180
    scan_max_range_m: float = 30.0
    scan_noise_sigma_m: float = 0.0
    particle_count: int = 2000
    iterations: int = 0  # 0 means: one iteration per trajectory stamp
    init_mode: str = "local"
    init_sigma_x_m: float = 0.3
    init_sigma_y_m: float = 0.3
    init_sigma_z_m: float = 0.3
    init_sigma_roll_rad: float = 0.05
    init_sigma_pitch_rad: float = 0.05
    init_sigma_yaw_rad: float = 0.05
    global_orientation_mode: str = "bounded"
    global_roll_pitch_bound_deg: float = 15.0
    odometry_noise_linear_m: float = 0.0
    odometry_noise_angular_rad: float = 0.0
    motion_sigma_linear_m: float = 0.05
    motion_sigma_angular_rad: float = 0.02
    sensor_sigma_m: float = 0.2
    sensor_stride: int = 4
    sensor_lut_resolution_m: float = 0.006  # 0 disables the table (exact exponentials)
    sensor_interpolate: bool = False
    lanes: int = 0  # 0 means: MCL_LANES env var, else CPU count
    seed: int = 1
    bench_particle_counts: tuple[int, ...] = (10000, 20000, 40000, 80000)
    bench_lanes: tuple[int, ...] = (1,)
    bench_trials: int = 5
    bench_cloud_sigma_pos_m: float = 0.5
    bench_cloud_sigma_ang_rad: float = 0.1

    def scan_pattern(self) -> ScanPattern:
        return ScanPattern.grid(
            rings=self.scan_ring_count,
            azimuths=self.scan_azimuth_count,
            elevation_min=math.radians(self.scan_elevation_min_deg),
            elevation_max=math.radians(self.scan_elevation_max_deg),
            max_range=self.scan_max_range_m,
        )

    def sensor_params(self, truncation: float) -> SensorModelParams:
        lut = None
        if self.sensor_lut_resolution_m > 0.0:
            lut = build_likelihood_lut(self.sensor_sigma_m, truncation,
                                       self.sensor_lut_resolution_m)
        return SensorModelParams(sigma=self.sensor_sigma_m,
                                 subsample_stride=self.sensor_stride,
                                 lut=lut, interpolate=self.sensor_interpolate)

    def init_sigmas(self) -> tuple[float, ...]:
        return (self.init_sigma_x_m, self.init_sigma_y_m, self.init_sigma_z_m,
                self.init_sigma_roll_rad, self.init_sigma_pitch_rad,
                self.init_sigma_yaw_rad)


_PATH_KEYS = {"scene": "scene_file", "trajectory": "trajectory_file",
              "output_dir": "output_dir"}


def _parse_bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_int_list(raw: str) -> tuple[int, ...]:
    values = tuple(int(v.strip()) for v in raw.split(",") if v.strip())
    if not values:
        raise ValueError("expected a comma-separated integer list")
    return values


def _convert(field_type, raw: str):
    if field_type is bool:
        return _parse_bool(raw)
    if field_type is int:
        return int(raw)
    if field_type is float:
        return float(raw)
    if field_type is str:
        return raw
    return _parse_int_list(raw)  # tuple[int, ...]


def load_config(path) -> ExperimentConfig:
    """Parse and validate a config file; raises ConfigError naming the field."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"no such file: {path}")
    base = path.parent
    typed = {f.name: f.type for f in fields(ExperimentConfig)}
    values: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("config", f"{path}:{lineno}: expected `key = value`")
        key, _, value = (part.strip() for part in line.partition("="))
        if key in _PATH_KEYS:
            attr = _PATH_KEYS[key]
            p = Path(value)
            values[attr] = p if p.is_absolute() else base / p
            continue
        if key in ("scene_file", "trajectory_file"):
            raise ConfigError(key, f"{path}:{lineno}: use the `scene` / `trajectory` keys")
        if key not in typed:
            raise ConfigError(key, f"{path}:{lineno}: unknown key")
        type_name = typed[key] if isinstance(typed[key], str) else typed[key].__name__
        kind = {"bool": bool, "int": int, "float": float, "str": str}.get(
            type_name.split("[")[0].strip(), tuple)
        try:
            values[key] = _convert(kind, value)
        except ValueError as exc:
            raise ConfigError(key, f"{path}:{lineno}: {exc}") from exc

    for required in ("scene_file", "trajectory_file", "output_dir",
                     "map_fine_resolution_m", "map_truncation_m"):
        if required not in values:
            key = {v: k for k, v in _PATH_KEYS.items()}.get(required, required)
            raise ConfigError(key, "required key missing")
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    def require(ok: bool, field: str, message: str) -> None:
        if not ok:
            raise ConfigError(field, message)

    require(cfg.scene_file.is_file(), "scene", f"no such file: {cfg.scene_file}")
    require(cfg.trajectory_file.is_file(), "trajectory",
            f"no such file: {cfg.trajectory_file}")
    require(cfg.map_fine_resolution_m > 0.0, "map_fine_resolution_m", "must be > 0")
    require(cfg.map_truncation_m >= cfg.map_fine_resolution_m,
            "map_truncation_m", "must be >= map_fine_resolution_m")
    require(cfg.map_block_size >= 1 and (cfg.map_block_size & (cfg.map_block_size - 1)) == 0,
            "map_block_size", "must be a power of two")
    require(cfg.scan_ring_count >= 1, "scan_ring_count", "must be >= 1")
    require(cfg.scan_azimuth_count >= 1, "scan_azimuth_count", "must be >= 1")
    require(cfg.scan_elevation_max_deg >= cfg.scan_elevation_min_deg,
            "scan_elevation_max_deg", "must be >= scan_elevation_min_deg")
    require(cfg.scan_max_range_m > 0.0, "scan_max_range_m", "must be > 0")
    require(cfg.scan_noise_sigma_m >= 0.0, "scan_noise_sigma_m", "must be >= 0")
    require(cfg.particle_count >= 1, "particle_count", "must be >= 1")
    require(cfg.iterations >= 0, "iterations", "must be >= 0")
    require(cfg.init_mode in ("local", "global"), "init_mode",
            "must be `local` or `global`")
    for name in ("init_sigma_x_m", "init_sigma_y_m", "init_sigma_z_m",
                 "init_sigma_roll_rad", "init_sigma_pitch_rad", "init_sigma_yaw_rad",
                 "odometry_noise_linear_m", "odometry_noise_angular_rad",
                 "motion_sigma_linear_m", "motion_sigma_angular_rad"):
        require(getattr(cfg, name) >= 0.0, name, "must be >= 0")
    require(cfg.global_orientation_mode in ("bounded", "full"),
            "global_orientation_mode", "must be `bounded` or `full`")
    require(cfg.global_roll_pitch_bound_deg >= 0.0,
            "global_roll_pitch_bound_deg", "must be >= 0")
    require(cfg.sensor_sigma_m > 0.0, "sensor_sigma_m", "must be > 0")
    require(cfg.sensor_stride >= 1, "sensor_stride", "must be >= 1")
    require(cfg.sensor_lut_resolution_m >= 0.0, "sensor_lut_resolution_m",
            "must be >= 0 (0 disables the table)")
    require(cfg.lanes >= 0, "lanes", "must be >= 0 (0 means auto)")
    require(cfg.bench_trials >= 1, "bench_trials", "must be >= 1")
    require(all(n >= 1 for n in cfg.bench_particle_counts),
            "bench_particle_counts", "entries must be >= 1")
    require(all(l >= 1 for l in cfg.bench_lanes), "bench_lanes", "entries must be >= 1")
    require(cfg.bench_cloud_sigma_pos_m >= 0.0, "bench_cloud_sigma_pos_m", "must be >= 0")
    require(cfg.bench_cloud_sigma_ang_rad >= 0.0, "bench_cloud_sigma_ang_rad", "must be >= 0")
