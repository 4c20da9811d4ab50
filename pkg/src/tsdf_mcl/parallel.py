"""Data-parallel particle evaluation: SoA storage, worker lanes, tree reduction.

Particles are stored component-major (one array per coordinate) so lanes
stream through contiguous memory. A sensor-update evaluation splits the
particle index range into contiguous groups, one per lane; every per-point
operation is element-wise and every per-particle point sum runs in a fixed
scan order, so the resulting weights are bit-identical for any lane count.

Weight totals and weighted pose sums use a pairwise tree reduction: each
step adds the upper half of the buffer onto the lower half, halving the
active length until one value remains.
"""

from __future__ import annotations

import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import ConfigError, DegenerateFilterError
from .geometry import Pose6D, euler_to_matrix, euler_to_quaternion_components
from .scene import PointCloud
from .sensor import SensorModelParams
from .tsdf import TsdfMap

if TYPE_CHECKING:  # pragma: no cover
    from .mcl import Particle

# Per-chunk element budget for the evaluation kernel; keeps temporaries
# cache-resident. Chunk geometry never affects results.
_CHUNK_ELEMENTS = 131072
# Below this particle count, thread dispatch costs more than it saves.
_MIN_PARALLEL_N = 4096


def default_lanes() -> int:
    """Lane count from the MCL_LANES environment variable, else the CPU count."""
    env = os.environ.get("MCL_LANES")
    if env is not None:
        try:
            lanes = int(env)
        except ValueError:
            lanes = 0
        if lanes < 1:
            raise ConfigError("MCL_LANES", f"must be a positive integer, got {env!r}")
        return lanes
    return os.cpu_count() or 1


@dataclass
class ParticleSoA:
    """Component-major particle storage: seven parallel arrays of length n."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    roll: np.ndarray
    pitch: np.ndarray
    yaw: np.ndarray
    weight: np.ndarray

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=float) for a in
                  (self.x, self.y, self.z, self.roll, self.pitch, self.yaw, self.weight)]
        n = arrays[0].size
        if any(a.ndim != 1 or a.size != n for a in arrays):
            raise ValueError("all seven component arrays must share one length")
        self.x, self.y, self.z, self.roll, self.pitch, self.yaw, self.weight = arrays

    @property
    def n(self) -> int:
        return self.x.size

    @classmethod
    def from_state_matrix(cls, states: np.ndarray, weights: np.ndarray) -> "ParticleSoA":
        s = np.asarray(states, dtype=float)
        return cls(s[:, 0].copy(), s[:, 1].copy(), s[:, 2].copy(),
                   s[:, 3].copy(), s[:, 4].copy(), s[:, 5].copy(),
                   np.asarray(weights, dtype=float).copy())


def pack(particles: Sequence["Particle"]) -> ParticleSoA:
    """Reorder particle records into component-major arrays (index-preserving)."""
    n = len(particles)
    arrays = [np.empty(n) for _ in range(7)]
    for i, p in enumerate(particles):
        s = p.state
        arrays[0][i] = s.x
        arrays[1][i] = s.y
        arrays[2][i] = s.z
        arrays[3][i] = s.roll
        arrays[4][i] = s.pitch
        arrays[5][i] = s.yaw
        arrays[6][i] = p.weight
    return ParticleSoA(*arrays)


def unpack(soa: ParticleSoA) -> list["Particle"]:
    """Inverse of pack; lossless for states whose angles are already wrapped."""
    from .mcl import Particle

    return [
        Particle(Pose6D(soa.x[i], soa.y[i], soa.z[i], soa.roll[i], soa.pitch[i], soa.yaw[i]),
                 float(soa.weight[i]))
        for i in range(soa.n)
    ]


def evaluate_particles_parallel(soa: ParticleSoA, scan: PointCloud, tsdf_map: TsdfMap,
                                params: SensorModelParams, lanes: int = 1) -> np.ndarray:
    """New (unnormalized) particle weights from the endpoint sensor model.

    For each particle the log-likelihoods of every subsampled scan point are
    summed in scan order; the weight update is
    ``old_weight * exp(log_sum - max(log_sum))``, max-shifted to avoid
    underflow. Lanes partition the particle range contiguously; results are
    bit-identical for every lane count because rotation terms are
    precomputed in a single full-array pass and all lane-side arithmetic is
    element-wise.
    """
    if lanes < 1:
        raise ValueError("lanes must be >= 1")
    pts = scan.points[::params.subsample_stride]
    if pts.shape[0] == 0:
        return soa.weight.copy()
    if params.lut is not None and params.lut.d_max < tsdf_map.truncation - 1e-9:
        raise ValueError("likelihood table does not cover the map truncation band")
    tsdf_map.build_index()

    zx = np.ascontiguousarray(pts[:, 0])
    zy = np.ascontiguousarray(pts[:, 1])
    zz = np.ascontiguousarray(pts[:, 2])
    rot = euler_to_matrix(soa.roll, soa.pitch, soa.yaw)
    r = [np.ascontiguousarray(rot[:, i, j]) for i in range(3) for j in range(3)]
    tx, ty, tz = soa.x, soa.y, soa.z

    if params.lut is None:
        log_norm = -0.5 * math.log(2.0 * math.pi * params.sigma**2)
        inv_two_sigma_sq = 0.5 / params.sigma**2
        table = None
    else:
        table = params.lut

    n = soa.n
    log_sums = np.empty(n)
    chunk_rows = max(1, _CHUNK_ELEMENTS // pts.shape[0])

    def evaluate_range(lo: int, hi: int) -> None:
        for c0 in range(lo, hi, chunk_rows):
            c1 = min(c0 + chunk_rows, hi)
            s = slice(c0, c1)
            wx = r[0][s, None] * zx + r[1][s, None] * zy + r[2][s, None] * zz + tx[s, None]
            wy = r[3][s, None] * zx + r[4][s, None] * zy + r[5][s, None] * zz + ty[s, None]
            wz = r[6][s, None] * zx + r[7][s, None] * zy + r[8][s, None] * zz + tz[s, None]
            if params.interpolate:
                d = tsdf_map.interpolated_values(wx, wy, wz)
            else:
                d = tsdf_map.lookup_values(wx, wy, wz).astype(np.float64)
            if table is None:
                log_lik = log_norm - d * d * inv_two_sigma_sq
            else:
                log_lik = table.lookup_log(d)
            log_sums[s] = log_lik.sum(axis=1)

    if lanes == 1 or n < _MIN_PARALLEL_N:
        evaluate_range(0, n)
    else:
        bounds = [(i * n) // lanes for i in range(lanes + 1)]
        with ThreadPoolExecutor(max_workers=lanes) as pool:
            futures = [pool.submit(evaluate_range, bounds[i], bounds[i + 1])
                       for i in range(lanes)]
            for f in futures:
                f.result()

    shift = log_sums.max()
    return soa.weight * np.exp(log_sums - shift)


def evaluation_lookup_count(n_particles: int, scan: PointCloud,
                            params: SensorModelParams) -> int:
    """Map lookups one evaluation performs (8 per point when interpolating)."""
    pts = (len(scan) + params.subsample_stride - 1) // params.subsample_stride
    return n_particles * pts * (8 if params.interpolate else 1)


class ReductionBuffer:
    """Scratch buffer for pairwise reduction, zero-padded to a power of two."""

    def __init__(self, values):
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.size == 0:
            padded = np.zeros(0)
        else:
            padded = np.zeros(1 << (v.size - 1).bit_length())
            padded[:v.size] = v
        self.values = padded
        self.length = v.size
        self.iterations = 0


def tree_reduce_sum(buffer: ReductionBuffer) -> float:
    """Pairwise halving sum: each step folds the upper half of the active
    range onto the lower half, so ceil(log2(n)) steps reach element 0.

    Consumes the buffer (in-place) and records the step count on it.
    """
    buf = buffer.values
    n = buf.size
    iterations = 0
    while n > 1:
        half = n // 2
        buf[:half] += buf[half:n]
        n = half
        iterations += 1
    buffer.iterations = iterations
    return float(buf[0]) if buf.size else 0.0


def tree_sum(values) -> float:
    """Tree-reduce a fresh buffer built from `values`."""
    return tree_reduce_sum(ReductionBuffer(values))


@dataclass(frozen=True)
class WeightedPoseSums:
    """Weighted component sums of a particle set; divide by total_weight."""

    x: float
    y: float
    z: float
    qw: float
    qx: float
    qy: float
    qz: float
    total_weight: float


def tree_reduce_weighted_pose(soa: ParticleSoA) -> WeightedPoseSums:
    """Tree-reduced weighted sums of positions and orientation quaternions.

    Quaternions are sign-aligned to the highest-weight particle's hemisphere
    before summing (antipodal quaternions encode one rotation). Raises
    DegenerateFilterError when the total weight is zero or non-finite.
    """
    w = soa.weight
    qw, qx, qy, qz = euler_to_quaternion_components(soa.roll, soa.pitch, soa.yaw)
    ref = int(np.argmax(w))
    dots = qw * qw[ref] + qx * qx[ref] + qy * qy[ref] + qz * qz[ref]
    sign = np.where(dots < 0.0, -1.0, 1.0)
    total = tree_sum(w)
    if not math.isfinite(total) or total <= 0.0:
        raise DegenerateFilterError(f"total particle weight {total} is unusable")
    ws = w * sign
    return WeightedPoseSums(
        x=tree_sum(w * soa.x),
        y=tree_sum(w * soa.y),
        z=tree_sum(w * soa.z),
        qw=tree_sum(ws * qw),
        qx=tree_sum(ws * qx),
        qy=tree_sum(ws * qy),
        qz=tree_sum(ws * qz),
        total_weight=total,
    )


@dataclass(frozen=True)
class BenchmarkRecord:
    """One timing trial group of the sensor-update engine."""

    n_particles: int
    lanes: int
    scan_points: int
    stride: int
    median_ms: float
    trials: int
    lookups: int

    def as_dict(self) -> dict:
        return asdict(self)


def benchmark_sensor_update(n_particles: int, scan: PointCloud, tsdf_map: TsdfMap,
                            params: SensorModelParams, lanes: int = 1, trials: int = 5,
                            seed: int = 0, center: Pose6D = Pose6D(),
                            sigma_pos: float = 0.5, sigma_ang: float = 0.1) -> BenchmarkRecord:
    """Median wall time of evaluate + weight reduction on a synthetic cloud.

    Particles are drawn from a Gaussian around `center` (the usual benchmark
    distribution for localization workloads); one untimed warmup run builds
    the map index and warms caches.
    """
    if n_particles < 1:
        raise ValueError("n_particles must be >= 1")
    rng = np.random.default_rng(seed)
    c = center.as_array()
    soa = ParticleSoA(
        c[0] + sigma_pos * rng.standard_normal(n_particles),
        c[1] + sigma_pos * rng.standard_normal(n_particles),
        c[2] + sigma_pos * rng.standard_normal(n_particles),
        c[3] + sigma_ang * rng.standard_normal(n_particles),
        c[4] + sigma_ang * rng.standard_normal(n_particles),
        c[5] + sigma_ang * rng.standard_normal(n_particles),
        np.full(n_particles, 1.0 / n_particles),
    )
    durations = []
    for trial in range(-1, trials):
        t0 = time.perf_counter()
        weights = evaluate_particles_parallel(soa, scan, tsdf_map, params, lanes)
        tree_sum(weights)
        elapsed = time.perf_counter() - t0
        if trial >= 0:  # trial -1 is the warmup
            durations.append(elapsed)
    pts = scan.points[::params.subsample_stride]
    return BenchmarkRecord(
        n_particles=n_particles,
        lanes=lanes,
        scan_points=pts.shape[0],
        stride=params.subsample_stride,
        median_ms=statistics.median(durations) * 1e3,
        trials=trials,
        lookups=evaluation_lookup_count(n_particles, scan, params),
    )
