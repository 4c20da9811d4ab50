"""Monte Carlo localization loop: init, motion update, sensor update,
normalization, resampling, and pose estimation.

A particle is a weighted 6-DoF pose hypothesis. The sensor update scores
each particle by transforming the scan into the map frame at the particle's
pose and accumulating endpoint log-likelihoods; it is delegated to the
data-parallel engine but behaves as a pure set-to-set transformation.

All randomness is seed-explicit. Per-particle noise is drawn as one
(n, dims) matrix from the seeded generator, so particle i always receives
row i regardless of how the work is scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateFilterError
from .geometry import (Pose6D, Quaternion, euler_to_matrix, matrix_to_euler,
                       quaternion_to_pose, wrap_angle)
from .parallel import (ParticleSoA, default_lanes, evaluate_particles_parallel,
                       tree_reduce_weighted_pose, tree_sum)
from .scene import PointCloud, Scene
from .sensor import (LikelihoodTable, SensorModelParams, build_likelihood_lut,
                     point_likelihood)
from .tsdf import TsdfMap

__all__ = [
    "Particle", "ParticleSet", "MotionNoiseParams", "OdometryDelta",
    "SensorModelParams", "LikelihoodTable", "point_likelihood",
    "build_likelihood_lut", "initialize_global", "initialize_local",
    "motion_update", "sensor_update", "normalize", "resample",
    "estimate_pose", "effective_sample_size", "write_particles",
    "read_particles",
]

# An odometry increment is just a relative pose in the robot's previous frame.
OdometryDelta = Pose6D


@dataclass(frozen=True)
class Particle:
    """One weighted pose hypothesis."""

    state: Pose6D
    weight: float

    def __post_init__(self):
        w = float(self.weight)
        if not math.isfinite(w) or w < 0.0:
            raise ValueError(f"particle weight must be finite and >= 0, got {w}")
        object.__setattr__(self, "weight", w)


class ParticleSet:
    """A set of weighted pose hypotheses, stored as an (n, 6) state matrix.

    Columns are x, y, z, roll, pitch, yaw. The record view (`particles`) and
    the component-major view (parallel.pack) are both derived from this
    storage. Operations treat sets as values: they return new sets.
    """

    def __init__(self, states: np.ndarray, weights: np.ndarray, normalized: bool = False):
        states = np.asarray(states, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if states.ndim != 2 or states.shape[1] != 6:
            raise ValueError("states must be an (n, 6) array")
        if weights.shape != (states.shape[0],):
            raise ValueError("weights must be an (n,) array matching states")
        if states.shape[0] < 1:
            raise ValueError("a particle set holds at least one particle")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0.0):
            raise ValueError("weights must be finite and >= 0")
        if normalized and abs(float(weights.sum()) - 1.0) > 1e-9:
            raise ValueError("normalized flag set but weights do not sum to 1")
        self.states = states
        self.weights = weights
        self.normalized = bool(normalized)

    @classmethod
    def from_particles(cls, particles: Sequence[Particle], normalized: bool = False) -> "ParticleSet":
        states = np.array([p.state.as_array() for p in particles])
        weights = np.array([p.weight for p in particles])
        return cls(states, weights, normalized)

    @property
    def particles(self) -> list[Particle]:
        return [Particle(Pose6D.from_array(row), float(w))
                for row, w in zip(self.states, self.weights)]

    def soa(self) -> ParticleSoA:
        return ParticleSoA.from_state_matrix(self.states, self.weights)

    def __len__(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class MotionNoiseParams:
    """Per-update Gaussian jitter: one sigma for all linear axes (meters),
    one for all angular axes (radians)."""

    sigma_linear: float
    sigma_angular: float

    def __post_init__(self):
        if self.sigma_linear < 0.0 or self.sigma_angular < 0.0:
            raise ValueError("motion noise sigmas must be >= 0")


def _per_particle_normals(seed, n: int, dims: int) -> np.ndarray:
    """Seeded (n, dims) noise matrix; row i is particle i's stream."""
    return np.random.default_rng(seed).standard_normal((n, dims))


def initialize_global(scene: Scene, count: int, orientation_mode: str = "bounded",
                      seed=0, roll_pitch_bound: float = math.radians(15.0)) -> ParticleSet:
    """Particles uniform over the scene's free space.

    Yaw is uniform in (-pi, pi]. `bounded` mode keeps roll and pitch within
    +-roll_pitch_bound (ground-hugging vehicles); `full` draws every Euler
    angle over its whole range. Weights start at 1/count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    pos_seed, ang_seed = np.random.SeedSequence(seed).spawn(2)
    positions = scene.sample_free_space(count, seed=pos_seed)
    rng = np.random.default_rng(ang_seed)
    yaw = wrap_angle(rng.uniform(-np.pi, np.pi, count))
    if orientation_mode == "bounded":
        roll = rng.uniform(-roll_pitch_bound, roll_pitch_bound, count)
        pitch = rng.uniform(-roll_pitch_bound, roll_pitch_bound, count)
    elif orientation_mode == "full":
        roll = wrap_angle(rng.uniform(-np.pi, np.pi, count))
        pitch = rng.uniform(-np.pi / 2.0, np.pi / 2.0, count)
    else:
        raise ValueError(f"unknown orientation_mode {orientation_mode!r}")
    states = np.column_stack([positions, roll, pitch, yaw])
    return ParticleSet(states, np.full(count, 1.0 / count), normalized=True)


def initialize_local(center: Pose6D, sigmas: Sequence[float], count: int,
                     seed=0) -> ParticleSet:
    """Particles Gaussian-distributed around a pose estimate.

    `sigmas` gives one standard deviation per state component
    (x, y, z, roll, pitch, yaw). Weights start at 1/count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    sig = np.asarray(sigmas, dtype=float)
    if sig.shape != (6,) or np.any(sig < 0.0):
        raise ValueError("sigmas must be six values >= 0")
    states = center.as_array() + sig * _per_particle_normals(seed, count, 6)
    states[:, 3:] = wrap_angle(states[:, 3:])
    return ParticleSet(states, np.full(count, 1.0 / count), normalized=True)


def motion_update(pset: ParticleSet, delta: OdometryDelta, noise: MotionNoiseParams,
                  seed=0) -> ParticleSet:
    """Compose every particle with the odometry delta plus sampled noise.

    The noisy increment (delta components plus per-particle Gaussian jitter)
    is applied in each particle's own frame. Weights are untouched.
    """
    n = len(pset)
    eps = _per_particle_normals(seed, n, 6)
    d_lin = delta.translation() + noise.sigma_linear * eps[:, :3]
    d_ang = np.array([delta.roll, delta.pitch, delta.yaw]) + noise.sigma_angular * eps[:, 3:]

    rot_p = euler_to_matrix(pset.states[:, 3], pset.states[:, 4], pset.states[:, 5])
    new_pos = pset.states[:, :3] + np.einsum("nij,nj->ni", rot_p, d_lin)
    rot_new = rot_p @ euler_to_matrix(d_ang[:, 0], d_ang[:, 1], d_ang[:, 2])
    roll, pitch, yaw = matrix_to_euler(rot_new)
    states = np.column_stack([new_pos, wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)])
    return ParticleSet(states, pset.weights.copy(), normalized=pset.normalized)


def sensor_update(pset: ParticleSet, scan: PointCloud, tsdf_map: TsdfMap,
                  params: SensorModelParams, lanes: int | None = None) -> ParticleSet:
    """Reweight particles by the endpoint model over the (subsampled) scan.

    Each particle's new weight is its old weight times
    exp(sum of point log-likelihoods - set maximum); the result is
    unnormalized. An empty scan (after subsampling) passes weights through
    unchanged.
    """
    if lanes is None:
        lanes = default_lanes()
    if scan.points[::params.subsample_stride].shape[0] == 0:
        return ParticleSet(pset.states.copy(), pset.weights.copy(), pset.normalized)
    weights = evaluate_particles_parallel(pset.soa(), scan, tsdf_map, params, lanes)
    return ParticleSet(pset.states.copy(), weights, normalized=False)


def normalize(pset: ParticleSet) -> ParticleSet:
    """Divide weights by their (tree-reduced) total.

    Raises DegenerateFilterError when the total is zero or non-finite; the
    caller chooses the recovery policy.
    """
    total = tree_sum(pset.weights)
    if not math.isfinite(total) or total <= 0.0:
        raise DegenerateFilterError(f"total particle weight {total} is unusable")
    return ParticleSet(pset.states.copy(), pset.weights / total, normalized=True)


def resample(pset: ParticleSet, seed=0) -> ParticleSet:
    """Systematic (low-variance) resampling.

    One uniform offset u in [0, 1/n) places n equally spaced strata over the
    cumulative weights; survivor counts deviate from n*w_i by less than one.
    Output weights are reset to 1/n.
    """
    if not pset.normalized:
        raise ValueError("resample requires a normalized particle set")
    n = len(pset)
    u = np.random.default_rng(seed).uniform(0.0, 1.0 / n)
    positions = u + np.arange(n) / n
    cumulative = np.cumsum(pset.weights)
    idx = np.minimum(np.searchsorted(cumulative, positions, side="right"), n - 1)
    return ParticleSet(pset.states[idx].copy(), np.full(n, 1.0 / n), normalized=True)


def estimate_pose(pset: ParticleSet, mode: str = "mean") -> Pose6D:
    """Point estimate of the set: weighted mean or highest-weight particle.

    `mean` averages positions by weight and orientations by hemisphere-
    aligned quaternion averaging (renormalized); `max` returns the arg-max
    weight particle, ties broken by lowest index.
    """
    if not pset.normalized:
        raise ValueError("estimate_pose requires a normalized particle set")
    if mode == "max":
        return Pose6D.from_array(pset.states[int(np.argmax(pset.weights))])
    if mode != "mean":
        raise ValueError(f"unknown mode {mode!r}")
    sums = tree_reduce_weighted_pose(pset.soa())
    t = sums.total_weight
    q = Quaternion(sums.qw / t, sums.qx / t, sums.qy / t, sums.qz / t)
    if q.norm() < 1e-12:
        raise DegenerateFilterError("orientation average cancelled to zero")
    return quaternion_to_pose(sums.x / t, sums.y / t, sums.z / t, q.normalized())


def effective_sample_size(pset: ParticleSet) -> float:
    """1 / sum(w^2) for a normalized set; n means healthy, 1 means collapsed."""
    if not pset.normalized:
        raise ValueError("effective_sample_size requires a normalized particle set")
    return float(1.0 / np.sum(pset.weights**2))


# Debug dump format: one particle per line, `x y z roll pitch yaw weight`.

def write_particles(pset: ParticleSet, path) -> None:
    lines = []
    for row, w in zip(pset.states, pset.weights):
        lines.append(" ".join(f"{v:.17g}" for v in row) + f" {w:.17g}")
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_particles(path) -> ParticleSet:
    states, weights = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = [float(v) for v in line.split()]
        if len(fields) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(fields)}")
        states.append(fields[:6])
        weights.append(fields[6])
    return ParticleSet(np.array(states), np.array(weights))
