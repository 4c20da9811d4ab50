"""Analytic environments built from axis-aligned boxes.

A Scene provides exact signed distances, exact ray casting, and TSDF map
construction, which makes it a self-contained source of maps, virtual LiDAR
scans, and ground truth for the localization pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateSceneError
from .geometry import Pose6D, rotation_matrix
from .tsdf import TsdfMap


@dataclass(frozen=True)
class Box:
    """Axis-aligned solid: center and positive half-extents, meters."""

    center: tuple[float, float, float]
    half_extents: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "half_extents", tuple(float(v) for v in self.half_extents))
        if any(h <= 0.0 for h in self.half_extents):
            raise ValueError("half extents must be positive")

    @property
    def min_corner(self) -> np.ndarray:
        return np.array(self.center) - np.array(self.half_extents)

    @property
    def max_corner(self) -> np.ndarray:
        return np.array(self.center) + np.array(self.half_extents)


@dataclass(frozen=True)
class ScanPattern:
    """Virtual spinning-LiDAR geometry: elevation rings times azimuth steps."""

    ring_elevations: tuple[float, ...]
    azimuth_count: int
    max_range: float

    def __post_init__(self):
        elevations = tuple(float(v) for v in self.ring_elevations)
        object.__setattr__(self, "ring_elevations", elevations)
        if len(elevations) == 0:
            raise ValueError("at least one ring is required")
        if any(b <= a for a, b in zip(elevations, elevations[1:])):
            raise ValueError("ring elevations must be strictly increasing")
        if self.azimuth_count < 1:
            raise ValueError("azimuth_count must be >= 1")
        if self.max_range <= 0.0:
            raise ValueError("max_range must be positive")

    @property
    def ray_count(self) -> int:
        return len(self.ring_elevations) * self.azimuth_count

    def ray_directions(self) -> np.ndarray:
        """Unit directions in the sensor frame, ring-major, (rays, 3)."""
        elev = np.asarray(self.ring_elevations)
        azim = 2.0 * np.pi * np.arange(self.azimuth_count) / self.azimuth_count
        ce, se = np.cos(elev)[:, None], np.sin(elev)[:, None]
        ca, sa = np.cos(azim)[None, :], np.sin(azim)[None, :]
        dirs = np.stack(
            [ce * ca, ce * sa, np.broadcast_to(se, (elev.size, azim.size))], axis=-1
        )
        return dirs.reshape(-1, 3)

    @classmethod
    def vlp16_like(cls, max_range: float = 100.0) -> "ScanPattern":
        """16 rings from -15 to +15 degrees in 2 degree steps, 0.4 degree azimuth."""
        rings = tuple(math.radians(d) for d in range(-15, 16, 2))
        return cls(rings, 900, max_range)

    @classmethod
    def grid(cls, rings: int, azimuths: int, elevation_min: float,
             elevation_max: float, max_range: float) -> "ScanPattern":
        """Evenly spaced rings between two elevations (radians)."""
        if rings == 1:
            elevations: tuple[float, ...] = ((elevation_min + elevation_max) / 2.0,)
        else:
            elevations = tuple(np.linspace(elevation_min, elevation_max, rings))
        return cls(elevations, azimuths, max_range)


@dataclass(frozen=True)
class PointCloud:
    """Sensor-frame scan points, (n, 3) float64 meters."""

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


class Scene:
    """Union of axis-aligned boxes inside a world extent."""

    def __init__(self, solids: Sequence[Box], bounds_min: Sequence[float],
                 bounds_max: Sequence[float]):
        if len(solids) == 0:
            raise ValueError("a scene needs at least one solid")
        self.solids = tuple(solids)
        self.bounds_min = np.asarray(bounds_min, dtype=float)
        self.bounds_max = np.asarray(bounds_max, dtype=float)
        if not np.all(self.bounds_max > self.bounds_min):
            raise ValueError("bounds_max must exceed bounds_min on every axis")
        for box in self.solids:
            if (np.any(box.min_corner < self.bounds_min - 1e-9)
                    or np.any(box.max_corner > self.bounds_max + 1e-9)):
                raise ValueError(f"solid {box} lies outside the scene bounds")
        self._centers = np.array([b.center for b in self.solids])
        self._halves = np.array([b.half_extents for b in self.solids])

    # ------------------------------------------------------------------- sdf

    def sdf(self, points) -> np.ndarray | float:
        """Exact signed distance to the union of solids.

        Negative inside any solid, exact Euclidean distance to the nearest
        surface outside. Accepts a 3-vector or an (..., 3) array.
        """
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        p = pts.reshape(-1, 3)
        best = None
        for c, h in zip(self._centers, self._halves):
            q = np.abs(p - c) - h
            outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
            inside = np.minimum(np.max(q, axis=-1), 0.0)
            d = outside + inside
            best = d if best is None else np.minimum(best, d)
        result = best.reshape(pts.shape[:-1])
        return float(result) if scalar else result

    # ------------------------------------------------------------- ray casts

    def ray_cast(self, origin: Sequence[float], direction: Sequence[float],
                 max_range: float) -> float | None:
        """Smallest positive hit distance along a unit ray, or None on miss."""
        d = np.asarray(direction, dtype=float)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector")
        t = self.ray_cast_batch(np.asarray(origin, dtype=float), d.reshape(1, 3), max_range)
        return None if np.isinf(t[0]) else float(t[0])

    def ray_cast_batch(self, origin: np.ndarray, directions: np.ndarray,
                       max_range: float) -> np.ndarray:
        """Slab-method intersection of many rays (shared origin) with the
        solid union; misses are +inf."""
        o = np.asarray(origin, dtype=float)
        dirs = np.asarray(directions, dtype=float)
        best = np.full(dirs.shape[0], np.inf)
        for box in self.solids:
            t = _ray_box_hits(o, dirs, box.min_corner, box.max_corner)
            best = np.minimum(best, t)
        return np.where(best <= max_range, best, np.inf)

    # -------------------------------------------------------------- sampling

    def sample_free_space(self, count: int, seed: int = 0) -> np.ndarray:
        """Uniform points with positive SDF inside the bounds, (count, 3).

        Rejection-sampled; raises DegenerateSceneError when fewer than 0.1%
        of 10^6 trials are accepted.
        """
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = np.random.default_rng(seed)
        accepted: list[np.ndarray] = []
        n_accepted = 0
        trials = 0
        span = self.bounds_max - self.bounds_min
        while n_accepted < count:
            batch = max(1024, 2 * (count - n_accepted))
            p = self.bounds_min + rng.random((batch, 3)) * span
            keep = p[self.sdf(p) > 0.0]
            trials += batch
            n_accepted += keep.shape[0]
            accepted.append(keep)
            if trials >= 10**6 and n_accepted < 0.001 * trials:
                raise DegenerateSceneError(
                    f"free-space acceptance {n_accepted}/{trials} below 0.1%")
        return np.concatenate(accepted)[:count]

    # -------------------------------------------------------------- scanning

    def simulate_scan(self, sensor_pose: Pose6D, pattern: ScanPattern,
                      noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
        """Virtual LiDAR sweep: one ray per (ring, azimuth).

        Hit ranges get additive Gaussian noise (clipped to [0, max_range]);
        misses are dropped. Returned points are in the sensor frame.
        """
        dirs_sensor = pattern.ray_directions()
        rot = rotation_matrix(sensor_pose)
        dirs_world = dirs_sensor @ rot.T
        t = self.ray_cast_batch(sensor_pose.translation(), dirs_world, pattern.max_range)
        hit = np.isfinite(t)
        rng = np.random.default_rng(seed)
        noise = noise_sigma * rng.standard_normal(int(np.count_nonzero(hit)))
        ranges = np.clip(t[hit] + noise, 0.0, pattern.max_range)
        return PointCloud(dirs_sensor[hit] * ranges[:, None])


def _ray_box_hits(origin: np.ndarray, dirs: np.ndarray, bmin: np.ndarray,
                  bmax: np.ndarray) -> np.ndarray:
    """First positive boundary crossing per ray (slab method), +inf if none."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (bmin - origin) * inv
        t2 = (bmax - origin) * inv
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    parallel = dirs == 0.0
    if np.any(parallel):
        inside = (origin >= bmin) & (origin <= bmax)
        lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    enter = lo.max(axis=1)
    leave = hi.min(axis=1)
    # Origin inside the box: first surface along the ray is the exit point.
    t = np.where(enter > 1e-12, enter, leave)
    hit = (enter <= leave) & (leave > 0.0)
    return np.where(hit, t, np.inf)


def build_tsdf(scene: Scene, fine_resolution: float, truncation: float,
               block_size: int = 16, origin: Sequence[float] = (0.0, 0.0, 0.0)) -> TsdfMap:
    """Discretize the scene SDF into a sparse two-level map.

    Every fine cell whose center lies within the truncation band of a surface
    stores the clamped exact SDF; blocks entirely outside the band stay
    unallocated. All map content is computed up front, before localization.
    """
    m = TsdfMap(fine_resolution, truncation, block_size, origin)
    bs = m.block_size
    candidates: set[tuple[int, int, int]] = set()
    for box in scene.solids:
        lo_fine = np.floor(
            (box.min_corner - m.truncation - m.origin) / m.fine_resolution
        ).astype(np.int64)
        hi_fine = np.floor(
            (box.max_corner + m.truncation - m.origin) / m.fine_resolution
        ).astype(np.int64)
        lo = lo_fine >> m._log2_bs
        hi = hi_fine >> m._log2_bs
        for bx in range(lo[0], hi[0] + 1):
            for by in range(lo[1], hi[1] + 1):
                for bz in range(lo[2], hi[2] + 1):
                    candidates.add((bx, by, bz))
    for coarse in sorted(candidates):
        centers = m.block_cell_centers(coarse)
        sdf = scene.sdf(centers)
        if np.any(np.abs(sdf) < m.truncation):
            m.set_block(coarse, np.clip(sdf, -m.truncation, m.truncation).astype(np.float32))
    return m


# Scene text format: `box cx cy cz hx hy hz` per solid plus one
# `bounds xmin ymin zmin xmax ymax zmax` line. Scan text format: `x y z`
# per point, sensor frame.

def write_scene(scene: Scene, path) -> None:
    lines = ["bounds " + " ".join(f"{v:.17g}" for v in np.concatenate([scene.bounds_min, scene.bounds_max]))]
    for box in scene.solids:
        lines.append("box " + " ".join(f"{v:.17g}" for v in (*box.center, *box.half_extents)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_scene(path) -> Scene:
    solids: list[Box] = []
    bounds: tuple[np.ndarray, np.ndarray] | None = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        kind, values = fields[0], [float(v) for v in fields[1:]]
        if kind == "box" and len(values) == 6:
            solids.append(Box(tuple(values[:3]), tuple(values[3:])))
        elif kind == "bounds" and len(values) == 6:
            bounds = (np.array(values[:3]), np.array(values[3:]))
        else:
            raise ValueError(f"{path}:{lineno}: unrecognized scene line {line!r}")
    if bounds is None:
        raise ValueError(f"{path}: missing bounds line")
    return Scene(solids, bounds[0], bounds[1])


def write_scan(cloud: PointCloud, path) -> None:
    lines = [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in cloud.points]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_scan(path) -> PointCloud:
    rows = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 fields, got {len(fields)}")
        rows.append([float(v) for v in fields])
    return PointCloud(np.array(rows) if rows else np.empty((0, 3)))
