"""Two-level sparse voxel grid of truncated signed distances.

The map stores fine cells (side ``fine_resolution``) grouped into coarse
blocks of ``block_size`` cells per edge. Only blocks containing at least one
distance inside the truncation band are allocated; reads anywhere else
return ``+truncation`` (free-space assumption, positive = outside surfaces).

Cell values live at cell centers. Values are kept as float32, and the
scalar header fields (resolution, truncation, origin) are rounded to
float32 at construction so that serialization round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from typing import Iterator, Sequence

import numpy as np

from .errors import MapFormatError

_MAGIC = b"TSDF"
_VERSION = 1
_HEADER = struct.Struct("<4sBffI3fQ")
_BLOCK_HEADER = struct.Struct("<3i")

# Coarse indices are packed into one int64 key (21 bits per axis) so that
# batched lookups reduce to a binary search over a sorted key array.
_OFF = 1 << 20
_SPAN = 1 << 21


def _f32(value: float) -> float:
    return float(np.float32(value))


class TsdfMap:
    """Sparse two-level truncated signed distance field."""

    def __init__(self, fine_resolution: float, truncation: float,
                 block_size: int = 16, origin: Sequence[float] = (0.0, 0.0, 0.0)):
        fine_resolution = _f32(fine_resolution)
        truncation = _f32(truncation)
        if fine_resolution <= 0.0:
            raise ValueError("fine_resolution must be positive")
        if truncation < fine_resolution:
            raise ValueError("truncation must be >= fine_resolution")
        block_size = int(block_size)
        if block_size < 1 or (block_size & (block_size - 1)) != 0:
            raise ValueError("block_size must be a power of two")
        self.fine_resolution = fine_resolution
        self.truncation = truncation
        self.block_size = block_size
        self.origin = np.array([_f32(v) for v in origin])
        self._log2_bs = block_size.bit_length() - 1
        self._cells_per_block = block_size**3
        # coarse index tuple -> flat float32 array of block_size**3 values,
        # C-order over (local x, local y, local z)
        self._blocks: dict[tuple[int, int, int], np.ndarray] = {}
        self._index: _LookupIndex | None = None

    # ------------------------------------------------------------------ info

    @property
    def block_count(self) -> int:
        return len(self._blocks)

    @property
    def blocks(self) -> dict[tuple[int, int, int], np.ndarray]:
        """Read-only view intent: mutate only via set_cell/set_block."""
        return self._blocks

    def iter_blocks(self) -> Iterator[tuple[tuple[int, int, int], np.ndarray]]:
        return iter(self._blocks.items())

    def __eq__(self, other) -> bool:
        if not isinstance(other, TsdfMap):
            return NotImplemented
        if (self.fine_resolution != other.fine_resolution
                or self.truncation != other.truncation
                or self.block_size != other.block_size
                or not np.array_equal(self.origin, other.origin)
                or self._blocks.keys() != other._blocks.keys()):
            return False
        return all(np.array_equal(v, other._blocks[k]) for k, v in self._blocks.items())

    def __repr__(self) -> str:
        return (f"TsdfMap(res={self.fine_resolution:g}, trunc={self.truncation:g}, "
                f"block_size={self.block_size}, blocks={self.block_count})")

    # -------------------------------------------------------------- indexing

    def world_to_grid(self, point: Sequence[float]) -> tuple[tuple[int, int, int], tuple[int, int, int]]:
        """Coarse and global fine index of the cell containing a world point.

        Floor-based and lower-inclusive: a point exactly on a cell boundary
        belongs to the higher cell.
        """
        p = np.asarray(point, dtype=float)
        fine = np.floor((p - self.origin) / self.fine_resolution).astype(np.int64)
        coarse = fine >> self._log2_bs
        return tuple(int(v) for v in coarse), tuple(int(v) for v in fine)

    def cell_center(self, fine_index: Sequence[int]) -> np.ndarray:
        idx = np.asarray(fine_index, dtype=float)
        return self.origin + (idx + 0.5) * self.fine_resolution

    def block_cell_centers(self, coarse_index: Sequence[int]) -> np.ndarray:
        """Centers of all block_size**3 cells of a block, ordered like the
        block's value array."""
        bs = self.block_size
        base = np.asarray(coarse_index, dtype=np.int64) * bs
        axis = np.arange(bs)
        local = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
        return self.origin + (base + local + 0.5) * self.fine_resolution

    # -------------------------------------------------------------- mutation

    def set_cell(self, fine_index: Sequence[int], value: float) -> None:
        """Store a distance (clamped to the truncation band) at a fine cell.

        Allocates the containing coarse block on demand; fresh cells read as
        +truncation until written. Single-writer, pre-run only.
        """
        ix, iy, iz = (int(v) for v in fine_index)
        bs = self.block_size
        coarse = (ix >> self._log2_bs, iy >> self._log2_bs, iz >> self._log2_bs)
        self._check_coarse_range(coarse)
        block = self._blocks.get(coarse)
        if block is None:
            block = np.full(self._cells_per_block, self.truncation, dtype=np.float32)
            self._blocks[coarse] = block
        lx, ly, lz = ix & (bs - 1), iy & (bs - 1), iz & (bs - 1)
        clamped = min(max(float(value), -self.truncation), self.truncation)
        block[(lx * bs + ly) * bs + lz] = np.float32(clamped)
        self._index = None

    def set_block(self, coarse_index: Sequence[int], values: np.ndarray) -> None:
        """Store a whole block of distances (clamped); used by map builders."""
        coarse = tuple(int(v) for v in coarse_index)
        self._check_coarse_range(coarse)
        values = np.asarray(values, dtype=np.float32).reshape(-1)
        if values.size != self._cells_per_block:
            raise ValueError(f"block must hold {self._cells_per_block} values, got {values.size}")
        self._blocks[coarse] = np.clip(values, -self.truncation, self.truncation)
        self._index = None

    def prune(self) -> int:
        """Drop blocks whose cells are all clamped; returns the number removed."""
        dead = [k for k, v in self._blocks.items()
                if not np.any(np.abs(v) < self.truncation)]
        for k in dead:
            del self._blocks[k]
        if dead:
            self._index = None
        return len(dead)

    def _check_coarse_range(self, coarse: tuple[int, int, int]) -> None:
        if any(abs(c) >= _OFF for c in coarse):
            raise ValueError(f"coarse index {coarse} out of addressable range")

    # --------------------------------------------------------------- queries

    def _ensure_index(self) -> "_LookupIndex":
        if self._index is None:
            self._index = _LookupIndex(self)
        return self._index

    def build_index(self) -> None:
        """Precompute the lookup index (otherwise built lazily on first query).

        Call before handing the map to concurrent readers.
        """
        self._ensure_index()

    def lookup(self, point: Sequence[float]) -> float:
        """Stored distance of the cell containing a world point.

        Returns +truncation when the coarse block is absent; any world point
        is a valid query.
        """
        p = np.asarray(point, dtype=float)
        return float(self.lookup_values(p[0], p[1], p[2]))

    def lookup_batch(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.lookup_values(pts[..., 0], pts[..., 1], pts[..., 2])

    def lookup_values(self, xs, ys, zs) -> np.ndarray:
        """Batched nearest-cell lookup on coordinate arrays of any shape."""
        res = self.fine_resolution
        ox, oy, oz = self.origin
        ix = np.floor((np.asarray(xs, dtype=float) - ox) / res).astype(np.int64)
        iy = np.floor((np.asarray(ys, dtype=float) - oy) / res).astype(np.int64)
        iz = np.floor((np.asarray(zs, dtype=float) - oz) / res).astype(np.int64)
        return self._values_by_fine(ix, iy, iz)

    def _values_by_fine(self, ix, iy, iz) -> np.ndarray:
        index = self._ensure_index()
        bs = self.block_size
        mask = bs - 1
        key = (((ix >> self._log2_bs) + _OFF) * (_SPAN * _SPAN)
               + ((iy >> self._log2_bs) + _OFF) * _SPAN
               + ((iz >> self._log2_bs) + _OFF))
        pos = np.searchsorted(index.keys, key)
        pos_safe = np.minimum(pos, max(index.keys.size - 1, 0))
        if index.keys.size == 0:
            return np.full(np.shape(key), self.truncation, dtype=np.float32)
        found = (pos < index.keys.size) & (index.keys.take(pos_safe) == key)
        lin = ((ix & mask) * bs + (iy & mask)) * bs + (iz & mask)
        flat = np.where(found, pos_safe * self._cells_per_block + lin, 0)
        vals = index.values.take(flat)
        return np.where(found, vals, np.float32(self.truncation))

    def lookup_interpolated(self, point: Sequence[float]) -> float:
        """Trilinear interpolation over the 8 surrounding cell centers.

        Absent neighbors contribute +truncation; at a cell center the result
        equals lookup().
        """
        p = np.asarray(point, dtype=float)
        return float(self.interpolated_values(p[0], p[1], p[2]))

    def lookup_interpolated_batch(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.interpolated_values(pts[..., 0], pts[..., 1], pts[..., 2])

    def interpolated_values(self, xs, ys, zs) -> np.ndarray:
        res = self.fine_resolution
        ox, oy, oz = self.origin
        rx = (np.asarray(xs, dtype=float) - ox) / res - 0.5
        ry = (np.asarray(ys, dtype=float) - oy) / res - 0.5
        rz = (np.asarray(zs, dtype=float) - oz) / res - 0.5
        bx = np.floor(rx)
        by = np.floor(ry)
        bz = np.floor(rz)
        fx, fy, fz = rx - bx, ry - by, rz - bz
        bxi = bx.astype(np.int64)
        byi = by.astype(np.int64)
        bzi = bz.astype(np.int64)
        acc = np.zeros(np.broadcast(rx, ry, rz).shape)
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            for dy in (0, 1):
                wy = fy if dy else 1.0 - fy
                for dz in (0, 1):
                    wz = fz if dz else 1.0 - fz
                    corner = self._values_by_fine(bxi + dx, byi + dy, bzi + dz)
                    acc = acc + (wx * wy * wz) * corner
        return acc

    # --------------------------------------------------------- serialization

    def serialize(self) -> bytes:
        """Binary encoding; blocks are written in sorted key order so equal
        maps serialize to identical bytes."""
        chunks = [_HEADER.pack(_MAGIC, _VERSION,
                               np.float32(self.fine_resolution),
                               np.float32(self.truncation),
                               self.block_size,
                               np.float32(self.origin[0]),
                               np.float32(self.origin[1]),
                               np.float32(self.origin[2]),
                               len(self._blocks))]
        for coarse in sorted(self._blocks):
            chunks.append(_BLOCK_HEADER.pack(*coarse))
            chunks.append(self._blocks[coarse].astype("<f4").tobytes())
        return b"".join(chunks)

    @classmethod
    def deserialize(cls, data: bytes) -> "TsdfMap":
        if len(data) < _HEADER.size:
            raise MapFormatError("truncated header")
        magic, version, res, trunc, bs, ox, oy, oz, n_blocks = _HEADER.unpack_from(data, 0)
        if magic != _MAGIC:
            raise MapFormatError(f"bad magic {magic!r}")
        if version != _VERSION:
            raise MapFormatError(f"unsupported version {version}")
        try:
            m = cls(res, trunc, bs, (ox, oy, oz))
        except ValueError as exc:
            raise MapFormatError(f"invalid header fields: {exc}") from exc
        block_bytes = _BLOCK_HEADER.size + 4 * m._cells_per_block
        expected = _HEADER.size + n_blocks * block_bytes
        if len(data) != expected:
            raise MapFormatError(f"payload is {len(data)} bytes, expected {expected}")
        offset = _HEADER.size
        for _ in range(n_blocks):
            coarse = _BLOCK_HEADER.unpack_from(data, offset)
            offset += _BLOCK_HEADER.size
            values = np.frombuffer(data, dtype="<f4", count=m._cells_per_block, offset=offset)
            offset += 4 * m._cells_per_block
            m.set_block(coarse, values)
        return m

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.serialize())

    @classmethod
    def load(cls, path) -> "TsdfMap":
        with open(path, "rb") as f:
            return cls.deserialize(f.read())


class _LookupIndex:
    """Immutable search structure: sorted packed keys plus stacked values."""

    __slots__ = ("keys", "values")

    def __init__(self, tsdf_map: TsdfMap):
        items = sorted(
            (self._encode(coarse), values) for coarse, values in tsdf_map.iter_blocks()
        )
        self.keys = np.array([k for k, _ in items], dtype=np.int64)
        if items:
            self.values = np.concatenate([v for _, v in items])
        else:
            self.values = np.empty(0, dtype=np.float32)

    @staticmethod
    def _encode(coarse: tuple[int, int, int]) -> int:
        bx, by, bz = coarse
        return ((bx + _OFF) * _SPAN + (by + _OFF)) * _SPAN + (bz + _OFF)
