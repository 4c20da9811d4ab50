"""Bundled example environments and trajectories.

The room scene is deliberately asymmetric (divider wall, cabinet, table,
two pillars) so that scan geometry disambiguates the pose during global
localization; a plain rectangular room has near-perfect 180 degree symmetry.
"""

from __future__ import annotations

import math

from .geometry import Pose6D
from .scene import Box, Scene

_WALL = 0.2  # wall/floor/ceiling thickness, meters


def room_20x10(height: float = 3.0) -> Scene:
    """Closed 20 m x 10 m room with cluttered, asymmetric interior.

    The shell (floor, ceiling, four walls) fills the scene bounds exactly,
    so free space inside the bounds is the room interior.
    """
    lx, ly, h, w = 20.0, 10.0, height, _WALL
    solids = [
        Box((lx / 2, ly / 2, -w / 2), (lx / 2 + w, ly / 2 + w, w / 2)),          # floor
        Box((lx / 2, ly / 2, h + w / 2), (lx / 2 + w, ly / 2 + w, w / 2)),       # ceiling
        Box((-w / 2, ly / 2, h / 2), (w / 2, ly / 2 + w, h / 2)),                # wall x=0
        Box((lx + w / 2, ly / 2, h / 2), (w / 2, ly / 2 + w, h / 2)),            # wall x=20
        Box((lx / 2, -w / 2, h / 2), (lx / 2 + w, w / 2, h / 2)),                # wall y=0
        Box((lx / 2, ly + w / 2, h / 2), (lx / 2 + w, w / 2, h / 2)),            # wall y=10
        # interior clutter
        Box((5.0, 1.25, h / 2), (0.1, 1.25, h / 2)),                             # divider stub
        Box((4.0, 6.5, h / 2), (0.25, 0.25, h / 2)),                             # pillar A
        Box((16.0, 8.0, h / 2), (0.3, 0.3, h / 2)),                              # pillar B
        Box((9.0, 9.4, 1.0), (0.75, 0.3, 1.0)),                                  # cabinet
        Box((13.0, 1.2, 0.4), (0.6, 0.4, 0.4)),                                  # table
    ]
    return Scene(solids, (-w, -w, -w), (lx + w, ly + w, h + w))


def single_wall(extent: float = 100.0) -> Scene:
    """One 10 m x 4 m wall slab inside a large empty extent (sparsity probe)."""
    wall = Box((extent / 2, extent / 2, 2.0), (5.0, 0.1, 2.0))
    return Scene([wall], (0.0, 0.0, 0.0), (extent, extent, extent))


def room_loop_trajectory(steps: int, z: float = 0.5) -> list[tuple[float, Pose6D]]:
    """Elliptic circuit through the room interior, yaw tangent to the path.

    Stamps are iteration indices. The path keeps clearance from the bundled
    clutter; one full loop over `steps` poses.
    """
    cx, cy, rx, ry = 10.0, 5.0, 6.0, 3.0
    out = []
    for k in range(steps):
        theta = 2.0 * math.pi * k / steps
        x = cx + rx * math.cos(theta)
        y = cy + ry * math.sin(theta)
        yaw = math.atan2(ry * math.cos(theta), -rx * math.sin(theta))
        out.append((float(k), Pose6D(x, y, z, 0.0, 0.0, yaw)))
    return out


def room_stationary_trajectory(steps: int, pose: Pose6D | None = None) -> list[tuple[float, Pose6D]]:
    """A robot holding one pose; default stands off-center facing the clutter."""
    p = pose if pose is not None else Pose6D(7.5, 4.0, 0.5, 0.0, 0.0, 0.9)
    return [(float(k), p) for k in range(steps)]
