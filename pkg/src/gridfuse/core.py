"""Grid geometry, coordinate transforms, and 2D poses.

Cells are addressed as (ix, iy) with ix the column and iy the row; dense
arrays are stored row-major with shape (height_cells, width_cells). Cell
(ix, iy) covers the half-open square
[origin + ix*res, origin + (ix+1)*res) x [origin + iy*res, origin + (iy+1)*res).
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


@dataclass(frozen=True)
class GridSpec:
    width_cells: int
    height_cells: int
    resolution: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if self.width_cells < 1 or self.height_cells < 1:
            raise ValueError("grid must have at least one cell per axis")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def n_cells(self) -> int:
        return self.width_cells * self.height_cells

    @property
    def width_m(self) -> float:
        return self.width_cells * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_cells * self.resolution

    def world_to_cell(self, x: float, y: float) -> tuple[int, int] | None:
        """Cell containing (x, y), or None when out of bounds."""
        ix = math.floor((x - self.origin_x) / self.resolution)
        iy = math.floor((y - self.origin_y) / self.resolution)
        if 0 <= ix < self.width_cells and 0 <= iy < self.height_cells:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (
            self.origin_x + (ix + 0.5) * self.resolution,
            self.origin_y + (iy + 0.5) * self.resolution,
        )

    def contains_point(self, x: float, y: float) -> bool:
        return self.world_to_cell(x, y) is not None

    def flat_index(self, ix: int, iy: int) -> int:
        return iy * self.width_cells + ix


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def compose(self, other: "Pose2D") -> "Pose2D":
        """Rigid-body composition self (+) other in SE(2)."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )

    def transform_point(self, px: float, py: float) -> tuple[float, float]:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return self.x + c * px - s * py, self.y + s * px + c * py


def compose_pose(a: Pose2D, b: Pose2D) -> Pose2D:
    return a.compose(b)
