"""Occupancy-grid world and global geometric path planning.

The global planner produces the rough axis-aligned path that the smoother
refines; it is a plain 4-connected A* with a fixed tie-break so identical
queries always return identical paths.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class OutOfBounds(Exception):
    """Query endpoint outside the map or inside an obstacle."""


class NoPath(Exception):
    """Start and goal are not connected on the grid."""


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float

    def distance_to(self, other: "Waypoint") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class GlobalPath:
    """Ordered waypoints in world meters."""

    points: tuple[Waypoint, ...]

    def __len__(self) -> int:
        return len(self.points)

    def length(self) -> float:
        return sum(a.distance_to(b) for a, b in zip(self.points, self.points[1:]))

    def as_array(self) -> np.ndarray:
        return np.array([(p.x, p.y) for p in self.points], dtype=float)


@dataclass(frozen=True)
class GridMap:
    """Boolean occupancy grid (True = obstacle).

    occupancy is indexed [row, col] with row 0 at the *bottom* of the map, so
    cell (col=i, row=j) sits at world (origin_x + i*resolution,
    origin_y + j*resolution). In the text file format the first data row is
    the top of the map; loading reverses the rows.
    """

    width: int
    height: int
    resolution: float
    occupancy: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.resolution <= 0.0:
            raise ValueError("resolution must be positive")
        if self.occupancy.shape != (self.height, self.width):
            raise ValueError("occupancy shape must be (height, width)")

    @classmethod
    def empty(cls, width: int, height: int, resolution: float,
              origin: tuple[float, float] = (0.0, 0.0)) -> "GridMap":
        return cls(width, height, resolution, np.zeros((height, width), dtype=bool), origin)

    @classmethod
    def from_text(cls, text: str, origin: tuple[float, float] = (0.0, 0.0)) -> "GridMap":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise ValueError("empty map text")
        header = lines[0].split()
        if len(header) != 3:
            raise ValueError("map header must be 'width height resolution'")
        width, height, resolution = int(header[0]), int(header[1]), float(header[2])
        rows = lines[1:]
        if len(rows) != height:
            raise ValueError(f"expected {height} map rows, got {len(rows)}")
        occ = np.zeros((height, width), dtype=bool)
        for file_row, line in enumerate(rows):
            if len(line) != width:
                raise ValueError(f"map row {file_row} has {len(line)} cells, expected {width}")
            for col, ch in enumerate(line):
                if ch == "#":
                    occ[height - 1 - file_row, col] = True
                elif ch != ".":
                    raise ValueError(f"unknown map cell {ch!r} at row {file_row}")
        return cls(width, height, resolution, occ, origin)

    @classmethod
    def load(cls, path: str | Path) -> "GridMap":
        return cls.from_text(Path(path).read_text())

    def to_text(self) -> str:
        lines = [f"{self.width} {self.height} {self.resolution:g}"]
        for row in range(self.height - 1, -1, -1):
            lines.append("".join("#" if c else "." for c in self.occupancy[row]))
        return "\n".join(lines) + "\n"

    def cell_of(self, p: Waypoint) -> tuple[int, int]:
        """Nearest cell (col, row) to a world point; raises OutOfBounds."""
        col = round((p.x - self.origin[0]) / self.resolution)
        row = round((p.y - self.origin[1]) / self.resolution)
        if not (0 <= col < self.width and 0 <= row < self.height):
            raise OutOfBounds(f"point ({p.x:.3f}, {p.y:.3f}) outside map bounds")
        return col, row

    def center_of(self, col: int, row: int) -> Waypoint:
        return Waypoint(self.origin[0] + col * self.resolution,
                        self.origin[1] + row * self.resolution)

    def is_free(self, col: int, row: int) -> bool:
        return not bool(self.occupancy[row, col])

    def block(self, x0: float, y0: float, x1: float, y1: float) -> None:
        """Mark the axis-aligned world rectangle [x0,x1]x[y0,y1] occupied."""
        c0 = max(0, math.ceil((x0 - self.origin[0]) / self.resolution - 1e-9))
        c1 = min(self.width - 1, math.floor((x1 - self.origin[0]) / self.resolution + 1e-9))
        r0 = max(0, math.ceil((y0 - self.origin[1]) / self.resolution - 1e-9))
        r1 = min(self.height - 1, math.floor((y1 - self.origin[1]) / self.resolution + 1e-9))
        self.occupancy[r0:r1 + 1, c0:c1 + 1] = True


_NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def plan_global_path(grid: GridMap, start: Waypoint, goal: Waypoint) -> GlobalPath:
    """Shortest 4-connected grid path from start to goal (cell centers).

    A* with Manhattan heuristic and unit step cost; ties broken on
    (f, h, row-major cell index) so the result is deterministic.
    """
    start_cell = grid.cell_of(start)
    goal_cell = grid.cell_of(goal)
    for name, (col, row) in (("start", start_cell), ("goal", goal_cell)):
        if not grid.is_free(col, row):
            raise OutOfBounds(f"{name} cell {(col, row)} is occupied")

    if start_cell == goal_cell:
        return GlobalPath((grid.center_of(*start_cell),))

    def h(cell):
        return abs(cell[0] - goal_cell[0]) + abs(cell[1] - goal_cell[1])

    def idx(cell):
        return cell[1] * grid.width + cell[0]

    g_score = {start_cell: 0}
    came_from: dict[tuple[int, int], tuple[int, int]] = {}
    open_heap = [(h(start_cell), h(start_cell), idx(start_cell), start_cell)]
    closed = set()

    while open_heap:
        _, _, _, current = heapq.heappop(open_heap)
        if current == goal_cell:
            cells = [current]
            while cells[-1] != start_cell:
                cells.append(came_from[cells[-1]])
            cells.reverse()
            return GlobalPath(tuple(grid.center_of(*c) for c in cells))
        if current in closed:
            continue
        closed.add(current)
        g = g_score[current]
        for dx, dy in _NEIGHBORS:
            nb = (current[0] + dx, current[1] + dy)
            if not (0 <= nb[0] < grid.width and 0 <= nb[1] < grid.height):
                continue
            if not grid.is_free(*nb) or nb in closed:
                continue
            tentative = g + 1
            if tentative < g_score.get(nb, math.inf):
                g_score[nb] = tentative
                came_from[nb] = current
                hn = h(nb)
                heapq.heappush(open_heap, (tentative + hn, hn, idx(nb), nb))

    raise NoPath(f"no grid path from {start_cell} to {goal_cell}")


def densify_path(path: GlobalPath, spacing: float) -> GlobalPath:
    """Subdivide each segment so consecutive points are at most `spacing` apart.

    Original vertices (corners and endpoints) are kept verbatim; total
    polyline length is unchanged up to rounding.
    """
    if spacing <= 0.0:
        raise ValueError("spacing must be positive")
    if len(path) == 0:
        raise ValueError("path must have at least one point")
    if len(path) == 1:
        return path

    points: list[Waypoint] = [path.points[0]]
    for a, b in zip(path.points, path.points[1:]):
        d = a.distance_to(b)
        n = max(1, math.ceil(d / spacing - 1e-12))
        for j in range(1, n):
            t = j / n
            points.append(Waypoint(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
        points.append(b)
    return GlobalPath(tuple(points))
