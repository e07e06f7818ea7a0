"""Occupancy-grid maps, their text format, and geometric queries.

Grid convention: cell (0, 0) sits at the map's lower-left, `origin` is the
world coordinate of that cell's outer corner. Cells are stored in a
(height, width) array indexed [iy, ix]. In the text format the first data
row is the *top* row (iy = height - 1) so files read like a floor plan.

Unknown cells are treated as obstacles for raycasting and planning.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import ndimage

FREE = 0
OCCUPIED = 1
UNKNOWN = 2

_CHAR_TO_STATE = {".": FREE, "#": OCCUPIED, "?": UNKNOWN}
_STATE_TO_CHAR = {FREE: ".", OCCUPIED: "#", UNKNOWN: "?"}


class MapFormatError(ValueError):
    """Raised on malformed map files; carries the offending 1-based line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class GridMap:
    width: int
    height: int
    resolution: float
    cells: np.ndarray  # (height, width) uint8, [iy, ix]
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.cells.shape != (self.height, self.width):
            raise ValueError("cells shape does not match width/height")
        self.cells.flags.writeable = False

    # -- coordinate transforms ------------------------------------------------

    def cell_index(self, x: float, y: float) -> tuple[int, int]:
        ox, oy = self.origin
        return (
            int(math.floor((x - ox) / self.resolution)),
            int(math.floor((y - oy) / self.resolution)),
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (ix + 0.5) * self.resolution, oy + (iy + 0.5) * self.resolution)

    def state_at(self, x: float, y: float) -> int | None:
        """Cell state at a world point, None outside the map."""
        ix, iy = self.cell_index(x, y)
        if not self.in_bounds(ix, iy):
            return None
        return int(self.cells[iy, ix])

    def is_free_point(self, x: float, y: float) -> bool:
        return self.state_at(x, y) == FREE

    @property
    def world_width(self) -> float:
        return self.width * self.resolution

    @property
    def world_height(self) -> float:
        return self.height * self.resolution

    @property
    def cell_diagonal(self) -> float:
        return self.resolution * math.sqrt(2.0)


@dataclass(frozen=True)
class Costmap:
    """Inflated planning costs. cost is np.inf on lethal cells, else a
    non-negative penalty that decays with distance from the nearest obstacle."""

    base: GridMap
    inflation_radius: float
    cost: np.ndarray  # (height, width) float64

    def __post_init__(self):
        self.cost.flags.writeable = False

    @property
    def lethal(self) -> np.ndarray:
        return np.isinf(self.cost)

    def is_lethal_cell(self, ix: int, iy: int) -> bool:
        return bool(np.isinf(self.cost[iy, ix]))

    def is_lethal_point(self, x: float, y: float) -> bool:
        ix, iy = self.base.cell_index(x, y)
        if not self.base.in_bounds(ix, iy):
            return True
        return self.is_lethal_cell(ix, iy)


@dataclass(frozen=True)
class LikelihoodField:
    """Distance in meters from each cell center to the nearest Occupied cell
    center, saturated at max_dist."""

    base: GridMap
    max_dist: float
    dist: np.ndarray  # (height, width) float64

    def __post_init__(self):
        self.dist.flags.writeable = False


# -- file format ---------------------------------------------------------------


def parse_map(text: str, origin: tuple[float, float] = (0.0, 0.0)) -> GridMap:
    """Parse the map text format.

    Line 1 (after optional '%' comment lines): "<width> <height> <resolution>".
    Then exactly `height` rows of `width` characters from {., #, ?}, top row
    first. Raises MapFormatError with a 1-based line number on any defect.
    """
    if not text:
        raise MapFormatError("empty map file", 1)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    header_idx = 0
    while header_idx < len(lines) and lines[header_idx].startswith("%"):
        header_idx += 1
    if header_idx >= len(lines):
        raise MapFormatError("missing header", header_idx + 1)

    header = lines[header_idx]
    parts = header.split(" ")
    if len(parts) != 3:
        raise MapFormatError(f"header must be '<width> <height> <resolution>', got {header!r}", header_idx + 1)
    try:
        width, height = int(parts[0]), int(parts[1])
        resolution = float(parts[2])
    except ValueError:
        raise MapFormatError(f"malformed header {header!r}", header_idx + 1) from None
    if width < 1 or height < 1 or resolution <= 0:
        raise MapFormatError("header values out of range", header_idx + 1)

    rows = lines[header_idx + 1 :]
    if len(rows) != height:
        bad_line = header_idx + 2 + min(len(rows), height)
        raise MapFormatError(f"expected {height} rows, found {len(rows)}", bad_line)
    cells = np.empty((height, width), dtype=np.uint8)
    for i, row in enumerate(rows):
        line_no = header_idx + 2 + i
        if len(row) != width:
            raise MapFormatError(f"ragged row: expected {width} chars, found {len(row)}", line_no)
        iy = height - 1 - i
        for ix, ch in enumerate(row):
            state = _CHAR_TO_STATE.get(ch)
            if state is None:
                raise MapFormatError(f"invalid character {ch!r} at column {ix + 1}", line_no)
            cells[iy, ix] = state
    return GridMap(width, height, resolution, cells, origin)


def serialize_map(grid: GridMap) -> str:
    out = [f"{grid.width} {grid.height} {grid.resolution!r}"]
    for iy in range(grid.height - 1, -1, -1):
        out.append("".join(_STATE_TO_CHAR[int(s)] for s in grid.cells[iy]))
    return "\n".join(out) + "\n"


# -- geometric queries -----------------------------------------------------------


def raycast(grid: GridMap, x: float, y: float, angle: float, max_range: float) -> float:
    """Distance along the ray to the first Occupied/Unknown cell boundary, or
    max_range if none within. Exact grid-line stepping (DDA); leaving the map
    means nothing further can be hit.
    """
    ix, iy = grid.cell_index(x, y)
    if not grid.in_bounds(ix, iy):
        raise ValueError("raycast start outside map")
    if grid.cells[iy, ix] != FREE:
        raise ValueError("raycast start not in a Free cell")

    res = grid.resolution
    ox, oy = grid.origin
    dx, dy = math.cos(angle), math.sin(angle)

    if dx > 0:
        step_x, tdelta_x = 1, res / dx
        tmax_x = (ox + (ix + 1) * res - x) / dx
    elif dx < 0:
        step_x, tdelta_x = -1, -res / dx
        tmax_x = (ox + ix * res - x) / dx
    else:
        step_x, tdelta_x, tmax_x = 0, math.inf, math.inf
    if dy > 0:
        step_y, tdelta_y = 1, res / dy
        tmax_y = (oy + (iy + 1) * res - y) / dy
    elif dy < 0:
        step_y, tdelta_y = -1, -res / dy
        tmax_y = (oy + iy * res - y) / dy
    else:
        step_y, tdelta_y, tmax_y = 0, math.inf, math.inf

    cells = grid.cells
    while True:
        if tmax_x < tmax_y:
            t = tmax_x
            ix += step_x
            tmax_x += tdelta_x
        else:
            t = tmax_y
            iy += step_y
            tmax_y += tdelta_y
        if t >= max_range:
            return max_range
        if not grid.in_bounds(ix, iy):
            return max_range
        if cells[iy, ix] != FREE:
            return t


def raycast_batch(grid: GridMap, x, y, angles, max_range: float) -> np.ndarray:
    """raycast() vectorized in lockstep; x, y broadcast against angles.

    Matches the scalar routine's stepping (ties break toward the y step).
    """
    x, y, angles = np.broadcast_arrays(
        np.asarray(x, dtype=np.float64),
        np.asarray(y, dtype=np.float64),
        np.asarray(angles, dtype=np.float64),
    )
    x, y, angles = x.ravel(), y.ravel(), angles.ravel()
    n = angles.shape[0]
    res = grid.resolution
    ox, oy = grid.origin

    ix0 = np.floor((x - ox) / res).astype(np.int64)
    iy0 = np.floor((y - oy) / res).astype(np.int64)
    inb = (ix0 >= 0) & (ix0 < grid.width) & (iy0 >= 0) & (iy0 < grid.height)
    if not inb.all():
        raise ValueError("raycast start outside map")
    if (grid.cells[iy0, ix0] != FREE).any():
        raise ValueError("raycast start not in a Free cell")

    dx, dy = np.cos(angles), np.sin(angles)
    step_x = np.sign(dx).astype(np.int64)
    step_y = np.sign(dy).astype(np.int64)
    with np.errstate(divide="ignore"):
        tdelta_x = np.where(dx != 0, res / np.abs(dx), np.inf)
        tdelta_y = np.where(dy != 0, res / np.abs(dy), np.inf)
        bound_x = ox + (ix0 + (dx > 0)) * res
        bound_y = oy + (iy0 + (dy > 0)) * res
        tmax_x = np.where(dx != 0, (bound_x - x) / dx, np.inf)
        tmax_y = np.where(dy != 0, (bound_y - y) / dy, np.inf)

    cur_ix = ix0.copy()
    cur_iy = iy0.copy()
    result = np.full(n, max_range, dtype=np.float64)
    active = np.ones(n, dtype=bool)
    cells = grid.cells

    max_iter = int(math.ceil(max_range / res)) * 2 + grid.width + grid.height + 4
    for _ in range(max_iter):
        if not active.any():
            break
        choose_x = active & (tmax_x < tmax_y)
        choose_y = active & ~choose_x
        t = np.where(choose_x, tmax_x, tmax_y)
        cur_ix[choose_x] += step_x[choose_x]
        cur_iy[choose_y] += step_y[choose_y]
        tmax_x[choose_x] += tdelta_x[choose_x]
        tmax_y[choose_y] += tdelta_y[choose_y]

        done = active & (t >= max_range)
        active &= ~done
        oob = active & ~(
            (cur_ix >= 0) & (cur_ix < grid.width) & (cur_iy >= 0) & (cur_iy < grid.height)
        )
        active &= ~oob
        if active.any():
            hit = np.zeros(n, dtype=bool)
            hit[active] = cells[cur_iy[active], cur_ix[active]] != FREE
            result[hit] = t[hit]
            active &= ~hit
    return result


def _source_distance_cells(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance (in cell units) from each cell center to the
    nearest True cell in mask; inf when mask is empty."""
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask)


def blocked_mask(grid: GridMap) -> np.ndarray:
    return grid.cells != FREE


def inflate(grid: GridMap, radius: float) -> Costmap:
    """Costmap whose lethal set is every cell within `radius` (cell-center
    Euclidean) of an Occupied/Unknown cell; remaining cells carry a penalty
    decaying linearly from 1 at the lethal boundary to 0 at 2*radius.
    """
    if radius < 0:
        raise ValueError("inflation radius must be >= 0")
    sources = blocked_mask(grid)
    dist_m = _source_distance_cells(sources) * grid.resolution
    cost = np.zeros(grid.cells.shape, dtype=np.float64)
    if radius > 0:
        decay = (2.0 * radius - dist_m) / radius
        cost = np.clip(decay, 0.0, 1.0)
    cost = np.where(dist_m <= radius, np.inf, cost)
    cost[sources] = np.inf
    return Costmap(grid, radius, cost)


def likelihood_field(grid: GridMap, max_dist: float) -> LikelihoodField:
    """Exact distance transform to the nearest Occupied cell, saturated."""
    if max_dist <= 0:
        raise ValueError("max_dist must be > 0")
    occupied = grid.cells == OCCUPIED
    dist_m = _source_distance_cells(occupied) * grid.resolution
    return LikelihoodField(grid, max_dist, np.minimum(dist_m, max_dist))


def clearance_field(grid: GridMap) -> np.ndarray:
    """Meters from each cell center to the nearest Occupied/Unknown cell
    center. Shared helper for collision checks."""
    return _source_distance_cells(blocked_mask(grid)) * grid.resolution
