"""Global planning and local control.

Planning metric (fixed contract): the grid is 8-connected; moving into a
cell with finite penalty c over a step of length s meters costs
round(s * (1 + c) * 2^20) / 2^20. Quantizing every edge weight to a dyadic
rational makes path costs exact float sums, so an independent planner using
the same metric produces bit-equal costs.

The local controller is pure pursuit fed by the front scan only; the two
side cameras never influence obstacle stops.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import LaserScan
from .geometry import Pose, wrap_angle
from .mapgrid import Costmap

WEIGHT_QUANTUM = float(2 ** 20)


def quantize_weight(w: float) -> float:
    return round(w * WEIGHT_QUANTUM) / WEIGHT_QUANTUM


@dataclass(frozen=True)
class Path:
    waypoints: list[tuple[float, float]]
    total_cost: float


@dataclass(frozen=True)
class NavGoal:
    x: float
    y: float
    theta: float | None = None
    pos_tol: float = 0.15
    heading_tol: float = 0.3

    def __post_init__(self):
        if self.pos_tol <= 0 or self.heading_tol <= 0:
            raise ValueError("tolerances must be > 0")


class PlanningError(Exception):
    def __init__(self, reason: str, explored: int = 0):
        super().__init__(reason)
        self.reason = reason
        self.explored = explored


_NEIGHBORS = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)
              if (dx, dy) != (0, 0)]


def nearest_free_cell(costmap: Costmap, x: float, y: float) -> tuple[int, int]:
    """Closest non-lethal cell index to a world point (BFS ring search)."""
    g = costmap.base
    ix, iy = g.cell_index(x, y)
    ix = min(max(ix, 0), g.width - 1)
    iy = min(max(iy, 0), g.height - 1)
    lethal = costmap.lethal
    if not lethal[iy, ix]:
        return ix, iy
    free = np.argwhere(~lethal)
    if len(free) == 0:
        raise PlanningError("no free space in costmap")
    d2 = (free[:, 1] - ix) ** 2 + (free[:, 0] - iy) ** 2
    j = int(np.argmin(d2))
    return int(free[j, 1]), int(free[j, 0])


def plan_global(costmap: Costmap, start: tuple[float, float],
                goal: tuple[float, float]) -> Path:
    """A* over the costmap; returns cell-center waypoints.

    Raises PlanningError (with explored-cell count) when the goal is lethal
    or unreachable.
    """
    g = costmap.base
    res = g.resolution
    cost = costmap.cost
    lethal = costmap.lethal

    s = g.cell_index(*start)
    t = g.cell_index(*goal)
    if not g.in_bounds(*s) or lethal[s[1], s[0]]:
        raise PlanningError("start in lethal cell")
    if not g.in_bounds(*t) or lethal[t[1], t[0]]:
        raise PlanningError("goal in lethal cell")
    if s == t:
        return Path([g.cell_center(*s)], 0.0)

    diag = res * math.sqrt(2.0)
    # admissibility margin over the quantized metric
    h_scale = 1.0 - 1e-4

    def heuristic(ix: int, iy: int) -> float:
        return math.hypot((ix - t[0]) * res, (iy - t[1]) * res) * h_scale

    g_score: dict[tuple[int, int], float] = {s: 0.0}
    came: dict[tuple[int, int], tuple[int, int]] = {}
    counter = 0
    open_heap = [(heuristic(*s), 0, s)]
    closed = set()

    while open_heap:
        f, _, node = heapq.heappop(open_heap)
        if node in closed:
            continue
        if node == t:
            break
        closed.add(node)
        x0, y0 = node
        base_g = g_score[node]
        for dx, dy in _NEIGHBORS:
            nx, ny = x0 + dx, y0 + dy
            if not (0 <= nx < g.width and 0 <= ny < g.height):
                continue
            if lethal[ny, nx]:
                continue
            step = diag if dx != 0 and dy != 0 else res
            w = quantize_weight(step * (1.0 + cost[ny, nx]))
            ng = base_g + w
            key = (nx, ny)
            if ng < g_score.get(key, math.inf):
                g_score[key] = ng
                came[key] = node
                counter += 1
                heapq.heappush(open_heap, (ng + heuristic(nx, ny), counter, key))
    else:
        raise PlanningError("no path", explored=len(closed))

    cells = [t]
    while cells[-1] != s:
        cells.append(came[cells[-1]])
    cells.reverse()
    return Path([g.cell_center(ix, iy) for ix, iy in cells], g_score[t])


# ------------------------------------------------------------ local control

@dataclass
class NavParams:
    lookahead: float = 0.6
    stop_distance: float = 0.4
    slow_zone: float = 1.2
    corridor_halfwidth: float = 0.28
    goal_slow_radius: float = 0.6
    min_speed: float = 0.1
    align_tol: float = 0.35
    rotate_gain: float = 1.5
    max_speed: float = 1.0
    max_omega: float = 1.2
    blocked_threshold: float = 3.0
    recovery_cycles: int = 3
    replan_corridor: float = 0.5


def front_clearance(scan: LaserScan | None, params: NavParams) -> float:
    """Axial distance to the nearest return inside the safety corridor."""
    if scan is None:
        return math.inf
    r = scan.ranges
    valid = ~np.isnan(r)
    if not valid.any():
        return math.inf
    r = r[valid]
    b = scan.bearings[valid]
    lateral = np.abs(r * np.sin(b))
    ahead = r * np.cos(b)
    mask = (lateral <= params.corridor_halfwidth) & (ahead > 0)
    if not mask.any():
        return math.inf
    return float(ahead[mask].min())


def compute_velocity(est_pose: Pose, path: Path | None,
                     front_scan: LaserScan | None,
                     params: NavParams) -> tuple[float, float]:
    """Pure pursuit toward the lookahead waypoint, halted by the front scan."""
    if path is None or not path.waypoints:
        return 0.0, 0.0
    wps = path.waypoints
    px, py = est_pose.x, est_pose.y

    # lookahead target: first waypoint beyond the lookahead radius, taken
    # from the nearest waypoint forward
    d = [(wx - px) ** 2 + (wy - py) ** 2 for wx, wy in wps]
    ni = int(np.argmin(d))
    target = wps[-1]
    for j in range(ni, len(wps)):
        if math.sqrt(d[j]) >= params.lookahead:
            target = wps[j]
            break

    lx, ly = target
    dist = math.hypot(lx - px, ly - py)
    gx, gy = wps[-1]
    goal_dist = math.hypot(gx - px, gy - py)
    if dist < 1e-9 and goal_dist < 1e-9:
        return 0.0, 0.0
    alpha = wrap_angle(math.atan2(ly - py, lx - px) - est_pose.theta)

    # rotating in place is always footprint-safe, so alignment wins over
    # the obstacle stop; a forward obstacle only vetoes translation
    if abs(alpha) >= math.pi / 2.0:
        om = params.rotate_gain * alpha
        return 0.0, float(np.clip(om, -params.max_omega, params.max_omega))
    clear = front_clearance(front_scan, params)
    if clear <= params.stop_distance:
        if abs(alpha) > params.align_tol:
            om = params.rotate_gain * alpha
            return 0.0, float(np.clip(om, -params.max_omega, params.max_omega))
        return 0.0, 0.0
    if clear < params.slow_zone and abs(alpha) > params.align_tol:
        # misaligned near an obstacle: turn first, creep nothing
        om = params.rotate_gain * alpha
        return 0.0, float(np.clip(om, -params.max_omega, params.max_omega))

    v = params.max_speed
    if clear < params.slow_zone:
        v *= (clear - params.stop_distance) / (params.slow_zone - params.stop_distance)
    v *= max(0.0, math.cos(alpha))
    if goal_dist < params.goal_slow_radius:
        v *= goal_dist / params.goal_slow_radius
    v = max(v, params.min_speed)
    v = min(v, params.max_speed)
    lookahead = max(dist, 1e-6)
    om = 2.0 * v * math.sin(alpha) / lookahead
    return v, float(np.clip(om, -params.max_omega, params.max_omega))


def goal_reached(est_pose: Pose, goal: NavGoal) -> bool:
    if math.hypot(est_pose.x - goal.x, est_pose.y - goal.y) > goal.pos_tol:
        return False
    if goal.theta is None:
        return True
    return abs(wrap_angle(est_pose.theta - goal.theta)) <= goal.heading_tol


def recover(blocked_duration: float, params: NavParams) -> tuple[float, float] | None:
    """Rotation command once the controller has been blocked long enough."""
    if blocked_duration <= params.blocked_threshold:
        return None
    return 0.0, params.max_omega / 2.0


# ----------------------------------------------------------------- session

class NavSession:
    """One navigation goal from planning to arrival, with blocked-recovery.

    step() statuses: "active", "reached", "stuck".
    """

    def __init__(self, costmap: Costmap, goal: NavGoal, est_pose: Pose,
                 params: NavParams | None = None):
        self.costmap = costmap
        self.goal = goal
        self.params = params or NavParams()
        self.path: Path | None = None
        self.blocked_time = 0.0
        self.recovering = 0.0          # rotation time remaining, 0 = not recovering
        self.cycles = 0
        self.stuck = False
        self.replans = 0
        self._plan(est_pose)

    def _plan(self, est_pose: Pose) -> None:
        start_cell = nearest_free_cell(self.costmap, est_pose.x, est_pose.y)
        start = self.costmap.base.cell_center(*start_cell)
        self.path = plan_global(self.costmap, start, (self.goal.x, self.goal.y))
        self.replans += 1

    def _rotation_time(self) -> float:
        return 2.0 * math.pi / (self.params.max_omega / 2.0)

    def step(self, est_pose: Pose, front_scan: LaserScan | None,
             dt: float) -> tuple[tuple[float, float], str]:
        if self.stuck:
            return (0.0, 0.0), "stuck"
        if goal_reached(est_pose, self.goal):
            return (0.0, 0.0), "reached"

        if self.recovering > 0.0:
            self.recovering -= dt
            if self.recovering <= 0.0:
                self.recovering = 0.0
                self.blocked_time = 0.0
                try:
                    self._plan(est_pose)
                except PlanningError:
                    self.stuck = True
                    return (0.0, 0.0), "stuck"
            else:
                return (0.0, self.params.max_omega / 2.0), "active"

        cmd = compute_velocity(est_pose, self.path, front_scan, self.params)
        if cmd == (0.0, 0.0):
            self.blocked_time += dt
        else:
            self.blocked_time = 0.0
        rec = recover(self.blocked_time, self.params)
        if rec is not None:
            self.cycles += 1
            if self.cycles > self.params.recovery_cycles:
                self.stuck = True
                return (0.0, 0.0), "stuck"
            self.recovering = self._rotation_time()
            return (0.0, self.params.max_omega / 2.0), "active"
        return cmd, "active"
