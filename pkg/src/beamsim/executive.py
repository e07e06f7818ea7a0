"""Task executive: battery policy, marker-servoed docking, target search,
delivery, and FIFO scheduling.

The executive is a single-threaded state machine ticked once per simulation
step. External inputs (confirmations, text commands) arrive through an
ordered inbox drained at tick start, so a fixed seed gives a fixed run. All
observable behavior lands in the event log: one record per line,
``clock<TAB>kind<TAB>payload`` with a JSON payload in sorted-key form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .estimation import LaserScan
from .geometry import Pose, wrap_angle
from .mapgrid import FREE, Costmap, GridMap
from .navigation import (NavGoal, NavParams, NavSession, PlanningError,
                         plan_global, nearest_free_cell)
from .notify import Notification, Notifier
from .simworld import ChargingStation, MarkerObservation

UTTER_FOUND = "I found the object"
UTTER_LOAD = "please load the object"
UTTER_UNLOAD = "please unload the object"

_ORIGIN = Pose(0.0, 0.0, 0.0)


class ScheduleError(ValueError):
    """Task request rejected; str(err) is the machine-readable reason."""


@dataclass
class BatteryPolicy:
    low_threshold: float = 0.20
    resume_threshold: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.low_threshold < self.resume_threshold <= 1.0:
            raise ValueError("need 0 < low < resume <= 1")


def battery_guard(policy: BatteryPolicy, fraction: float,
                  docked: bool) -> str:
    """Charging directive: "none", "charge" (preempt and dock), "resume"."""
    if docked:
        return "resume" if fraction >= policy.resume_threshold else "none"
    if fraction < policy.low_threshold:
        return "charge"
    return "none"


# -------------------------------------------------------------------- tasks

@dataclass(frozen=True)
class TargetSearch:
    target_marker_id: int
    candidate_locations: tuple[tuple[float, float], ...]

    name = "target_search"

    def params(self) -> dict:
        return {"marker": self.target_marker_id,
                "locations": [list(p) for p in self.candidate_locations]}


@dataclass(frozen=True)
class Delivery:
    pickup: tuple[float, float]
    dropoff: tuple[float, float]

    name = "delivery"

    def params(self) -> dict:
        return {"pickup": list(self.pickup), "dropoff": list(self.dropoff)}


@dataclass
class Task:
    id: int
    kind: TargetSearch | Delivery
    created_at: float
    status: str = "Queued"    # Queued | Active | Paused | Succeeded | Failed
    finished_at: float | None = None
    result: object = None
    reason: str | None = None
    reply_to: str | None = None

    @property
    def terminal(self) -> bool:
        return self.status in ("Succeeded", "Failed")

    def to_dict(self) -> dict:
        return {"id": self.id, "kind": self.kind.name,
                "params": self.kind.params(), "status": self.status,
                "created_at": round(self.created_at, 2),
                "finished_at": (None if self.finished_at is None
                                else round(self.finished_at, 2)),
                "result": self.result, "reason": self.reason}


class EventRecord(NamedTuple):
    clock: float
    kind: str       # Utterance | MarkerFound | TaskTransition | ChargeStart
                    # | ChargeEnd | Stuck | PersonDetected
    payload: dict


def format_event(ev: EventRecord) -> str:
    body = json.dumps(ev.payload, sort_keys=True, separators=(",", ":"))
    return f"{ev.clock:.2f}\t{ev.kind}\t{body}"


# ----------------------------------------------------------------- stations

def select_station(est_pose: Pose, stations: list[ChargingStation],
                   costmap: Costmap) -> ChargingStation | None:
    """Station whose approach pose has the cheapest planned path; ties go to
    the lower id. None when no station is reachable."""
    start_cell = nearest_free_cell(costmap, est_pose.x, est_pose.y)
    start = costmap.base.cell_center(*start_cell)
    best = None
    best_cost = math.inf
    for st in sorted(stations, key=lambda s: s.id):
        try:
            path = plan_global(costmap, start,
                               (st.approach_pose.x, st.approach_pose.y))
        except PlanningError:
            continue
        if path.total_cost < best_cost:
            best, best_cost = st, path.total_cost
    return best


# ------------------------------------------------------------------ docking

@dataclass
class DockingParams:
    k_v: float = 0.5
    k_omega: float = 1.5
    v_cap: float = 0.15
    scan_omega: float = 0.6          # phase-1 rotation rate
    terminal_pos: float = 0.05
    terminal_heading: float = math.radians(5.0)
    lost_timeout: float = 2.0
    standoff: float = 1.2            # pre-dock point on the run-in lane


class DockingController:
    """Two-phase dock approach from within the 2 m scan circle.

    Phase 1 rotates in place until the station marker is sighted (at most one
    full revolution). Phase 2 servos on the marker-derived pose: the bearing
    to the dock drives omega, the remaining range drives v, and odometry
    dead-reckons between marker sightings. Losing the marker for more than
    `lost_timeout` falls back to phase 1 once; after that it is a failure.

    step() keeps `status` in {"active", "docked", "failed"}.
    """

    def __init__(self, station: ChargingStation, marker_pose: Pose,
                 params: DockingParams | None = None, max_omega: float = 1.2):
        self.station = station
        self.marker_pose = marker_pose
        self.params = params or DockingParams()
        self.max_omega = max_omega
        self.status = "active"
        self.reason: str | None = None
        self._phase = "scan"
        self._rotated = 0.0
        self._anchor: tuple[Pose, Pose] | None = None   # (world fix, odom)
        self._last_seen: float | None = None
        self._reverted = False
        self._committed = False      # run-in lane entered head-on
        self._pos_gate = self.params.terminal_pos
        self._heading_gate = self.params.terminal_heading

    def resume_tightened(self) -> None:
        """Dock latch refused the pose; keep servoing with tighter gates."""
        self.status = "active"
        self._pos_gate *= 0.6
        self._heading_gate *= 0.6

    def _fail(self, reason: str) -> tuple[float, float]:
        self.status = "failed"
        self.reason = reason
        return 0.0, 0.0

    def _believed(self, odom_pose: Pose) -> Pose:
        fix, odom0 = self._anchor
        return fix.compose(odom0.relative_pose(odom_pose))

    def step(self, clock: float, dt: float, odom_pose: Pose,
             markers: list[MarkerObservation] | None) -> tuple[float, float]:
        if self.status != "active":
            return 0.0, 0.0
        p = self.params

        if markers is not None:
            for obs in markers:
                if obs.id == self.station.marker_id:
                    # marker_world = robot o rel, so robot = marker o rel^-1
                    fix = self.marker_pose.compose(
                        obs.relative_pose.relative_pose(_ORIGIN))
                    self._anchor = (fix, odom_pose)
                    self._last_seen = clock
                    if self._phase == "scan":
                        self._phase = "servo"
                    break

        if self._phase == "scan":
            if self._rotated >= 2.0 * math.pi + 0.2:
                return self._fail("marker not found")
            self._rotated += p.scan_omega * dt
            return 0.0, p.scan_omega

        believed = self._believed(odom_pose)
        target = believed.relative_pose(self.station.dock_pose)
        dist = math.hypot(target.x, target.y)
        if dist <= self._pos_gate:
            # terminal alignment sweeps the marker out of view; dead-reckon
            # through it rather than treating the dropout as lost
            dth = target.theta
            if abs(dth) <= self._heading_gate:
                self.status = "docked"
                return 0.0, 0.0
            self._last_seen = clock
            om = float(np.clip(p.k_omega * dth, -self.max_omega,
                               self.max_omega))
            return 0.0, om

        # the final run-in must come at the dock head-on along the lane the
        # docked robot faces, or the marker sweeps out of the camera's view;
        # from anywhere else head for a standoff point on that lane first,
        # committing to the run-in only once properly lined up
        rel = self.station.dock_pose.relative_pose(believed)
        if rel.x <= -0.35 and abs(rel.y) <= 0.25 - 0.45 * rel.x:
            self._committed = True
        goal = (self.station.dock_pose if self._committed
                else self.station.dock_pose.compose(
                    Pose(-p.standoff, 0.0, 0.0)))
        t = believed.relative_pose(goal)
        d = math.hypot(t.x, t.y)
        bearing = math.atan2(t.y, t.x)
        om = float(np.clip(p.k_omega * bearing, -self.max_omega,
                           self.max_omega))
        if not self._committed or abs(bearing) > math.pi / 2.0:
            # transit legs and in-place turns dead-reckon on odometry;
            # only the run-in itself demands a fresh marker fix
            self._last_seen = clock
        if clock - self._last_seen > p.lost_timeout:
            if self._reverted:
                return self._fail("marker lost")
            self._reverted = True
            self._phase = "scan"
            self._rotated = 0.0
            self._committed = False
            return 0.0, p.scan_omega
        if abs(bearing) > math.pi / 2.0:
            return 0.0, om
        v = min(p.k_v * d, p.v_cap) * max(math.cos(bearing), 0.0)
        return v, om


# ---------------------------------------------------------------- executive

class ExecInputs(NamedTuple):
    """Per-tick sensor and state feed for the executive."""
    clock: float
    dt: float
    est_pose: Pose
    odom_pose: Pose
    battery_fraction: float
    docked: bool
    front_scan: LaserScan | None
    markers: list[MarkerObservation] | None   # None off the sensor cadence


class _SearchRun:
    def __init__(self, task: Task, order: list[int]):
        self.task = task
        self.order = order
        self.idx = 0
        self.nav: NavSession | None = None
        self.scan_until: float | None = None


class _DeliveryRun:
    def __init__(self, task: Task):
        self.task = task
        self.stage = "to_pickup"   # to_pickup | await_load | to_dropoff
        #                          # | await_unload
        self.nav: NavSession | None = None
        self.deadline: float | None = None


@dataclass
class ExecutiveConfig:
    policy: BatteryPolicy = field(default_factory=BatteryPolicy)
    nav: NavParams = field(default_factory=NavParams)
    dock: DockingParams = field(default_factory=DockingParams)
    scan_duration: float = 30.0       # seconds of rotate-scan per location
    confirm_timeout: float = 600.0
    goal_pos_tol: float = 0.3
    dock_retries: int = 2
    charge_retry_delay: float = 30.0


class Executive:
    """Owns the task queue and decides one velocity command per tick."""

    def __init__(self, grid: GridMap, costmap: Costmap,
                 stations: list[ChargingStation],
                 marker_poses: dict[int, Pose],
                 config: ExecutiveConfig | None = None,
                 notifier: Notifier | None = None,
                 rng: np.random.Generator | None = None,
                 default_candidates: list[tuple[float, float]] | None = None,
                 try_dock: Callable[[ChargingStation], bool] | None = None,
                 undock: Callable[[], None] | None = None):
        self.grid = grid
        self.costmap = costmap
        self.stations = list(stations)
        self.marker_poses = dict(marker_poses)
        self.config = config or ExecutiveConfig()
        self.notifier = notifier or Notifier()
        self.notifier.on_drop = self._notify_dropped
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.default_candidates = [tuple(p) for p in
                                   (default_candidates or [])]
        self.try_dock = try_dock or (lambda station: True)
        self.undock = undock or (lambda: None)

        self.tasks: dict[int, Task] = {}
        self.queue: list[int] = []
        self._next_id = 1
        self._events: list[EventRecord] = []
        self._clock = 0.0
        self._mode = "idle"         # idle | task | go_charge | docking
        #                           # | charging
        self._active_run: _SearchRun | _DeliveryRun | None = None
        self._paused_run: _SearchRun | _DeliveryRun | None = None
        self._confirms: list[str] = []
        self._charge_nav: NavSession | None = None
        self._charge_station: ChargingStation | None = None
        self._dock: DockingController | None = None
        self._dock_retries = 0
        self._excluded_stations: set[int] = set()
        self._charge_hold_until = -math.inf
        self._last_pose = Pose(0.0, 0.0, 0.0)

    # ------------------------------------------------------------- plumbing

    def _emit(self, kind: str, payload: dict) -> None:
        self._events.append(EventRecord(self._clock, kind, payload))

    def drain_events(self) -> list[EventRecord]:
        out = self._events
        self._events = []
        return out

    def _notify_dropped(self, reason: str) -> None:
        self._emit("Stuck", {"error": reason})

    @property
    def active_task(self) -> Task | None:
        return self._active_run.task if self._active_run else None

    @property
    def exec_state(self) -> str:
        if self._mode == "charging":
            return "charging"
        if self._mode == "docking":
            return "docking"
        if self._mode == "go_charge":
            return "navigating"
        run = self._active_run
        if run is None:
            return "idle"
        if isinstance(run, _SearchRun):
            return "scanning" if run.scan_until is not None else "navigating"
        if run.stage in ("await_load", "await_unload"):
            return "awaiting_confirmation"
        return "navigating"

    # ----------------------------------------------------------- scheduling

    def _check_point(self, label: str, value) -> tuple[float, float]:
        try:
            x, y = float(value[0]), float(value[1])
        except (TypeError, ValueError, IndexError):
            raise ScheduleError(f"{label} must be an [x, y] pair")
        if not self.grid.in_bounds(x, y):
            raise ScheduleError(f"{label} is off the map")
        ix, iy = self.grid.cell_index(x, y)
        if self.grid.cells[iy, ix] != FREE:
            raise ScheduleError(f"{label} is not in free space")
        return x, y

    def schedule(self, request: dict) -> Task:
        kind = request.get("kind")
        params = request.get("params") or {}
        if kind == "target_search":
            if "marker" not in params:
                raise ScheduleError("target_search needs params.marker")
            try:
                marker = int(params["marker"])
            except (TypeError, ValueError):
                raise ScheduleError("params.marker must be an integer")
            raw = params.get("locations")
            if raw is None:
                raw = self.default_candidates
            if not raw:
                raise ScheduleError("target_search needs candidate locations")
            locs = tuple(self._check_point(f"params.locations[{i}]", p)
                         for i, p in enumerate(raw))
            task_kind = TargetSearch(marker, locs)
        elif kind == "delivery":
            pickup = self._check_point(
                "params.pickup", params.get("pickup"))
            dropoff = self._check_point(
                "params.dropoff", params.get("dropoff"))
            task_kind = Delivery(pickup, dropoff)
        else:
            raise ScheduleError(f"unknown task kind {kind!r}")

        task = Task(self._next_id, task_kind, self._clock,
                    reply_to=request.get("reply_to"))
        self._next_id += 1
        self.tasks[task.id] = task
        self.queue.append(task.id)
        self._emit("TaskTransition",
                   {"task": task.id, "to": "Queued", "kind": task_kind.name})
        return task

    def cancel(self, task_id: int) -> str:
        """Cancel a Queued task: "cancelled" | "not-found" | "conflict"."""
        task = self.tasks.get(task_id)
        if task is None:
            return "not-found"
        if task.status != "Queued":
            return "conflict"
        self.queue.remove(task_id)
        task.status = "Failed"
        task.reason = "cancelled"
        task.finished_at = self._clock
        self._emit("TaskTransition",
                   {"reason": "cancelled", "task": task_id, "to": "Failed"})
        return "cancelled"

    # ------------------------------------------------------------ main tick

    def tick(self, inputs: ExecInputs,
             inbox: list[tuple] = ()) -> tuple[float, float]:
        self._clock = inputs.clock
        self._last_pose = inputs.est_pose
        for item in inbox:
            self._handle_command(item)

        self._battery_check(inputs)
        if self._mode == "charging":
            cmd = self._run_charging(inputs)
        elif self._mode == "docking":
            cmd = self._run_docking(inputs)
        elif self._mode == "go_charge":
            cmd = self._run_go_charge(inputs)
        else:
            cmd = self._run_tasks(inputs)

        self._confirms.clear()
        active = sum(1 for t in self.tasks.values() if t.status == "Active")
        if active > 1:
            raise AssertionError("more than one Active task")
        return cmd

    def _handle_command(self, item: tuple) -> None:
        verb = item[0]
        if verb == "confirm":
            self._confirms.append(item[1])
        elif verb == "say":
            text = str(item[1])
            self._emit("Utterance", {"heard": text})
            if text in ("loaded", "unloaded"):
                self._confirms.append(text)
            elif text == "charge":
                self._charge_hold_until = -math.inf
                self._begin_charge_mission()
        elif verb == "person":
            self._emit("PersonDetected", item[1])

    # -------------------------------------------------------------- battery

    def _battery_check(self, inputs: ExecInputs) -> None:
        if self._mode in ("go_charge", "docking", "charging"):
            return
        directive = battery_guard(self.config.policy,
                                  inputs.battery_fraction, inputs.docked)
        if directive == "charge" and self._clock >= self._charge_hold_until:
            self._begin_charge_mission()

    def _pause_active(self) -> None:
        run = self._active_run
        if run is None:
            return
        run.task.status = "Paused"
        run.nav = None
        if isinstance(run, _SearchRun):
            run.scan_until = None
        self._emit("TaskTransition", {"task": run.task.id, "to": "Paused"})
        self._paused_run = run
        self._active_run = None

    def _begin_charge_mission(self) -> None:
        self._pause_active()
        station = select_station(
            self._last_pose, [s for s in self.stations
                              if s.id not in self._excluded_stations],
            self.costmap)
        if station is None:
            self._emit("Stuck", {"error": "no reachable station"})
            self._excluded_stations.clear()
            self._charge_hold_until = (self._clock +
                                       self.config.charge_retry_delay)
            self._mode = "idle"
            return
        self._charge_station = station
        self._dock_retries = 0
        self._mode = "go_charge"
        self._charge_nav = None

    def _run_go_charge(self, inputs: ExecInputs) -> tuple[float, float]:
        st = self._charge_station
        if self._charge_nav is None:
            goal = NavGoal(st.approach_pose.x, st.approach_pose.y,
                           theta=st.approach_pose.theta,
                           pos_tol=self.config.goal_pos_tol)
            try:
                self._charge_nav = NavSession(self.costmap, goal,
                                              inputs.est_pose,
                                              self.config.nav)
            except PlanningError:
                return self._charge_station_failed()
        cmd, status = self._charge_nav.step(inputs.est_pose,
                                            inputs.front_scan, inputs.dt)
        if status == "reached":
            self._mode = "docking"
            self._dock = DockingController(
                st, self.marker_poses[st.marker_id], self.config.dock,
                self.config.nav.max_omega)
            self._charge_nav = None
            return 0.0, 0.0
        if status == "stuck":
            return self._charge_station_failed()
        return cmd

    def _charge_station_failed(self) -> tuple[float, float]:
        st = self._charge_station
        self._emit("Stuck", {"error": "charge approach failed",
                             "station": st.id})
        self._excluded_stations.add(st.id)
        self._charge_nav = None
        self._begin_charge_mission()
        return 0.0, 0.0

    def _run_docking(self, inputs: ExecInputs) -> tuple[float, float]:
        dock = self._dock
        cmd = dock.step(inputs.clock, inputs.dt, inputs.odom_pose,
                        inputs.markers)
        if dock.status == "docked":
            if self.try_dock(dock.station):
                self._emit("ChargeStart",
                           {"battery": round(inputs.battery_fraction, 4),
                            "station": dock.station.id})
                self._excluded_stations.clear()
                self._mode = "charging"
                self._dock = None
            else:
                dock.resume_tightened()
            return 0.0, 0.0
        if dock.status == "failed":
            self._emit("Stuck", {"error": f"docking failed: {dock.reason}",
                                 "station": dock.station.id})
            self._dock = None
            self._dock_retries += 1
            if self._dock_retries <= self.config.dock_retries:
                self._mode = "go_charge"
                self._charge_nav = None
            else:
                self._excluded_stations.add(self._charge_station.id)
                self._begin_charge_mission()
            return 0.0, 0.0
        return cmd

    def _run_charging(self, inputs: ExecInputs) -> tuple[float, float]:
        directive = battery_guard(self.config.policy,
                                  inputs.battery_fraction, inputs.docked)
        if directive == "resume":
            self._emit("ChargeEnd",
                       {"battery": round(inputs.battery_fraction, 4),
                        "station": self._charge_station.id})
            self.undock()
            self._charge_station = None
            self._mode = "idle"
            return self._run_tasks(inputs)
        return 0.0, 0.0

    # ----------------------------------------------------------------- task

    def _run_tasks(self, inputs: ExecInputs) -> tuple[float, float]:
        if self._active_run is None:
            if self._paused_run is not None:
                run = self._paused_run
                self._paused_run = None
                run.task.status = "Active"
                self._emit("TaskTransition",
                           {"task": run.task.id, "to": "Active"})
                self._active_run = run
                self._mode = "task"
            elif self.queue:
                self._activate(self.tasks[self.queue.pop(0)])
        if self._active_run is None:
            self._mode = "idle"
            return 0.0, 0.0
        if isinstance(self._active_run, _SearchRun):
            return self._step_search(inputs)
        return self._step_delivery(inputs)

    def _activate(self, task: Task) -> None:
        task.status = "Active"
        self._mode = "task"
        if isinstance(task.kind, TargetSearch):
            order = [int(i) for i in self.rng.permutation(
                len(task.kind.candidate_locations))]
            self._active_run = _SearchRun(task, order)
            self._emit("TaskTransition",
                       {"plan": order, "task": task.id, "to": "Active"})
        else:
            self._active_run = _DeliveryRun(task)
            self._emit("TaskTransition", {"task": task.id, "to": "Active"})

    def _finish(self, status: str, result=None,
                reason: str | None = None) -> None:
        run = self._active_run
        task = run.task
        task.status = status
        task.result = result
        task.reason = reason
        task.finished_at = self._clock
        payload = {"task": task.id, "to": status}
        if reason is not None:
            payload["reason"] = reason
        if result is not None:
            payload["result"] = result
        self._emit("TaskTransition", payload)
        if task.reply_to:
            body = f"{task.kind.name} task {task.id}: {status}"
            if reason:
                body += f" ({reason})"
            if result is not None:
                body += f" result={json.dumps(result, sort_keys=True)}"
            self.notifier.notify(Notification(
                task.reply_to, f"task {task.id} {status}", body, task.id))
        self._active_run = None
        self._mode = "idle"

    def _make_nav(self, inputs: ExecInputs,
                  point: tuple[float, float]) -> NavSession:
        goal = NavGoal(point[0], point[1], pos_tol=self.config.goal_pos_tol)
        return NavSession(self.costmap, goal, inputs.est_pose,
                          self.config.nav)

    # search

    def _step_search(self, inputs: ExecInputs) -> tuple[float, float]:
        run = self._active_run
        kind = run.task.kind
        scan_spin = (0.0, self.config.nav.max_omega / 2.0)

        if run.scan_until is not None:
            if inputs.markers is not None:
                for obs in inputs.markers:
                    if obs.id == kind.target_marker_id:
                        loc = inputs.est_pose.compose(obs.relative_pose)
                        found = [round(loc.x, 3), round(loc.y, 3)]
                        self._emit("Utterance", {"text": UTTER_FOUND})
                        self._emit("MarkerFound",
                                   {"location": found, "marker": obs.id})
                        self._finish("Succeeded", result=found)
                        return 0.0, 0.0
            if inputs.clock >= run.scan_until:
                run.scan_until = None
                run.idx += 1
                run.nav = None
            else:
                return scan_spin

        if run.idx >= len(run.order):
            self._finish("Failed", reason="not found")
            return 0.0, 0.0

        target = kind.candidate_locations[run.order[run.idx]]
        if run.nav is None:
            try:
                run.nav = self._make_nav(inputs, target)
            except PlanningError:
                self._skip_location(target)
                return 0.0, 0.0
        cmd, status = run.nav.step(inputs.est_pose, inputs.front_scan,
                                   inputs.dt)
        if status == "reached":
            run.scan_until = inputs.clock + self.config.scan_duration
            return scan_spin
        if status == "stuck":
            self._skip_location(target)
            return 0.0, 0.0
        return cmd

    def _skip_location(self, target: tuple[float, float]) -> None:
        run = self._active_run
        self._emit("Stuck", {"location": [round(target[0], 3),
                                          round(target[1], 3)],
                             "task": run.task.id})
        run.idx += 1
        run.nav = None

    # delivery

    def _step_delivery(self, inputs: ExecInputs) -> tuple[float, float]:
        run = self._active_run
        kind = run.task.kind

        if run.stage in ("to_pickup", "to_dropoff"):
            target = kind.pickup if run.stage == "to_pickup" else kind.dropoff
            if run.nav is None:
                try:
                    run.nav = self._make_nav(inputs, target)
                except PlanningError:
                    self._finish("Failed", reason="unreachable")
                    return 0.0, 0.0
            cmd, status = run.nav.step(inputs.est_pose, inputs.front_scan,
                                       inputs.dt)
            if status == "reached":
                run.nav = None
                if run.stage == "to_pickup":
                    self._emit("Utterance", {"text": UTTER_LOAD})
                    run.stage = "await_load"
                else:
                    self._emit("Utterance", {"text": UTTER_UNLOAD})
                    run.stage = "await_unload"
                run.deadline = inputs.clock + self.config.confirm_timeout
                return 0.0, 0.0
            if status == "stuck":
                self._finish("Failed", reason="unreachable")
                return 0.0, 0.0
            return cmd

        wanted = "loaded" if run.stage == "await_load" else "unloaded"
        if wanted in self._confirms:
            if run.stage == "await_load":
                run.stage = "to_dropoff"
            else:
                self._finish("Succeeded")
            return 0.0, 0.0
        if inputs.clock > run.deadline:
            self._finish("Failed", reason="no confirmation")
        return 0.0, 0.0
