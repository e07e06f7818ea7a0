"""Simulation loop: steps the world, sensors, estimator, and executive in a
fixed deterministic order.

Per tick: (1) on the sensor cadence, render depth scans and marker
observations from the current true pose and, when due, run the MCL
correction against those scans; (2) drain the command inbox (schedules,
confirmations, text) in arrival order; (3) let the executive pick a velocity
command; (4) integrate the world one step and feed the wheel/heading
readings to the odometry. Everything consumes seeded generators, so equal
seeds give byte-identical event logs.
"""

from __future__ import annotations

import math
from dataclasses import replace
from pathlib import Path

import numpy as np

from .estimation import Estimator, LaserScan, OdomState, depth_to_scan
from .executive import (ExecInputs, Executive, EventRecord, Task,
                        format_event)
from .geometry import wrap_angle
from .mapgrid import inflate, likelihood_field, serialize_map
from .navigation import front_clearance
from .notify import FileTransport, Notifier, SmtpTransport, poll_mailbox
from .scenario import Scenario
from .simworld import WorldState

# physical dock latch: the charger engages only this close to the dock pose
DOCK_POS_TOL = 0.05
DOCK_HEADING_TOL = math.radians(5.0)

# likelihood-field saturation; beyond this the sensor model is flat
LIKELIHOOD_MAX_DIST = 2.0


class SimulationRuntime:
    """One seeded run of a scenario; single-threaded, tick() at a time."""

    def __init__(self, scenario: Scenario, seed: int | None = None,
                 outbox: Path | None = None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        sc = scenario

        self.grid = sc.grid
        self.costmap = inflate(sc.grid, sc.inflation_radius)
        self.lf = likelihood_field(sc.grid, LIKELIHOOD_MAX_DIST)
        self.world = WorldState(
            sc.grid, params=sc.robot, battery=replace(sc.battery),
            rig=sc.rig, start_pose=sc.start_pose, markers=sc.markers,
            stations=sc.stations, lift_events=sc.lift_events, seed=self.seed)

        ticks_per_m = sc.robot.ticks_per_m
        clamp = sc.speed_clamp_factor * sc.robot.max_speed * ticks_per_m
        self.estimator = Estimator(
            self.lf,
            OdomState(sc.start_pose, ticks_per_m, clamp),
            sc.est_config,
            np.random.default_rng(self.seed + 1000003),
            initial_pose=sc.start_pose)

        outbox_path = outbox if outbox is not None else sc.notify_outbox
        if sc.notify_transport == "smtp":
            transport = SmtpTransport()
        elif outbox_path is not None:
            transport = FileTransport(outbox_path)
        else:
            transport = None
        self.executive = Executive(
            sc.grid, self.costmap, sc.stations, sc.markers,
            config=sc.exec_config, notifier=Notifier(transport),
            rng=np.random.default_rng(self.seed + 2000003),
            default_candidates=sc.candidates,
            try_dock=self._try_dock, undock=self._undock)

        self.events: list[EventRecord] = []
        self.event_lines: list[str] = []
        self._inbox: list[tuple] = []
        self._auto_confirms: list[tuple[float, str]] = []
        self._scans: list[LaserScan] = []
        self._markers = None
        self._tick_index = 0
        self._person_idx = 0
        self._mailbox_period = max(1, int(round(1.0 / sc.dt)))

    # ------------------------------------------------------------- dock I/O

    def _try_dock(self, station) -> bool:
        pose = self.world.pose
        dock = station.dock_pose
        ok = (math.hypot(pose.x - dock.x, pose.y - dock.y) <= DOCK_POS_TOL
              and abs(wrap_angle(pose.theta - dock.theta))
              <= DOCK_HEADING_TOL)
        if ok:
            self.world.docked = True
        return ok

    def _undock(self) -> None:
        self.world.docked = False

    # ------------------------------------------------------------- commands

    def schedule(self, request: dict) -> Task:
        """Validate and enqueue a task request (raises ScheduleError)."""
        return self.executive.schedule(request)

    def cancel(self, task_id: int) -> str:
        return self.executive.cancel(task_id)

    def confirm(self, action: str) -> None:
        self._inbox.append(("confirm", action))

    def say(self, text: str) -> None:
        self._inbox.append(("say", text))

    # ---------------------------------------------------------------- loop

    def _render_scans(self) -> list[LaserScan]:
        scans = []
        for i, cam in enumerate(self.world.rig.cams):
            img = self.world.render_depth(i)
            scans.append(depth_to_scan(img, cam.fx, cam.cx, cam.max_range,
                                       frame=i, mount_yaw=cam.yaw,
                                       row_band=2))
        return scans

    def tick(self) -> None:
        sc = self.scenario
        fresh = self._tick_index % sc.sensor_period == 0
        if fresh:
            self._scans = self._render_scans()
            self._markers = self.world.observe_markers()
            if self.estimator.due():
                self.estimator.correct(
                    [self._scans[i] for i in sc.use_cameras])
        else:
            self._markers = None

        clock = self.world.clock
        inbox = []
        while (self._auto_confirms
               and self._auto_confirms[0][0] <= clock):
            inbox.append(("confirm", self._auto_confirms.pop(0)[1]))
        while (self._person_idx < len(sc.person_events)
               and sc.person_events[self._person_idx][0] <= clock):
            inbox.append(("person", sc.person_events[self._person_idx][1]))
            self._person_idx += 1
        inbox.extend(self._inbox)
        self._inbox = []

        if (sc.mailbox is not None and sc.mailbox.is_dir()
                and self._tick_index % self._mailbox_period == 0):
            poll_mailbox(sc.mailbox, lambda req: self.schedule(req).id)

        inputs = ExecInputs(
            clock=clock, dt=sc.dt, est_pose=self.estimator.pose,
            odom_pose=self.estimator.odom.pose,
            battery_fraction=self.world.battery.fraction,
            docked=self.world.docked,
            front_scan=self._scans[0] if self._scans else None,
            markers=self._markers)
        cmd = self.executive.tick(inputs, inbox)

        self.world.step(cmd, sc.dt)
        enc = self.world.read_encoders()
        heading = self.world.read_heading()
        self.estimator.advance_odometry(enc.left_ticks, enc.right_ticks,
                                        heading, enc.dt)

        for ev in self.executive.drain_events():
            self.events.append(ev)
            self.event_lines.append(format_event(ev))
            if sc.auto_confirm and ev.kind == "Utterance":
                text = ev.payload.get("text")
                if text == "please load the object":
                    self._auto_confirms.append(
                        (ev.clock + sc.auto_confirm_delay, "loaded"))
                elif text == "please unload the object":
                    self._auto_confirms.append(
                        (ev.clock + sc.auto_confirm_delay, "unloaded"))
        self._tick_index += 1

    def run(self, duration: float | None = None, until=None,
            max_time: float | None = None) -> None:
        """Tick until `until()` is true, `duration` elapses, or `max_time`
        of total sim clock is reached."""
        deadline = math.inf
        if duration is not None:
            deadline = self.world.clock + duration
        if max_time is not None:
            deadline = min(deadline, max_time)
        while self.world.clock < deadline - 1e-9:
            if until is not None and until():
                return
            self.tick()

    # -------------------------------------------------------------- reading

    def front_clearance(self) -> float:
        return front_clearance(self._scans[0] if self._scans else None,
                               self.scenario.nav_params)

    @property
    def map_text(self) -> str:
        return serialize_map(self.grid)

    def status(self, debug_truth: bool = False) -> dict:
        est = self.estimator.pose
        task = self.executive.active_task
        out = {
            "clock": round(self.world.clock, 2),
            "pose_estimate": [round(est.x, 4), round(est.y, 4),
                              round(est.theta, 4)],
            "battery_fraction": round(self.world.battery.fraction, 4),
            "exec_state": self.executive.exec_state,
            "active_task": task.id if task else None,
        }
        if debug_truth:
            p = self.world.pose
            out["ground_truth"] = [round(p.x, 4), round(p.y, 4),
                                   round(p.theta, 4)]
        return out
