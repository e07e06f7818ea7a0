"""Ground-truth world: differential-drive kinematics, collision, battery,
wheel encoders with lift-slip, heading sensor, depth cameras, and marker
sightings.

The world is advanced by exactly one loop calling step(); everything else
reads immutable snapshots. All randomness flows through the world's own
seeded generator, so equal seeds and command streams give bit-identical
trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geometry import Pose, wrap_angle
from .mapgrid import FREE, GridMap, clearance_field, raycast, raycast_batch

NO_RETURN = float("nan")


@dataclass
class RobotParams:
    max_speed: float = 1.0
    max_omega: float = 1.2
    wheel_base: float = 0.4
    wheel_radius: float = 0.08
    ticks_per_rev: float = 1024.0
    accel_limit: float = 2.0
    body_radius: float = 0.25

    def __post_init__(self):
        for name in ("max_speed", "max_omega", "wheel_base", "wheel_radius",
                     "ticks_per_rev", "accel_limit", "body_radius"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_speed > 1.0:
            raise ValueError("max_speed above 1.0 m/s hardware limit")

    @property
    def ticks_per_m(self) -> float:
        return self.ticks_per_rev / (2.0 * math.pi * self.wheel_radius)


@dataclass
class BatteryModel:
    capacity: float = 240.0
    nav_draw: float = 160.0
    idle_draw: float = 20.0
    charge_rate: float = 480.0
    level: float = 240.0

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be > 0")
        for name in ("nav_draw", "idle_draw", "charge_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 <= self.level <= self.capacity:
            raise ValueError("level outside [0, capacity]")

    @property
    def fraction(self) -> float:
        return self.level / self.capacity

    @property
    def empty(self) -> bool:
        return self.level <= 0.0


@dataclass
class CameraParams:
    yaw: float
    fov: float = math.radians(60.0)
    width: int = 64
    height: int = 8
    max_range: float = 8.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.fov < math.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be >= 1")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def fx(self) -> float:
        # edge columns land exactly on +-fov/2
        half = math.tan(self.fov / 2.0)
        if self.width == 1:
            return 1.0 / half
        return self.cx / half

    def bearings(self) -> np.ndarray:
        u = np.arange(self.width, dtype=np.float64)
        return np.arctan((u - self.cx) / self.fx)


# forward cam first; the two side mounts face +90 and -90 degrees
DEFAULT_CAM_YAWS = (0.0, math.pi / 2.0, -math.pi / 2.0)


@dataclass
class SensorRig:
    cams: tuple[CameraParams, ...] = field(
        default_factory=lambda: tuple(CameraParams(yaw=y) for y in DEFAULT_CAM_YAWS))
    marker_fov: float = math.radians(70.0)
    marker_range: float = 4.0
    marker_noise_sigma: float = 0.0
    heading_sigma: float = 0.01
    encoder_quantize: bool = True

    def __post_init__(self):
        if len(self.cams) != 3:
            raise ValueError("rig carries exactly three depth cameras")
        if not 0.0 < self.marker_fov < math.pi:
            raise ValueError("marker_fov must lie in (0, pi)")
        if self.marker_range <= 0:
            raise ValueError("marker_range must be > 0")
        if self.heading_sigma < 0 or self.marker_noise_sigma < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class ChargingStation:
    id: int
    dock_pose: Pose
    marker_id: int
    approach_pose: Pose


@dataclass(frozen=True)
class LiftEvent:
    start: float
    duration: float
    k: float

    def __post_init__(self):
        if self.start < 0 or self.duration <= 0:
            raise ValueError("lift event needs start >= 0 and duration > 0")
        if self.k <= 1.0:
            raise ValueError("tick inflation factor k must be > 1")

    def active(self, clock: float) -> bool:
        return self.start <= clock < self.start + self.duration


class EncoderReading(NamedTuple):
    left_ticks: float
    right_ticks: float
    dt: float


class MarkerObservation(NamedTuple):
    id: int
    range: float
    bearing: float
    relative_pose: Pose


class WorldSnapshot(NamedTuple):
    clock: float
    pose: Pose
    twist: tuple[float, float]
    battery_level: float
    battery_fraction: float
    docked: bool
    distance_traveled: float


class WorldState:
    """Mutable ground truth; one owner, snapshot reads for everyone else."""

    def __init__(self, grid: GridMap, params: RobotParams | None = None,
                 battery: BatteryModel | None = None,
                 rig: SensorRig | None = None,
                 start_pose: Pose = Pose(0.0, 0.0, 0.0),
                 markers: dict[int, Pose] | None = None,
                 stations: list[ChargingStation] | None = None,
                 lift_events: list[LiftEvent] | None = None,
                 seed: int = 0):
        self.grid = grid
        self.params = params or RobotParams()
        self.battery = battery or BatteryModel()
        self.rig = rig or SensorRig()
        self.pose = start_pose
        self.twist = (0.0, 0.0)
        self.markers = dict(markers or {})
        self.stations = list(stations or [])
        self.lift_events = sorted(lift_events or [], key=lambda e: e.start)
        self.docked = False
        self.clock = 0.0
        self.distance_traveled = 0.0
        self.rng = np.random.default_rng(seed)
        self._clearance = clearance_field(grid)
        self._blocked = grid.cells != FREE
        self._step_ticks = (0.0, 0.0)
        self._step_dt = 0.0
        self._enc_cum = [0.0, 0.0]
        self._enc_rep = [0, 0]
        if self._disc_collides(start_pose.x, start_pose.y):
            raise ValueError("start pose collides with the map")

    # ------------------------------------------------------------ collision

    def _disc_collides(self, x: float, y: float) -> bool:
        """Exact body-disc vs blocked-cell overlap test."""
        g = self.grid
        r = self.params.body_radius
        ox, oy = g.origin
        if (x - r < ox or y - r < oy or
                x + r > ox + g.width * g.resolution or
                y + r > oy + g.height * g.resolution):
            return True  # leaving the map counts as collision
        ix0 = int(math.floor((x - r - ox) / g.resolution))
        ix1 = int(math.floor((x + r - ox) / g.resolution))
        iy0 = int(math.floor((y - r - oy) / g.resolution))
        iy1 = int(math.floor((y + r - oy) / g.resolution))
        res = g.resolution
        for iy in range(max(iy0, 0), min(iy1, g.height - 1) + 1):
            cy0 = oy + iy * res
            ny = min(max(y, cy0), cy0 + res)
            for ix in range(max(ix0, 0), min(ix1, g.width - 1) + 1):
                if not self._blocked[iy, ix]:
                    continue
                cx0 = ox + ix * res
                nx = min(max(x, cx0), cx0 + res)
                if (nx - x) ** 2 + (ny - y) ** 2 < r * r:
                    return True
        return False

    def _clearance_at(self, x: float, y: float) -> float:
        idx = self.grid.cell_index(x, y)
        if not self.grid.in_bounds(*idx):
            return 0.0
        return float(self._clearance[idx[1], idx[0]])

    # ----------------------------------------------------------------- step

    def _arc_pose(self, pose: Pose, v: float, om: float, t: float) -> Pose:
        if abs(om) < 1e-12:
            return Pose(pose.x + v * t * math.cos(pose.theta),
                        pose.y + v * t * math.sin(pose.theta),
                        pose.theta)
        radius = v / om
        th1 = pose.theta + om * t
        return Pose(pose.x + radius * (math.sin(th1) - math.sin(pose.theta)),
                    pose.y - radius * (math.cos(th1) - math.cos(pose.theta)),
                    wrap_angle(th1))

    def lift_active(self) -> bool:
        return any(e.active(self.clock) for e in self.lift_events)

    def _active_lift_k(self) -> float:
        for e in self.lift_events:
            if e.active(self.clock):
                return e.k
        return 1.0

    def step(self, cmd: tuple[float, float], dt: float) -> "WorldState":
        if dt <= 0:
            raise ValueError("dt must be > 0")
        p = self.params
        v_cmd = float(np.clip(cmd[0], -p.max_speed, p.max_speed))
        om_cmd = float(np.clip(cmd[1], -p.max_omega, p.max_omega))
        dv = np.clip(v_cmd - self.twist[0], -p.accel_limit * dt, p.accel_limit * dt)
        v = self.twist[0] + float(dv)
        om = om_cmd

        if self.battery.empty:
            v = om = 0.0

        k = self._active_lift_k()
        moving = abs(v) > 0 or abs(om) > 0
        if k > 1.0:
            # traction loss: unloaded wheels track the command (scaled by k)
            # while the chassis stays put; twist reports wheel speed
            vl = v - om * p.wheel_base / 2.0
            vr = v + om * p.wheel_base / 2.0
            self._step_ticks = (vl * dt * p.ticks_per_m * k,
                                vr * dt * p.ticks_per_m * k)
            self.twist = (v, om)
        else:
            new_pose, traveled, t_moved = self._move(v, om, dt)
            self.pose = new_pose
            self.distance_traveled += traveled
            vl = v - om * p.wheel_base / 2.0
            vr = v + om * p.wheel_base / 2.0
            self._step_ticks = (vl * t_moved * p.ticks_per_m,
                                vr * t_moved * p.ticks_per_m)
            if t_moved < dt:
                v = om = 0.0  # stopped at contact
            self.twist = (v, om)

        self._step_dt = dt
        b = self.battery
        if self.docked:
            b.level = min(b.capacity, b.level + b.charge_rate * dt / 3600.0)
        else:
            draw = b.nav_draw if moving else b.idle_draw
            b.level = max(0.0, b.level - draw * dt / 3600.0)
        self.clock += dt
        return self

    def _move(self, v: float, om: float, dt: float) -> tuple[Pose, float, float]:
        """Integrate one exact arc with stop-at-contact. Returns (pose, arc
        length actually traveled, time actually moved)."""
        travel = abs(v) * dt
        if travel == 0.0 and om == 0.0:
            return self.pose, 0.0, dt
        if travel == 0.0:
            # rotation in place never changes the disc footprint
            return self._arc_pose(self.pose, v, om, dt), 0.0, dt
        margin = self.params.body_radius + self.grid.cell_diagonal
        if self._clearance_at(self.pose.x, self.pose.y) > travel + margin:
            return self._arc_pose(self.pose, v, om, dt), travel, dt

        n_sub = max(1, int(math.ceil(travel / (0.25 * self.params.body_radius))))
        last_ok = 0.0
        hit = None
        for i in range(1, n_sub + 1):
            t = dt * i / n_sub
            q = self._arc_pose(self.pose, v, om, t)
            if self._disc_collides(q.x, q.y):
                hit = t
                break
            last_ok = t
        if hit is None:
            return self._arc_pose(self.pose, v, om, dt), travel, dt
        lo, hi = last_ok, hit
        for _ in range(20):
            mid = 0.5 * (lo + hi)
            q = self._arc_pose(self.pose, v, om, mid)
            if self._disc_collides(q.x, q.y):
                hi = mid
            else:
                lo = mid
        return self._arc_pose(self.pose, v, om, lo), abs(v) * lo, lo

    # -------------------------------------------------------------- sensors

    def read_encoders(self) -> EncoderReading:
        tl, tr = self._step_ticks
        if not self.rig.encoder_quantize:
            return EncoderReading(tl, tr, self._step_dt)
        out = []
        for i, t in enumerate((tl, tr)):
            self._enc_cum[i] += t
            rep = int(round(self._enc_cum[i]))
            out.append(float(rep - self._enc_rep[i]))
            self._enc_rep[i] = rep
        return EncoderReading(out[0], out[1], self._step_dt)

    def read_heading(self) -> float:
        noise = 0.0
        if self.rig.heading_sigma > 0:
            noise = float(self.rng.normal(0.0, self.rig.heading_sigma))
        return wrap_angle(self.pose.theta + noise)

    def render_depth(self, cam_index: int) -> np.ndarray:
        """Axial-depth image (height x width); NaN marks no return.

        Flat world: every row repeats the scan line, then per-pixel noise.
        """
        cam = self.rig.cams[cam_index]
        bearings = cam.bearings()
        angles = self.pose.theta + cam.yaw + bearings
        ranges = raycast_batch(self.grid, self.pose.x, self.pose.y, angles,
                               cam.max_range)
        axial = ranges * np.cos(bearings)
        axial[ranges >= cam.max_range] = NO_RETURN
        img = np.tile(axial, (cam.height, 1))
        if cam.noise_sigma > 0:
            noise = self.rng.normal(0.0, cam.noise_sigma, size=img.shape)
            valid = ~np.isnan(img)
            img[valid] = np.maximum(img[valid] + noise[valid], 1e-3)
        return img

    def observe_markers(self) -> list[MarkerObservation]:
        rig = self.rig
        out = []
        for mid in sorted(self.markers):
            mpose = self.markers[mid]
            dx = mpose.x - self.pose.x
            dy = mpose.y - self.pose.y
            rng_true = math.hypot(dx, dy)
            if rng_true > rig.marker_range:
                continue
            bearing = wrap_angle(math.atan2(dy, dx) - self.pose.theta)
            if abs(bearing) > rig.marker_fov / 2.0:
                continue
            if rng_true > 1e-9:
                ang = math.atan2(dy, dx)
                seen = raycast(self.grid, self.pose.x, self.pose.y, ang, rng_true)
                if seen < rng_true - 1e-9:
                    continue
            rel = self.pose.relative_pose(mpose)
            if rig.marker_noise_sigma > 0:
                rel = Pose(rel.x + float(self.rng.normal(0, rig.marker_noise_sigma)),
                           rel.y + float(self.rng.normal(0, rig.marker_noise_sigma)),
                           wrap_angle(rel.theta +
                                      float(self.rng.normal(0, rig.marker_noise_sigma))))
            obs_range = min(math.hypot(rel.x, rel.y), rig.marker_range)
            obs_bearing = float(np.clip(math.atan2(rel.y, rel.x),
                                        -rig.marker_fov / 2.0, rig.marker_fov / 2.0))
            out.append(MarkerObservation(mid, obs_range, obs_bearing, rel))
        return out

    # -------------------------------------------------------------- reading

    def snapshot(self) -> WorldSnapshot:
        return WorldSnapshot(self.clock, self.pose, self.twist,
                             self.battery.level, self.battery.fraction,
                             self.docked, self.distance_traveled)
