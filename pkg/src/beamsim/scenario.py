"""Scenario configuration: a strict YAML schema that assembles every
component of a run.

Unknown keys are rejected (with their dotted path) rather than ignored, so a
typo in a config cannot silently fall back to a default. The full schema is
documented in docs/scenario_schema.md; every key except `map` has a default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .estimation import EstimatorConfig, MclParams
from .executive import BatteryPolicy, DockingParams, ExecutiveConfig
from .geometry import Pose
from .mapgrid import GridMap, MapFormatError, parse_map
from .navigation import NavParams
from .simworld import (BatteryModel, CameraParams, ChargingStation,
                       LiftEvent, RobotParams, SensorRig)


class ScenarioError(ValueError):
    """Configuration problem; str(err) names the offending key path."""


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ScenarioError(f"{path}: {message}")


def _as_mapping(value, path: str) -> dict:
    if value is None:
        return {}
    _require(isinstance(value, dict), path, "must be a mapping")
    return dict(value)


def _reject_unknown(d: dict, allowed: set[str], prefix: str) -> None:
    for key in d:
        if key not in allowed:
            where = f"{prefix}.{key}" if prefix else str(key)
            raise ScenarioError(f"{where}: unknown key")


def _number(d: dict, key: str, default: float, prefix: str) -> float:
    value = d.get(key, default)
    _require(isinstance(value, (int, float)) and not isinstance(value, bool),
             f"{prefix}.{key}", "must be a number")
    return float(value)


def _integer(d: dict, key: str, default: int, prefix: str) -> int:
    value = d.get(key, default)
    _require(isinstance(value, int) and not isinstance(value, bool),
             f"{prefix}.{key}", "must be an integer")
    return int(value)


def _boolean(d: dict, key: str, default: bool, prefix: str) -> bool:
    value = d.get(key, default)
    _require(isinstance(value, bool), f"{prefix}.{key}", "must be a boolean")
    return value


def _point(value, path: str) -> tuple[float, float]:
    _require(isinstance(value, (list, tuple)) and len(value) == 2,
             path, "must be an [x, y] pair")
    for c in value:
        _require(isinstance(c, (int, float)) and not isinstance(c, bool),
                 path, "coordinates must be numbers")
    return float(value[0]), float(value[1])


def _pose(value, path: str) -> Pose:
    _require(isinstance(value, (list, tuple)) and len(value) == 3,
             path, "must be an [x, y, theta] triple")
    for c in value:
        _require(isinstance(c, (int, float)) and not isinstance(c, bool),
                 path, "components must be numbers")
    return Pose(float(value[0]), float(value[1]), float(value[2]))


@dataclass
class Scenario:
    """Everything a run needs, already validated and typed."""
    name: str
    map_path: Path
    map_text: str
    grid: GridMap
    seed: int
    dt: float
    sensor_period: int
    start_pose: Pose
    trial_timeout: float
    robot: RobotParams
    battery: BatteryModel
    rig: SensorRig
    est_config: EstimatorConfig
    use_cameras: tuple[int, ...]
    speed_clamp_factor: float
    nav_params: NavParams
    inflation_radius: float
    exec_config: ExecutiveConfig
    auto_confirm: bool
    auto_confirm_delay: float
    markers: dict[int, Pose]
    stations: list[ChargingStation]
    candidates: list[tuple[float, float]]
    lift_events: list[LiftEvent]
    mission_kind: str
    mission_marker: int | None
    mission_reply_to: str | None
    notify_transport: str
    notify_outbox: Path | None
    mailbox: Path | None
    person_events: list[tuple[float, dict]] = field(default_factory=list)


_TOP_KEYS = {"name", "map", "seed", "dt", "sensor_period", "start_pose",
             "trial_timeout", "robot", "battery", "sensors", "estimation",
             "navigation", "executive", "markers", "stations", "candidates",
             "lift_events", "mission", "notify", "person_events"}


def _build_robot(cfg: dict) -> RobotParams:
    d = _as_mapping(cfg.get("robot"), "robot")
    allowed = {"max_speed", "max_omega", "wheel_base", "wheel_radius",
               "ticks_per_rev", "accel_limit", "body_radius"}
    _reject_unknown(d, allowed, "robot")
    base = RobotParams()
    try:
        return RobotParams(
            max_speed=_number(d, "max_speed", base.max_speed, "robot"),
            max_omega=_number(d, "max_omega", base.max_omega, "robot"),
            wheel_base=_number(d, "wheel_base", base.wheel_base, "robot"),
            wheel_radius=_number(d, "wheel_radius", base.wheel_radius,
                                 "robot"),
            ticks_per_rev=_number(d, "ticks_per_rev", base.ticks_per_rev,
                                  "robot"),
            accel_limit=_number(d, "accel_limit", base.accel_limit, "robot"),
            body_radius=_number(d, "body_radius", base.body_radius, "robot"))
    except ValueError as exc:
        raise ScenarioError(f"robot: {exc}")


def _build_battery(cfg: dict) -> BatteryModel:
    d = _as_mapping(cfg.get("battery"), "battery")
    allowed = {"capacity_wh", "nav_draw_w", "idle_draw_w", "charge_rate_w",
               "level_fraction"}
    _reject_unknown(d, allowed, "battery")
    capacity = _number(d, "capacity_wh", 240.0, "battery")
    frac = _number(d, "level_fraction", 1.0, "battery")
    _require(0.0 <= frac <= 1.0, "battery.level_fraction",
             "must lie in [0, 1]")
    try:
        return BatteryModel(
            capacity=capacity,
            nav_draw=_number(d, "nav_draw_w", 160.0, "battery"),
            idle_draw=_number(d, "idle_draw_w", 20.0, "battery"),
            charge_rate=_number(d, "charge_rate_w", 480.0, "battery"),
            level=capacity * frac)
    except ValueError as exc:
        raise ScenarioError(f"battery: {exc}")


def _build_rig(cfg: dict) -> SensorRig:
    d = _as_mapping(cfg.get("sensors"), "sensors")
    allowed = {"camera_yaws", "camera_fov_deg", "camera_width",
               "camera_height", "camera_range", "camera_noise_sigma",
               "marker_fov_deg", "marker_range", "marker_noise_sigma",
               "heading_sigma", "encoder_quantize"}
    _reject_unknown(d, allowed, "sensors")
    yaws = d.get("camera_yaws", [0.0, math.pi / 2.0, -math.pi / 2.0])
    _require(isinstance(yaws, (list, tuple)) and len(yaws) == 3,
             "sensors.camera_yaws", "must list exactly three yaw angles")
    fov = math.radians(_number(d, "camera_fov_deg", 60.0, "sensors"))
    width = _integer(d, "camera_width", 64, "sensors")
    height = _integer(d, "camera_height", 8, "sensors")
    rng = _number(d, "camera_range", 8.0, "sensors")
    noise = _number(d, "camera_noise_sigma", 0.0, "sensors")
    try:
        cams = tuple(CameraParams(yaw=float(y), fov=fov, width=width,
                                  height=height, max_range=rng,
                                  noise_sigma=noise) for y in yaws)
        return SensorRig(
            cams=cams,
            marker_fov=math.radians(_number(d, "marker_fov_deg", 70.0,
                                            "sensors")),
            marker_range=_number(d, "marker_range", 4.0, "sensors"),
            marker_noise_sigma=_number(d, "marker_noise_sigma", 0.0,
                                       "sensors"),
            heading_sigma=_number(d, "heading_sigma", 0.01, "sensors"),
            encoder_quantize=_boolean(d, "encoder_quantize", True,
                                      "sensors"))
    except ValueError as exc:
        raise ScenarioError(f"sensors: {exc}")


def _build_estimation(cfg: dict, sensor_period: int) \
        -> tuple[EstimatorConfig, tuple[int, ...], float]:
    d = _as_mapping(cfg.get("estimation"), "estimation")
    allowed = {"particles", "sigma_trans", "sigma_rot", "sigma_hit",
               "z_rand", "ess_fraction", "beam_step", "init_sigma_xy",
               "init_sigma_theta", "speed_clamp_factor", "use_cameras"}
    _reject_unknown(d, allowed, "estimation")
    try:
        mcl = MclParams(
            n_particles=_integer(d, "particles", 500, "estimation"),
            sigma_trans=_number(d, "sigma_trans", 0.1, "estimation"),
            sigma_rot=_number(d, "sigma_rot", 0.1, "estimation"),
            sigma_hit=_number(d, "sigma_hit", 0.2, "estimation"),
            z_rand=_number(d, "z_rand", 0.05, "estimation"),
            ess_fraction=_number(d, "ess_fraction", 0.5, "estimation"),
            beam_step=_integer(d, "beam_step", 4, "estimation"))
    except ValueError as exc:
        raise ScenarioError(f"estimation: {exc}")
    config = EstimatorConfig(
        mcl=mcl, update_period=sensor_period,
        init_sigma_xy=_number(d, "init_sigma_xy", 0.05, "estimation"),
        init_sigma_theta=_number(d, "init_sigma_theta", 0.02, "estimation"))
    use = d.get("use_cameras", [0, 1, 2])
    _require(isinstance(use, (list, tuple)) and use, "estimation.use_cameras",
             "must be a non-empty list of camera indices")
    for i in use:
        _require(isinstance(i, int) and 0 <= i < 3,
                 "estimation.use_cameras", "indices must lie in 0..2")
    clamp = _number(d, "speed_clamp_factor", 2.0, "estimation")
    _require(clamp > 0, "estimation.speed_clamp_factor", "must be > 0")
    return config, tuple(use), clamp


def _build_nav(cfg: dict, robot: RobotParams) -> tuple[NavParams, float]:
    d = _as_mapping(cfg.get("navigation"), "navigation")
    base = NavParams()
    allowed = {"inflation_radius", "lookahead", "stop_distance", "slow_zone",
               "corridor_halfwidth", "goal_slow_radius", "min_speed",
               "align_tol", "rotate_gain", "blocked_threshold",
               "recovery_cycles", "replan_corridor"}
    _reject_unknown(d, allowed, "navigation")
    inflation = _number(d, "inflation_radius", 0.75, "navigation")
    _require(inflation >= 0, "navigation.inflation_radius", "must be >= 0")
    params = NavParams(
        lookahead=_number(d, "lookahead", base.lookahead, "navigation"),
        stop_distance=_number(d, "stop_distance", base.stop_distance,
                              "navigation"),
        slow_zone=_number(d, "slow_zone", base.slow_zone, "navigation"),
        corridor_halfwidth=_number(d, "corridor_halfwidth",
                                   base.corridor_halfwidth, "navigation"),
        goal_slow_radius=_number(d, "goal_slow_radius",
                                 base.goal_slow_radius, "navigation"),
        min_speed=_number(d, "min_speed", base.min_speed, "navigation"),
        align_tol=_number(d, "align_tol", base.align_tol, "navigation"),
        rotate_gain=_number(d, "rotate_gain", base.rotate_gain,
                            "navigation"),
        max_speed=robot.max_speed,
        max_omega=robot.max_omega,
        blocked_threshold=_number(d, "blocked_threshold",
                                  base.blocked_threshold, "navigation"),
        recovery_cycles=_integer(d, "recovery_cycles", base.recovery_cycles,
                                 "navigation"),
        replan_corridor=_number(d, "replan_corridor", base.replan_corridor,
                                "navigation"))
    return params, inflation


def _build_executive(cfg: dict, nav: NavParams) \
        -> tuple[ExecutiveConfig, bool, float]:
    d = _as_mapping(cfg.get("executive"), "executive")
    allowed = {"battery_low", "battery_resume", "scan_duration",
               "confirm_timeout", "goal_pos_tol", "dock", "auto_confirm"}
    _reject_unknown(d, allowed, "executive")
    try:
        policy = BatteryPolicy(
            low_threshold=_number(d, "battery_low", 0.20, "executive"),
            resume_threshold=_number(d, "battery_resume", 0.95, "executive"))
    except ValueError as exc:
        raise ScenarioError(f"executive: {exc}")

    dock_d = _as_mapping(d.get("dock"), "executive.dock")
    dock_allowed = {"k_v", "k_omega", "v_cap", "scan_omega", "terminal_pos",
                    "terminal_heading_deg", "lost_timeout"}
    _reject_unknown(dock_d, dock_allowed, "executive.dock")
    base = DockingParams()
    dock = DockingParams(
        k_v=_number(dock_d, "k_v", base.k_v, "executive.dock"),
        k_omega=_number(dock_d, "k_omega", base.k_omega, "executive.dock"),
        v_cap=_number(dock_d, "v_cap", base.v_cap, "executive.dock"),
        scan_omega=_number(dock_d, "scan_omega", nav.max_omega / 2.0,
                           "executive.dock"),
        terminal_pos=_number(dock_d, "terminal_pos", base.terminal_pos,
                             "executive.dock"),
        terminal_heading=math.radians(_number(dock_d, "terminal_heading_deg",
                                              5.0, "executive.dock")),
        lost_timeout=_number(dock_d, "lost_timeout", base.lost_timeout,
                             "executive.dock"))

    ac = _as_mapping(d.get("auto_confirm"), "executive.auto_confirm")
    _reject_unknown(ac, {"enabled", "delay"}, "executive.auto_confirm")
    auto = _boolean(ac, "enabled", False, "executive.auto_confirm")
    delay = _number(ac, "delay", 2.0, "executive.auto_confirm")

    config = ExecutiveConfig(
        policy=policy, nav=nav, dock=dock,
        scan_duration=_number(d, "scan_duration", 30.0, "executive"),
        confirm_timeout=_number(d, "confirm_timeout", 600.0, "executive"),
        goal_pos_tol=_number(d, "goal_pos_tol", 0.3, "executive"))
    return config, auto, delay


def _build_markers(cfg: dict) -> dict[int, Pose]:
    raw = cfg.get("markers") or []
    _require(isinstance(raw, list), "markers", "must be a list")
    out: dict[int, Pose] = {}
    for i, entry in enumerate(raw):
        d = _as_mapping(entry, f"markers[{i}]")
        _reject_unknown(d, {"id", "pose"}, f"markers[{i}]")
        _require("id" in d and "pose" in d, f"markers[{i}]",
                 "needs id and pose")
        mid = d["id"]
        _require(isinstance(mid, int), f"markers[{i}].id",
                 "must be an integer")
        _require(mid not in out, f"markers[{i}].id", "duplicate marker id")
        out[mid] = _pose(d["pose"], f"markers[{i}].pose")
    return out


def _build_stations(cfg: dict, markers: dict[int, Pose]) \
        -> list[ChargingStation]:
    raw = cfg.get("stations") or []
    _require(isinstance(raw, list), "stations", "must be a list")
    out = []
    seen = set()
    for i, entry in enumerate(raw):
        d = _as_mapping(entry, f"stations[{i}]")
        _reject_unknown(d, {"id", "dock_pose", "approach_pose", "marker_id"},
                        f"stations[{i}]")
        for key in ("id", "dock_pose", "approach_pose", "marker_id"):
            _require(key in d, f"stations[{i}]", f"needs {key}")
        sid = d["id"]
        _require(isinstance(sid, int), f"stations[{i}].id",
                 "must be an integer")
        _require(sid not in seen, f"stations[{i}].id", "duplicate id")
        seen.add(sid)
        _require(d["marker_id"] in markers, f"stations[{i}].marker_id",
                 "references an unknown marker")
        out.append(ChargingStation(
            id=sid,
            dock_pose=_pose(d["dock_pose"], f"stations[{i}].dock_pose"),
            marker_id=int(d["marker_id"]),
            approach_pose=_pose(d["approach_pose"],
                                f"stations[{i}].approach_pose")))
    return out


def _build_mission(cfg: dict) -> tuple[str, int | None, str | None]:
    d = _as_mapping(cfg.get("mission"), "mission")
    _reject_unknown(d, {"kind", "marker", "reply_to"}, "mission")
    kind = d.get("kind", "none")
    _require(kind in ("none", "target_search", "delivery", "soak"),
             "mission.kind", "must be none|target_search|delivery|soak")
    marker = d.get("marker")
    if marker is not None:
        _require(isinstance(marker, int), "mission.marker",
                 "must be an integer")
    if kind == "target_search":
        _require(marker is not None, "mission.marker",
                 "required for target_search missions")
    reply_to = d.get("reply_to")
    if reply_to is not None:
        _require(isinstance(reply_to, str), "mission.reply_to",
                 "must be a string")
    return kind, marker, reply_to


def build_scenario(cfg: dict, base_dir: Path | str = ".",
                   name: str = "scenario") -> Scenario:
    """Validate a config mapping and assemble the typed Scenario."""
    base_dir = Path(base_dir)
    cfg = _as_mapping(cfg, "config")
    _reject_unknown(cfg, _TOP_KEYS, "")
    _require("map" in cfg, "map", "required")
    _require(isinstance(cfg["map"], str), "map", "must be a path string")

    map_path = Path(cfg["map"])
    if not map_path.is_absolute():
        map_path = base_dir / map_path
    try:
        map_text = map_path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"map: cannot read {map_path}: {exc}")
    try:
        grid = parse_map(map_text)
    except MapFormatError as exc:
        raise ScenarioError(f"map: {map_path}: {exc}")

    seed = _integer(cfg, "seed", 0, "config")
    dt = _number(cfg, "dt", 0.1, "config")
    _require(dt > 0, "dt", "must be > 0")
    sensor_period = _integer(cfg, "sensor_period", 10, "config")
    _require(sensor_period >= 1, "sensor_period", "must be >= 1")
    trial_timeout = _number(cfg, "trial_timeout", 2000.0, "config")
    _require(trial_timeout > 0, "trial_timeout", "must be > 0")
    start_pose = _pose(cfg.get("start_pose", [1.0, 1.0, 0.0]), "start_pose")
    name = str(cfg.get("name", name))

    robot = _build_robot(cfg)
    battery = _build_battery(cfg)
    rig = _build_rig(cfg)
    est_config, use_cams, clamp_factor = _build_estimation(cfg, sensor_period)
    nav_params, inflation = _build_nav(cfg, robot)
    exec_config, auto_confirm, ac_delay = _build_executive(cfg, nav_params)
    markers = _build_markers(cfg)
    stations = _build_stations(cfg, markers)

    raw_cands = cfg.get("candidates") or []
    _require(isinstance(raw_cands, list), "candidates", "must be a list")
    candidates = [_point(p, f"candidates[{i}]")
                  for i, p in enumerate(raw_cands)]

    raw_lift = cfg.get("lift_events") or []
    _require(isinstance(raw_lift, list), "lift_events", "must be a list")
    lift_events = []
    for i, entry in enumerate(raw_lift):
        d = _as_mapping(entry, f"lift_events[{i}]")
        _reject_unknown(d, {"start", "duration", "k"}, f"lift_events[{i}]")
        try:
            lift_events.append(LiftEvent(
                start=_number(d, "start", 0.0, f"lift_events[{i}]"),
                duration=_number(d, "duration", 1.0, f"lift_events[{i}]"),
                k=_number(d, "k", 3.0, f"lift_events[{i}]")))
        except ValueError as exc:
            raise ScenarioError(f"lift_events[{i}]: {exc}")

    mission_kind, mission_marker, mission_reply = _build_mission(cfg)
    if mission_kind in ("target_search", "delivery", "soak"):
        _require(len(candidates) >= (2 if mission_kind != "target_search"
                                     else 1),
                 "candidates", f"{mission_kind} missions need locations")
    if mission_kind == "target_search":
        _require(mission_marker not in markers, "mission.marker",
                 "the hidden marker must not already be placed")

    notify_d = _as_mapping(cfg.get("notify"), "notify")
    _reject_unknown(notify_d, {"transport", "outbox", "mailbox"}, "notify")
    transport = notify_d.get("transport", "file")
    _require(transport in ("file", "smtp"), "notify.transport",
             "must be file or smtp")
    outbox = notify_d.get("outbox")
    if outbox is not None:
        _require(isinstance(outbox, str), "notify.outbox",
                 "must be a path string")
        outbox = Path(outbox)
        if not outbox.is_absolute():
            outbox = base_dir / outbox
    mailbox = notify_d.get("mailbox")
    if mailbox is not None:
        _require(isinstance(mailbox, str), "notify.mailbox",
                 "must be a path string")
        mailbox = Path(mailbox)
        if not mailbox.is_absolute():
            mailbox = base_dir / mailbox

    raw_person = cfg.get("person_events") or []
    _require(isinstance(raw_person, list), "person_events", "must be a list")
    person_events = []
    for i, entry in enumerate(raw_person):
        d = _as_mapping(entry, f"person_events[{i}]")
        _reject_unknown(d, {"time", "payload"}, f"person_events[{i}]")
        t = _number(d, "time", 0.0, f"person_events[{i}]")
        payload = _as_mapping(d.get("payload"), f"person_events[{i}].payload")
        person_events.append((t, payload))
    person_events.sort(key=lambda e: e[0])

    return Scenario(
        name=name, map_path=map_path, map_text=map_text, grid=grid,
        seed=seed, dt=dt, sensor_period=sensor_period, start_pose=start_pose,
        trial_timeout=trial_timeout, robot=robot, battery=battery, rig=rig,
        est_config=est_config, use_cameras=use_cams,
        speed_clamp_factor=clamp_factor, nav_params=nav_params,
        inflation_radius=inflation, exec_config=exec_config,
        auto_confirm=auto_confirm, auto_confirm_delay=ac_delay,
        markers=markers, stations=stations, candidates=candidates,
        lift_events=lift_events, mission_kind=mission_kind,
        mission_marker=mission_marker, mission_reply_to=mission_reply,
        notify_transport=transport, notify_outbox=outbox, mailbox=mailbox,
        person_events=person_events)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"config: cannot read {path}: {exc}")
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"config: invalid YAML: {exc}")
    if cfg is None:
        cfg = {}
    return build_scenario(cfg, base_dir=path.parent, name=path.stem)
