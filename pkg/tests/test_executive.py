import json
import math

import numpy as np
import pytest

from beamsim.executive import (
    BatteryPolicy,
    DockingController,
    DockingParams,
    EventRecord,
    ExecInputs,
    Executive,
    ExecutiveConfig,
    ScheduleError,
    UTTER_FOUND,
    UTTER_LOAD,
    UTTER_UNLOAD,
    battery_guard,
    format_event,
    select_station,
)
from beamsim.geometry import Pose
from beamsim.mapgrid import inflate, parse_map
from beamsim.simworld import ChargingStation, MarkerObservation

DT = 0.1


def open_grid(n=16, res=0.5):
    rows = ["#" * n] + ["#" + "." * (n - 2) + "#"] * (n - 2) + ["#" * n]
    return parse_map(f"{n} {n} {res}\n" + "\n".join(rows) + "\n")


def station_at(x, y, sid=0, marker_id=100):
    # dock faces -x toward its marker; approach sits 2 m out on the lane
    return ChargingStation(sid, Pose(x, y, math.pi), marker_id,
                           Pose(x + 2.0, y, math.pi))


def inputs(clock=0.0, pose=Pose(4.0, 4.0, 0.0), battery=0.8, docked=False,
           markers=None):
    return ExecInputs(clock=clock, dt=DT, est_pose=pose, odom_pose=pose,
                      battery_fraction=battery, docked=docked,
                      front_scan=None, markers=markers)


def make_exec(grid=None, stations=(), markers=None, config=None, **kw):
    g = grid if grid is not None else open_grid()
    return Executive(g, inflate(g, 0.3), list(stations), markers or {},
                     config=config, rng=np.random.default_rng(7), **kw)


# ------------------------------------------------------------ battery guard

def test_battery_guard_healthy():
    assert battery_guard(BatteryPolicy(), 0.50, docked=False) == "none"


def test_battery_guard_low_triggers_charge():
    assert battery_guard(BatteryPolicy(), 0.19, docked=False) == "charge"


def test_battery_guard_docked_resume_at_threshold():
    assert battery_guard(BatteryPolicy(), 0.95, docked=True) == "resume"
    assert battery_guard(BatteryPolicy(), 0.60, docked=True) == "none"


def test_battery_policy_validates_ordering():
    with pytest.raises(ValueError):
        BatteryPolicy(low_threshold=0.9, resume_threshold=0.5)


# ---------------------------------------------------------------- event log

def test_format_event_layout():
    line = format_event(EventRecord(12.345, "Utterance",
                                    {"b": 1, "a": [2.0, 3.5]}))
    clock, kind, payload = line.split("\t")
    assert clock == "12.35"
    assert kind == "Utterance"
    assert payload == '{"a":[2.0,3.5],"b":1}'
    assert json.loads(payload) == {"a": [2.0, 3.5], "b": 1}


# ----------------------------------------------------------- station choice

def test_select_station_prefers_cheapest_path():
    # station 0 is nearer as the crow flies but walled off into a detour
    g = parse_map("16 16 0.5\n"
                  "################\n"
                  "#..............#\n"
                  "#..............#\n"
                  "#..............#\n"
                  "#..............#\n"
                  "#..............#\n"
                  "#..............#\n"
                  "#..............#\n"
                  "############...#\n"
                  "#..........#...#\n"
                  "#..........#...#\n"
                  "#..........#...#\n"
                  "#..........#...#\n"
                  "#..........#...#\n"
                  "#..............#\n"
                  "################\n")
    cm = inflate(g, 0.0)
    near_but_walled = ChargingStation(0, Pose(1.25, 1.25, 0.0), 100,
                                      Pose(1.25, 1.25, 0.0))
    far_but_open = ChargingStation(1, Pose(6.25, 5.25, 0.0), 101,
                                   Pose(6.25, 5.25, 0.0))
    st = select_station(Pose(1.25, 4.5, 0.0), [near_but_walled, far_but_open],
                        cm)
    assert st.id == 1


def test_select_station_tie_goes_to_lower_id():
    g = open_grid()
    cm = inflate(g, 0.0)
    a = ChargingStation(0, Pose(2.25, 4.25, 0.0), 100, Pose(2.25, 4.25, 0.0))
    b = ChargingStation(1, Pose(6.25, 4.25, 0.0), 101, Pose(6.25, 4.25, 0.0))
    st = select_station(Pose(4.25, 4.25, 0.0), [b, a], cm)
    assert st.id == 0


def test_select_station_unreachable_returns_none():
    g = parse_map("8 8 0.5\n"
                  "########\n"
                  "#..#...#\n"
                  "#..#...#\n"
                  "#..#...#\n"
                  "#..#...#\n"
                  "#..#...#\n"
                  "#..#...#\n"
                  "########\n")
    cm = inflate(g, 0.0)
    st = ChargingStation(0, Pose(3.25, 3.25, 0.0), 100, Pose(3.25, 3.25, 0.0))
    assert select_station(Pose(0.75, 0.75, 0.0), [st], cm) is None


# -------------------------------------------------------------- dock control

def mk_obs(robot: Pose, marker: Pose, mid=100):
    rel = robot.relative_pose(marker)
    return MarkerObservation(mid, math.hypot(rel.x, rel.y),
                             math.atan2(rel.y, rel.x), rel)


def test_docking_immediate_at_dock_pose():
    st = station_at(5.0, 5.0)
    marker = Pose(4.6, 5.0, 0.0)
    ctrl = DockingController(st, marker)
    robot = st.dock_pose
    cmd = ctrl.step(0.0, DT, robot, [mk_obs(robot, marker)])
    assert ctrl.status == "docked"
    assert cmd == (0.0, 0.0)


def test_docking_scans_when_marker_behind():
    st = station_at(5.0, 5.0)
    marker = Pose(4.6, 5.0, 0.0)
    ctrl = DockingController(st, marker)
    robot = Pose(7.0, 5.0, 0.0)        # marker directly behind
    cmd = ctrl.step(0.0, DT, robot, [])     # camera sees nothing
    assert cmd[0] == 0.0 and cmd[1] == pytest.approx(ctrl.params.scan_omega)
    # once sighted, the controller advances instead of rotating
    cmd = ctrl.step(DT, DT, Pose(7.0, 5.0, math.pi),
                    [mk_obs(Pose(7.0, 5.0, math.pi), marker)])
    assert ctrl.status == "active"
    assert cmd[0] > 0.0


def test_docking_fails_after_full_scan_revolution():
    st = station_at(5.0, 5.0)
    ctrl = DockingController(st, Pose(4.6, 5.0, 0.0))
    clock, cmd = 0.0, (0.0, 0.0)
    for _ in range(2000):
        cmd = ctrl.step(clock, DT, Pose(7.0, 5.0, 0.0), [])
        if ctrl.status == "failed":
            break
        clock += DT
    assert ctrl.status == "failed"
    assert ctrl.reason == "marker not found"
    # needed at least one full revolution's worth of scanning
    assert clock >= 2.0 * math.pi / ctrl.params.scan_omega - 1e-9


def test_docking_lost_marker_reverts_once_then_fails():
    st = station_at(5.0, 5.0)
    marker = Pose(4.6, 5.0, 0.0)
    ctrl = DockingController(st, marker)
    robot = Pose(7.0, 5.0, math.pi)    # on the run-in lane, facing the dock
    clock = 0.0
    ctrl.step(clock, DT, robot, [mk_obs(robot, marker)])
    assert ctrl.status == "active"
    # starve it of sightings: first dropout reverts to the rotate-scan
    saw_scan = False
    for _ in range(40):
        clock += DT
        cmd = ctrl.step(clock, DT, robot, [])
        if cmd == (0.0, ctrl.params.scan_omega) and ctrl.status == "active":
            saw_scan = True
            break
    assert saw_scan
    # re-sight, then starve again: second dropout is terminal
    clock += DT
    ctrl.step(clock, DT, robot, [mk_obs(robot, marker)])
    for _ in range(40):
        clock += DT
        ctrl.step(clock, DT, robot, [])
        if ctrl.status == "failed":
            break
    assert ctrl.status == "failed"
    assert ctrl.reason == "marker lost"


# ----------------------------------------------------------------- schedule

def test_schedule_search_queues_fifo():
    ex = make_exec()
    t1 = ex.schedule({"kind": "target_search",
                      "params": {"marker": 7, "locations": [[2.0, 2.0]]}})
    t2 = ex.schedule({"kind": "delivery",
                      "params": {"pickup": [2.0, 2.0],
                                 "dropoff": [5.0, 5.0]}})
    assert (t1.id, t2.id) == (1, 2)
    assert ex.queue == [1, 2]
    assert [t.status for t in (t1, t2)] == ["Queued", "Queued"]
    kinds = [ev.kind for ev in ex.drain_events()]
    assert kinds == ["TaskTransition", "TaskTransition"]


def test_schedule_rejects_unknown_kind():
    with pytest.raises(ScheduleError, match="unknown task kind"):
        make_exec().schedule({"kind": "patrol", "params": {}})


def test_schedule_rejects_missing_marker():
    with pytest.raises(ScheduleError, match="needs params.marker"):
        make_exec().schedule({"kind": "target_search",
                              "params": {"locations": [[2.0, 2.0]]}})


def test_schedule_rejects_marker_without_candidates():
    with pytest.raises(ScheduleError, match="candidate locations"):
        make_exec().schedule({"kind": "target_search",
                              "params": {"marker": 7}})


def test_schedule_search_uses_default_candidates():
    ex = make_exec(default_candidates=[(2.0, 2.0), (5.0, 5.0)])
    t = ex.schedule({"kind": "target_search", "params": {"marker": 7}})
    assert t.kind.candidate_locations == ((2.0, 2.0), (5.0, 5.0))


def test_schedule_rejects_point_off_map():
    with pytest.raises(ScheduleError, match="off the map"):
        make_exec().schedule({"kind": "delivery",
                              "params": {"pickup": [50.0, 2.0],
                                         "dropoff": [5.0, 5.0]}})


def test_schedule_rejects_occupied_point():
    with pytest.raises(ScheduleError, match="not in free space"):
        make_exec().schedule({"kind": "delivery",
                              "params": {"pickup": [0.1, 0.1],
                                         "dropoff": [5.0, 5.0]}})


def test_schedule_rejects_malformed_point():
    with pytest.raises(ScheduleError, match="x, y"):
        make_exec().schedule({"kind": "delivery",
                              "params": {"pickup": "there",
                                         "dropoff": [5.0, 5.0]}})


def test_cancel_queued_task():
    ex = make_exec()
    t = ex.schedule({"kind": "target_search",
                     "params": {"marker": 7, "locations": [[2.0, 2.0]]}})
    assert ex.cancel(t.id) == "cancelled"
    assert t.status == "Failed" and t.reason == "cancelled"
    assert ex.queue == []
    assert ex.cancel(99) == "not-found"


def test_cancel_active_task_conflicts():
    ex = make_exec()
    t = ex.schedule({"kind": "target_search",
                     "params": {"marker": 7, "locations": [[2.0, 2.0]]}})
    ex.tick(inputs())
    assert t.status == "Active"
    assert ex.cancel(t.id) == "conflict"


# ------------------------------------------------------------------ ticking

def test_idle_tick_is_stationary():
    ex = make_exec()
    assert ex.tick(inputs()) == (0.0, 0.0)
    assert ex.exec_state == "idle"


def test_tick_is_deterministic():
    def run():
        ex = make_exec(default_candidates=[(2.0, 2.0), (6.0, 6.0)])
        ex.schedule({"kind": "target_search", "params": {"marker": 7}})
        cmds = [ex.tick(inputs(clock=i * DT)) for i in range(50)]
        return cmds, [format_event(e) for e in ex.drain_events()]
    assert run() == run()


def test_low_battery_preempts_idle():
    st = station_at(5.0, 5.0)
    ex = make_exec(stations=[st], markers={100: Pose(4.6, 5.0, 0.0)})
    ex.tick(inputs(battery=0.15))
    assert ex.exec_state == "navigating"   # en route to the approach pose


def test_low_battery_without_station_emits_stuck_once():
    ex = make_exec()
    ex.tick(inputs(clock=0.0, battery=0.15))
    ex.tick(inputs(clock=DT, battery=0.15))
    stuck = [e for e in ex.drain_events() if e.kind == "Stuck"]
    assert len(stuck) == 1
    assert stuck[0].payload == {"error": "no reachable station"}
    assert ex.exec_state == "idle"


def test_say_charge_starts_charge_mission():
    st = station_at(5.0, 5.0)
    ex = make_exec(stations=[st], markers={100: Pose(4.6, 5.0, 0.0)})
    ex.tick(inputs(battery=0.9), inbox=[("say", "charge")])
    assert ex.exec_state == "navigating"
    heard = [e for e in ex.drain_events() if e.kind == "Utterance"]
    assert heard[0].payload == {"heard": "charge"}


def test_battery_preempts_active_task_and_resumes_it():
    st = station_at(5.0, 5.0)
    ex = make_exec(stations=[st], markers={100: Pose(4.6, 5.0, 0.0)})
    t = ex.schedule({"kind": "target_search",
                     "params": {"marker": 7, "locations": [[2.0, 2.0]]}})
    ex.tick(inputs(clock=0.0))
    assert t.status == "Active"
    ex.tick(inputs(clock=DT, battery=0.15))
    assert t.status == "Paused"
    # charged back up and docked: next tick ends charging, resumes the task
    ex._mode = "charging"
    ex.tick(inputs(clock=2 * DT, battery=0.96, docked=True))
    assert t.status == "Active"
    kinds = [e.kind for e in ex.drain_events()]
    assert "ChargeEnd" in kinds


def test_new_tasks_stay_queued_while_charging():
    st = station_at(5.0, 5.0)
    ex = make_exec(stations=[st], markers={100: Pose(4.6, 5.0, 0.0)})
    ex.tick(inputs(battery=0.15))
    t = ex.schedule({"kind": "target_search",
                     "params": {"marker": 7, "locations": [[2.0, 2.0]]}})
    ex.tick(inputs(clock=DT, battery=0.15))
    assert t.status == "Queued"


# ------------------------------------------------------------------- search

def search_exec(locations, pose=Pose(4.0, 4.0, 0.0), grid=None):
    ex = make_exec(grid=grid)
    t = ex.schedule({"kind": "target_search",
                     "params": {"marker": 7, "locations": locations}})
    return ex, t


def test_search_scan_finds_marker_and_reports_location():
    ex, t = search_exec([[4.0, 4.0]])
    ex.tick(inputs(clock=0.0))           # activate; already at the location
    assert ex.exec_state == "scanning"
    robot = Pose(4.0, 4.0, 0.0)
    rel = robot.relative_pose(Pose(5.0, 4.5, 0.0))
    obs = MarkerObservation(7, math.hypot(rel.x, rel.y),
                            math.atan2(rel.y, rel.x), rel)
    ex.tick(inputs(clock=DT, pose=robot, markers=[obs]))
    assert t.status == "Succeeded"
    assert t.result == [5.0, 4.5]
    events = {e.kind: e.payload for e in ex.drain_events()}
    assert events["Utterance"] == {"text": UTTER_FOUND}
    assert events["MarkerFound"] == {"location": [5.0, 4.5], "marker": 7}


def test_search_ignores_other_markers():
    ex, t = search_exec([[4.0, 4.0]])
    ex.tick(inputs(clock=0.0))
    rel = Pose(1.0, 0.0, 0.0)
    obs = MarkerObservation(9, 1.0, 0.0, rel)
    ex.tick(inputs(clock=DT, markers=[obs]))
    assert t.status == "Active"


def test_search_moves_on_after_scan_timeout():
    ex, t = search_exec([[4.0, 4.0], [2.0, 2.0]])
    ex.tick(inputs(clock=0.0))
    assert ex.exec_state == "scanning"
    end = ex.config.scan_duration + 1.0
    cmd = ex.tick(inputs(clock=end))
    assert ex.exec_state == "navigating"   # heading for the second location
    assert t.status == "Active"
    assert cmd != (0.0, 0.0)


def test_search_exhausts_and_fails():
    ex, t = search_exec([[4.0, 4.0]])
    ex.tick(inputs(clock=0.0))
    ex.tick(inputs(clock=ex.config.scan_duration + 1.0))
    assert t.status == "Failed"
    assert t.reason == "not found"


def test_search_skips_unreachable_location():
    g = parse_map("10 10 0.5\n"
                  "##########\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "##########\n")
    # the second room is free space, so scheduling accepts it, but no path
    # exists from the robot's side
    ex, t = search_exec([[3.75, 2.0], [1.0, 1.0]], grid=g)
    ex.tick(inputs(clock=0.0, pose=Pose(1.0, 1.0, 0.0)))
    stuck = [e for e in ex.drain_events() if e.kind == "Stuck"]
    assert len(stuck) == 1
    assert stuck[0].payload["location"] == [3.75, 2.0]
    assert t.status == "Active"    # continues with the reachable location


# ----------------------------------------------------------------- delivery

def test_delivery_degenerate_two_utterances():
    ex = make_exec()
    t = ex.schedule({"kind": "delivery",
                     "params": {"pickup": [4.0, 4.0],
                                "dropoff": [4.0, 4.0]}})
    ex.tick(inputs(clock=0.0))
    assert ex.exec_state == "awaiting_confirmation"
    ex.tick(inputs(clock=DT), inbox=[("confirm", "loaded")])
    ex.tick(inputs(clock=2 * DT))
    assert ex.exec_state == "awaiting_confirmation"
    ex.tick(inputs(clock=3 * DT), inbox=[("confirm", "unloaded")])
    assert t.status == "Succeeded"
    texts = [e.payload["text"] for e in ex.drain_events()
             if e.kind == "Utterance"]
    assert texts == [UTTER_LOAD, UTTER_UNLOAD]


def test_delivery_spoken_loaded_counts_as_confirmation():
    ex = make_exec()
    t = ex.schedule({"kind": "delivery",
                     "params": {"pickup": [4.0, 4.0],
                                "dropoff": [4.0, 4.0]}})
    ex.tick(inputs(clock=0.0))
    ex.tick(inputs(clock=DT), inbox=[("say", "loaded")])
    ex.tick(inputs(clock=2 * DT))      # reaches dropoff, asks to unload
    ex.tick(inputs(clock=3 * DT), inbox=[("say", "unloaded")])
    assert t.status == "Succeeded"


def test_delivery_confirmation_timeout_fails():
    ex = make_exec()
    t = ex.schedule({"kind": "delivery",
                     "params": {"pickup": [4.0, 4.0],
                                "dropoff": [4.0, 4.0]}})
    ex.tick(inputs(clock=0.0))
    ex.tick(inputs(clock=ex.config.confirm_timeout + 1.0))
    assert t.status == "Failed"
    assert t.reason == "no confirmation"


def test_delivery_unreachable_fails():
    g = parse_map("10 10 0.5\n"
                  "##########\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "#...#....#\n"
                  "##########\n")
    ex = make_exec(grid=g)
    t = ex.schedule({"kind": "delivery",
                     "params": {"pickup": [3.75, 2.0],
                                "dropoff": [1.0, 1.0]}})
    ex.tick(inputs(clock=0.0, pose=Pose(1.0, 1.0, 0.0)))
    assert t.status == "Failed"
    assert t.reason == "unreachable"


def test_finish_notifies_reply_to():
    sent = []

    class Capture:
        def send(self, note):
            sent.append(note)

    from beamsim.notify import Notifier
    ex = make_exec(notifier=Notifier(Capture()))
    ex.schedule({"kind": "delivery",
                 "params": {"pickup": [4.0, 4.0], "dropoff": [4.0, 4.0]},
                 "reply_to": "ops@example.com"})
    ex.tick(inputs(clock=0.0))
    ex.tick(inputs(clock=DT), inbox=[("confirm", "loaded")])
    ex.tick(inputs(clock=2 * DT))
    ex.tick(inputs(clock=3 * DT), inbox=[("confirm", "unloaded")])
    assert len(sent) == 1
    assert sent[0].to == "ops@example.com"
    assert "Succeeded" in sent[0].body


def test_person_event_recorded():
    ex = make_exec()
    ex.tick(inputs(), inbox=[("person", {"camera": 1})])
    evs = [e for e in ex.drain_events() if e.kind == "PersonDetected"]
    assert evs[0].payload == {"camera": 1}
