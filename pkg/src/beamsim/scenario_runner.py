"""Headless trial runner.

Each trial gets its own seed, its own randomized mission (marker hideout for
target search, pickup/dropoff pair for delivery), and a fresh runtime. The
report and the per-trial event logs are the regression artifacts: equal
seeds must reproduce them byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from .geometry import Pose
from .runtime import SimulationRuntime
from .scenario import Scenario

SOAK_DURATION = 3.0 * 3600.0


def _trial_runtime(scenario: Scenario, trial_seed: int,
                   outbox: Path | None) -> tuple[SimulationRuntime, dict | None]:
    """Build the seeded runtime plus the mission request for one trial."""
    rng = np.random.default_rng(trial_seed)
    markers = dict(scenario.markers)
    request: dict | None = None

    if scenario.mission_kind == "target_search":
        idx = int(rng.integers(len(scenario.candidates)))
        cx, cy = scenario.candidates[idx]
        markers[scenario.mission_marker] = Pose(cx, cy, 0.0)
        request = {"kind": "target_search",
                   "params": {"marker": scenario.mission_marker}}
    elif scenario.mission_kind == "delivery":
        i, j = rng.choice(len(scenario.candidates), size=2, replace=False)
        request = {"kind": "delivery",
                   "params": {"pickup": list(scenario.candidates[int(i)]),
                              "dropoff": list(scenario.candidates[int(j)])}}
    if request is not None and scenario.mission_reply_to:
        request["reply_to"] = scenario.mission_reply_to

    sc = replace(scenario, markers=markers, seed=trial_seed)
    return SimulationRuntime(sc, outbox=outbox), request


def _run_soak(rt: SimulationRuntime, scenario: Scenario,
              rng: np.random.Generator) -> dict:
    """Continuous delivery load for three hours of sim time."""
    duration = min(scenario.trial_timeout, SOAK_DURATION)
    battery_min = rt.world.battery.fraction
    while rt.world.clock < duration:
        ex = rt.executive
        if ex.active_task is None and not ex.queue:
            i, j = rng.choice(len(scenario.candidates), size=2,
                              replace=False)
            rt.schedule({"kind": "delivery",
                         "params": {
                             "pickup": list(scenario.candidates[int(i)]),
                             "dropoff": list(scenario.candidates[int(j)])}})
        rt.tick()
        battery_min = min(battery_min, rt.world.battery.fraction)
    starts = sum(1 for e in rt.events if e.kind == "ChargeStart")
    ends = sum(1 for e in rt.events if e.kind == "ChargeEnd")
    done = sum(1 for t in rt.executive.tasks.values()
               if t.status == "Succeeded")
    ok = battery_min > 0.0 and starts >= 1 and ends >= 1
    return {"outcome": "Succeeded" if ok else "Failed",
            "battery_min": round(battery_min, 4),
            "charge_cycles": min(starts, ends),
            "tasks_completed": done}


def run_trial(scenario: Scenario, trial_seed: int,
              outbox: Path | None = None) -> tuple[dict, list[str]]:
    """One seeded trial; returns (result row, event log lines)."""
    rt, request = _trial_runtime(scenario, trial_seed, outbox)
    extra: dict = {}

    if scenario.mission_kind == "soak":
        extra = _run_soak(rt, scenario,
                          np.random.default_rng(trial_seed + 500009))
        outcome = extra.pop("outcome")
    elif request is not None:
        task = rt.schedule(request)
        rt.run(until=lambda: task.terminal,
               max_time=scenario.trial_timeout)
        if task.terminal:
            outcome = task.status
            if task.reason:
                outcome = f"{task.status}({task.reason})"
        else:
            outcome = "Timeout"
    else:
        rt.run(max_time=scenario.trial_timeout)
        outcome = "Succeeded"

    row = {"seed": trial_seed,
           "duration_s": round(rt.world.clock, 2),
           "outcome": outcome,
           "distance_m": round(rt.world.distance_traveled, 2)}
    row.update(extra)
    return row, list(rt.event_lines)


def run_scenario(scenario: Scenario, trials: int, seed: int | None = None,
                 out_dir: str | Path | None = None) -> dict:
    """Run N independent trials and assemble the TrialReport."""
    base_seed = scenario.seed if seed is None else seed
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    rows = []
    for i in range(trials):
        trial_seed = base_seed + i
        outbox = out / f"trial_{i:02d}_outbox.jsonl" if out else None
        if outbox is not None and outbox.exists():
            outbox.unlink()
        row, lines = run_trial(scenario, trial_seed, outbox)
        rows.append(row)
        if out is not None:
            log = out / f"trial_{i:02d}.log"
            log.write_text("\n".join(lines) + ("\n" if lines else ""),
                           encoding="utf-8")

    report = {"scenario": scenario.name,
              "trials": trials,
              "successes": sum(1 for r in rows
                               if r["outcome"].startswith("Succeeded")),
              "trial_results": rows}
    if out is not None:
        (out / "report.json").write_text(
            json.dumps(report, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    return report
