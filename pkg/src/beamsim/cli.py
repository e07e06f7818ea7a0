"""beam-sim command line: serve the mission API, run headless scenario
trials, or sanity-check a map file.

Exit codes: 0 success, 1 configuration problem, 2 scenario trials fell
short of full success.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .mapgrid import FREE, OCCUPIED, MapFormatError, parse_map
from .scenario import ScenarioError, build_scenario, load_scenario
from .scenario_runner import run_scenario


def _load(config: str | None, map_path: str | None):
    """Scenario from a config file, a bare map, or both (map overrides)."""
    if config is None and map_path is None:
        raise ScenarioError("either --config or --map is required")
    if config is None:
        return build_scenario({"map": str(Path(map_path).name)},
                              base_dir=Path(map_path).parent,
                              name=Path(map_path).stem)
    scenario = load_scenario(config)
    if map_path is not None:
        import yaml
        cfg = yaml.safe_load(Path(config).read_text(encoding="utf-8")) or {}
        cfg["map"] = str(Path(map_path).resolve())
        scenario = build_scenario(cfg, base_dir=Path(config).parent,
                                  name=scenario.name)
    return scenario


def _cmd_serve(args) -> int:
    from .server import serve
    try:
        scenario = _load(args.config, args.map)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    serve(scenario, port=args.port, host=args.host, seed=args.seed,
          rtf=args.rtf, debug_truth=args.debug_truth)
    return 0


def _cmd_scenario(args) -> int:
    try:
        scenario = load_scenario(args.config)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = run_scenario(scenario, trials=args.trials, seed=args.seed,
                          out_dir=args.out)
    for row in report["trial_results"]:
        print(f"seed {row['seed']}: {row['outcome']} "
              f"in {row['duration_s']} s, {row['distance_m']} m")
    print(f"{report['scenario']}: {report['successes']}/{report['trials']} "
          "succeeded")
    if args.out is None:
        print(json.dumps(report, indent=2, sort_keys=True))
    return 0 if report["successes"] >= report["trials"] else 2


def _cmd_mapcheck(args) -> int:
    try:
        text = Path(args.path).read_text(encoding="utf-8")
        grid = parse_map(text)
    except OSError as exc:
        print(f"error: cannot read {args.path}: {exc}", file=sys.stderr)
        return 1
    except MapFormatError as exc:
        print(f"error: {args.path}: {exc}", file=sys.stderr)
        return 1
    free = int(np.count_nonzero(grid.cells == FREE))
    occ = int(np.count_nonzero(grid.cells == OCCUPIED))
    unknown = grid.width * grid.height - free - occ
    print(f"{args.path}: {grid.width}x{grid.height} cells "
          f"@ {grid.resolution} m/cell")
    print(f"free {free}, occupied {occ}, unknown {unknown}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beam-sim",
        description="service-robot simulator: mission API, scenarios, maps")
    sub = parser.add_subparsers(dest="command", required=True)

    serve_p = sub.add_parser("serve", help="run the simulator + mission API")
    serve_p.add_argument("--map", help="occupancy map file (overrides the "
                                       "config's map)")
    serve_p.add_argument("--config", help="scenario YAML")
    serve_p.add_argument("--host", default="127.0.0.1")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--seed", type=int, default=None)
    serve_p.add_argument("--rtf", type=float, default=10.0,
                         help="real-time factor (<=0 runs unthrottled)")
    serve_p.add_argument("--debug-truth", action="store_true",
                         help="expose ground-truth pose in /api/status")
    serve_p.set_defaults(func=_cmd_serve)

    scen_p = sub.add_parser("scenario", help="run headless seeded trials")
    scen_p.add_argument("--config", required=True, help="scenario YAML")
    scen_p.add_argument("--trials", type=int, default=10)
    scen_p.add_argument("--seed", type=int, default=None)
    scen_p.add_argument("--out", default=None,
                        help="directory for report.json and trial logs")
    scen_p.set_defaults(func=_cmd_scenario)

    map_p = sub.add_parser("mapcheck", help="validate a map file")
    map_p.add_argument("path")
    map_p.set_defaults(func=_cmd_mapcheck)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
