"""Command line entry point.

Exit codes: 0 success, 2 bad input (config, missing files, arguments),
3 internal invariant violated during a run.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .battery import battery_drain
from .broadcast import BroadcastMessage
from .engine import SimulationInvariantError, run
from .experiments import (
    broadcast_study,
    clustered_optimum,
    compare_greedy_vs_optimal,
    greedy_vs_optimal_study,
    map_build_study,
    reachability_rows,
    sweep,
    sweep_scenario,
)
from .grid import GeoCoord
from .oracle import Objective, TooManyCandidates
from .scenario import (
    PRESETS,
    ScenarioConfig,
    ScenarioError,
    apply_overrides,
    load_scenario,
    save_scenario,
    synthesize,
)

OUT_DIR_ENV = "PARKEDRSU_OUT_DIR"


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "out")


def _config_overrides(args) -> list[str]:
    over = list(args.set or [])
    if args.preset:
        over = [f"config.{k}={v}" for k, v in PRESETS[args.preset].items()] + over
    if args.seed is not None:
        over.append(f"config.rng_seed={args.seed}")
    return over


def _load(args):
    if not args.config:
        raise UsageError("--config is required for this command")
    return load_scenario(args.config, _config_overrides(args))


def _base_config(args) -> ScenarioConfig:
    """Config for synthesized workloads, honouring --preset and config.* overrides."""
    doc = apply_overrides({"config": {}}, [o for o in _config_overrides(args) if o.startswith("config.")])
    return ScenarioConfig.from_dict(doc["config"])


def _write(out: Path, files: dict[str, str], manifest: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name, text in sorted(files.items()):
        (out / name).write_text(text)
        digests[name] = hashlib.sha256(text.encode()).hexdigest()
    manifest = dict(manifest, code_version=__version__, outputs=digests)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, header, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _command_record(args) -> dict:
    keep = {k: v for k, v in vars(args).items() if k not in ("func", "out_dir", "parallel", "verbose")}
    return {"command": args.command, "arguments": keep}


# -- commands ----------------------------------------------------------------------------

def cmd_run(args) -> int:
    sc = _load(args)
    message = None
    if args.broadcast_at:
        x, y, t = args.broadcast_at
        message = BroadcastMessage(GeoCoord(x, y), t)
    artifacts = run(sc, message)
    out = artifacts.write(_out_dir(args))
    print(f"active RSUs: {len(artifacts.active_ids())}  metrics: {artifacts.final_metrics}")
    print(f"artifacts written to {out}")
    return 0


def _parse_grid(text: str) -> list[tuple[float, float, float]]:
    grid = []
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        vals = [float(v) for v in part.split(",")]
        if len(vals) != 3:
            raise UsageError(f"grid point {part!r} needs kappa,lam,mu")
        grid.append(tuple(vals))
    return grid


def cmd_sweep(args) -> int:
    grid = _parse_grid(args.grid) if args.grid else []
    if args.mu:
        grid += [(1.0, 1.0, float(m)) for m in args.mu.split(",")]
    if args.presets:
        grid += [(p["kappa"], p["lam"], p["mu"]) for _, p in sorted(PRESETS.items())]
    if not grid:
        raise UsageError("empty weights grid: pass --grid, --mu or --presets")
    base_seed = args.seed or 0
    if args.config:
        scenarios = [load_scenario(args.config, list(args.set or []) + [f"config.rng_seed={base_seed + k}"])
                     for k in range(args.seeds)]
    else:
        scenarios = [sweep_scenario(base_seed + k) for k in range(args.seeds)]
    rows = sweep(grid, scenarios, workers=args.parallel)
    header = ["kappa", "lam", "mu", "mean_signal", "mean_saturation", "rsu_count"]
    text = _csv(rows, header)
    _write(_out_dir(args), {"sweep.csv": text}, _command_record(args))
    sys.stdout.write(text)
    return 0


def cmd_compare(args) -> int:
    objective = Objective(args.objective, args.eps, args.alpha)
    if args.fixture == "clustered":
        report = clustered_optimum(objective)
    elif args.config:
        report = compare_greedy_vs_optimal(_load(args), objective, args.cap).to_dict()
    else:
        seeds = range(args.seed or 0, (args.seed or 0) + args.instances)
        report = greedy_vs_optimal_study(seeds, args.candidates, objective, _base_config(args), args.parallel)
    _write(_out_dir(args), {"compare.json": _dump(report)}, _command_record(args))
    brief = {k: v for k, v in report.items() if k != "instances"}
    print(json.dumps(brief, indent=2, sort_keys=True))
    return 0


def cmd_broadcast(args) -> int:
    densities = [float(d) for d in args.densities.split(",")]
    base = args.seed or 0
    study = broadcast_study(densities, range(base, base + args.seeds), args.area, args.duration,
                            args.rsu_ratio, args.parallel)
    rows = reachability_rows(study)
    files = {
        "broadcast_summary.json": _dump({k: v for k, v in study.items() if k != "runs"}),
        "reachability.csv": _csv(rows, ["density", "arm", "seed", "t", "count"]),
    }
    _write(_out_dir(args), files, _command_record(args))
    print(json.dumps(study["summary"], indent=2, sort_keys=True))
    return 0


def cmd_mapbuild(args) -> int:
    densities = [float(d) for d in args.densities.split(",")]
    base = args.seed or 0
    study = map_build_study(densities, range(base, base + args.seeds), args.area, args.duration,
                            args.parked, args.parallel)
    _write(_out_dir(args), {"mapbuild.json": _dump(study)}, _command_record(args))
    print(json.dumps(study["summary"], indent=2, sort_keys=True))
    return 0


def cmd_battery(args) -> int:
    try:
        pct = battery_drain(args.power, args.voltage, args.hours, args.capacity, args.eol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{pct:.4f}")
    return 0


def cmd_validate(args) -> int:
    sc = _load(args)
    print(f"ok: {len(sc.trace.vehicles)} moving vehicles, {len(sc.parked_vehicles)} parked, "
          f"{len(sc.obstructions.polygons)} obstructions, duration {sc.duration:g} s")
    print(f"digest {sc.digest()}")
    return 0


def cmd_synth(args) -> int:
    cfg = _base_config(args)
    sc = synthesize(args.density, args.area, args.duration, args.parked_ratio, args.seed or 0,
                    parked=args.parked, park_window=args.park_window, depart_prob=args.depart_prob, config=cfg)
    path = save_scenario(sc, _out_dir(args))
    print(path)
    return 0


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario YAML file")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (base seed for multi-seed studies)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="dotted override, e.g. config.mu=0.5")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./out)")
    common.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes")
    common.add_argument("--preset", choices=["set1", "set2"], help="named decision weights")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="parkedrsu", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", parents=[common], help="simulate one scenario and write artifacts")
    s.add_argument("--broadcast-at", nargs=3, type=float, metavar=("X", "Y", "T"),
                   help="also disseminate an emergency message from (X, Y) at time T")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="decision weight sweep")
    s.add_argument("--grid", help="semicolon separated kappa,lam,mu triples")
    s.add_argument("--mu", help="comma separated mu values with kappa = lam = 1")
    s.add_argument("--presets", action="store_true", help="add the named presets to the grid")
    s.add_argument("--seeds", type=int, default=5)
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("compare", parents=[common], help="greedy selection versus exhaustive optimum")
    s.add_argument("--instances", type=int, default=30)
    s.add_argument("--candidates", type=int, default=12)
    s.add_argument("--fixture", choices=["clustered"], help="run the 24-car clustered fixture instead")
    s.add_argument("--objective", choices=["lexicographic", "scalarized"], default="lexicographic")
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--cap", type=int, default=24)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("broadcast", parents=[common], help="reachability with and without parked RSUs")
    s.add_argument("--densities", default="20,40,80")
    s.add_argument("--seeds", type=int, default=50)
    s.add_argument("--area", type=float, default=1.0, help="km^2")
    s.add_argument("--duration", type=float, default=2000.0)
    s.add_argument("--rsu-ratio", type=float, default=0.1)
    s.set_defaults(func=cmd_broadcast)

    s = sub.add_parser("mapbuild", parents=[common], help="time to 80%% map completeness per density")
    s.add_argument("--densities", default="20,40,80")
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--area", type=float, default=1.0)
    s.add_argument("--duration", type=float, default=1500.0)
    s.add_argument("--parked", type=int, default=10)
    s.set_defaults(func=cmd_mapbuild)

    s = sub.add_parser("battery", help="battery drain of a radio left on while parked")
    s.add_argument("--power", type=float, default=3.0, help="W")
    s.add_argument("--voltage", type=float, default=12.0, help="V")
    s.add_argument("--hours", type=float, default=6.64)
    s.add_argument("--capacity", type=float, default=60.0, help="Ah")
    s.add_argument("--eol", type=float, default=1.0, help="remaining capacity fraction")
    s.set_defaults(func=cmd_battery)

    s = sub.add_parser("validate", parents=[common], help="load and check a scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic Manhattan-grid scenario")
    s.add_argument("--density", type=float, default=40.0, help="moving vehicles per km^2")
    s.add_argument("--area", type=float, default=0.25)
    s.add_argument("--duration", type=float, default=900.0)
    s.add_argument("--parked-ratio", type=float, default=0.1)
    s.add_argument("--parked", type=int)
    s.add_argument("--park-window", type=float, default=0.0)
    s.add_argument("--depart-prob", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "parallel", 1) < 1:
        print("error: --parallel must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ScenarioError, UsageError, TooManyCandidates, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationInvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
