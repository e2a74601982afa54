"""Command-line entry point: `articulate <subcommand> ...`."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import action_program as ap
from .benchmark import estimation_benchmark, load_bench, run_benchmark
from .geometry import read_xyz
from .joint_estimation import RansacParams, interactive_perception
from .part_grounding import FeatureStore, knn_ground
from .planner import mock_backend, resolve_part, run_global_plan
from .scene_model import bundled_scene_path, load_scene
from .simulator import SimConfig, write_event_log
from .trajectory import generate_trajectory, grasp_target


def _rules_default() -> Path:
    return Path(str(resources.files("articulate") / "data" / "rules.json"))


def _scene(value: str):
    """A scene file path, or the name of a bundled scene."""
    p = Path(value)
    return load_scene(p if p.exists() else bundled_scene_path(value))


def _table(pairs: dict) -> str:
    width = max((len(k) for k in pairs), default=0)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in pairs.items())


def _text_or_file(value: str | None) -> str | None:
    if value is None:
        return None
    if value == "-":
        return sys.stdin.read()
    p = Path(value)
    return p.read_text() if p.is_file() else value


# -- subcommands: each returns (json document, table text) ------------------------

def cmd_parse_program(args):
    text = _text_or_file(args.program)
    sset = ap.parse_strategies(text)
    return ap.strategies_to_json(sset), ap.serialize_strategies(sset)


def cmd_estimate_joint(args):
    x0, xt = read_xyz(args.x0), read_xyz(args.xt)
    p = RansacParams(args.iterations, args.threshold, seed=args.seed)
    kwargs = {}
    if args.axis_hint:
        kwargs["axis_hint"] = [float(c) for c in args.axis_hint.split(",")]
    est = interactive_perception(x0, xt, p, **kwargs)
    doc = est.to_json()
    return doc, _table({k: v for k, v in doc.items()})


def cmd_ground(args):
    store = FeatureStore.load_jsonl(args.store)
    q = json.loads(_text_or_file(args.query))
    label, votes = knn_ground(store, np.asarray(q, dtype=float), args.k)
    doc = {"label": label.value, "votes": {k.value: v for k, v in votes.items()}}
    return doc, _table({"label": label.hyphenated, **{f"votes[{k.hyphenated}]": v for k, v in votes.items()}})


def cmd_plan_traj(args):
    obj = _scene(args.scene)
    part = resolve_part(obj, args.part)
    act = obj.actuator(part.id)
    if act is None:
        raise ValueError(f"part {part.id!r} is not articulated")
    joint = obj.world_joint(act)
    _, grasp = grasp_target(part, obj)
    extent = obj.part_box(act).extent_along(joint.axis_dir)
    traj = generate_trajectory(grasp, joint, args.delta, extent=extent, state=obj.states[act])
    doc = {"part": part.id, "actuator": act, "joint_delta": traj.joint_delta,
           "clamped": traj.clamped, "waypoints": traj.to_json()}
    last = traj.waypoints[-1].pose.translation
    return doc, _table({"part": part.id, "actuator": act, "joint_delta": f"{traj.joint_delta:.6g}",
                        "clamped": traj.clamped, "waypoints": len(traj),
                        "final_position": ", ".join(f"{c:.5f}" for c in last)})


def cmd_run_task(args):
    obj = _scene(args.scene)
    backend = mock_backend(args.rules or _rules_default())
    cfg = SimConfig(obs_noise=args.obs_noise)
    result = run_global_plan(obj, args.instruction, backend, None, cfg, args.seed,
                             manual=_text_or_file(args.manual))
    if args.log:
        write_event_log(args.log, result.events)
    doc = result.to_json()
    return doc, _table({
        "verdict": "success" if result.verdict else "failure",
        "strategies tried": len(result.strategies_tried),
        "backend calls": result.backend_calls,
        "steps": result.steps,
        "effects": ", ".join(result.effects_seen) or "-",
        "failure notes": "; ".join(result.failure_notes) or "-",
    })


def cmd_bench(args):
    specs, rules = load_bench(args.specs)
    if args.rules:
        rules = Path(args.rules)
    if args.trials:
        from dataclasses import replace

        specs = [replace(s, trials=args.trials) for s in specs]
    report = run_benchmark(specs, rules, SimConfig(), args.seed, workers=args.workers)
    return report.to_json(), report.to_table()


def cmd_metrics(args):
    noise = [float(x) for x in args.noise.split(",")] if args.noise else []
    outliers = [float(x) for x in args.outliers.split(",")] if args.outliers else []
    report = estimation_benchmark(args.trials, noise, outliers, args.seed, points=args.points)
    return report.to_json(), report.to_table()


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="write the output here instead of stdout")
    common.add_argument("--format", choices=["json", "table"], default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="articulate", parents=[common],
                                     description="Language-guided articulated-object manipulation toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse-program", parents=[common], help="parse and normalize strategy text")
    p.add_argument("program", help="strategy text, a file path, or - for stdin")
    p.set_defaults(func=cmd_parse_program)

    p = sub.add_parser("estimate-joint", parents=[common], help="joint from two corresponded .xyz clouds")
    p.add_argument("--x0", "--before", dest="x0", required=True)
    p.add_argument("--xt", "--after", dest="xt", required=True)
    p.add_argument("--iterations", "--iters", dest="iterations", type=int, default=256)
    p.add_argument("--threshold", "--thresh", dest="threshold", type=float, default=0.005)
    p.add_argument("--axis-hint", help="x,y,z direction that fixes the reported axis sign")
    p.set_defaults(func=cmd_estimate_joint)

    p = sub.add_parser("ground", parents=[common], help="KNN class of a feature vector")
    p.add_argument("--store", required=True, help="JSONL of {label, vector}")
    p.add_argument("--query", required=True, help="JSON vector, a file holding one, or -")
    p.add_argument("-k", type=int, default=5)
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("plan-traj", parents=[common], help="grasp and waypoints for one action unit")
    p.add_argument("--scene", required=True)
    p.add_argument("--part", required=True)
    p.add_argument("--delta", type=float, required=True, help="degrees, or fraction of extent")
    p.set_defaults(func=cmd_plan_traj)

    p = sub.add_parser("run-task", parents=[common], help="run one instruction through the planner")
    p.add_argument("--scene", required=True)
    p.add_argument("--instruction", required=True)
    p.add_argument("--rules", help="mock-backend rule table (bundled one by default)")
    p.add_argument("--manual", help="manual text or file")
    p.add_argument("--log", help="write the event log as JSONL")
    p.add_argument("--obs-noise", type=float, default=0.0)
    p.set_defaults(func=cmd_run_task)

    p = sub.add_parser("bench", parents=[common], help="success-rate benchmark")
    p.add_argument("--specs", help="bench document (bundled one by default)")
    p.add_argument("--rules")
    p.add_argument("--trials", type=int, help="override trials per task")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("metrics", parents=[common], help="joint-estimation accuracy grid")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--noise", default="0,0.002", help="comma-separated sigmas in metres")
    p.add_argument("--outliers", default="0,0.2", help="comma-separated outlier fractions")
    p.add_argument("--points", type=int, default=500)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    args.seed = getattr(args, "seed", 0)
    fmt = getattr(args, "format", "json")
    out = getattr(args, "out", None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        doc, table = args.func(args)
    except (ValueError, LookupError, OSError, ap.StrategySyntaxError) as e:
        print(f"articulate {args.command}: error: {e}", file=sys.stderr)
        return 2
    text = json.dumps(doc, indent=2, sort_keys=True) if fmt == "json" else table
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
