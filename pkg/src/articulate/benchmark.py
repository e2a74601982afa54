"""Seeded benchmark harnesses: language-task success rates and joint-estimation accuracy."""

from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import OrientedBox, Pose, Rotation, rotation_about_line, sample_box_surface
from .joint_estimation import (
    EstimateKind,
    JointEstimate,
    KindMismatch,
    NoConsensus,
    PoseErrorReport,
    RansacParams,
    a5,
    a10,
    infer_joint,
    pose_errors,
    ransac_align,
)
from .planner import PlannerConfig, mock_backend, run_global_plan
from .scene_model import ArticulatedObject, load_scene
from .simulator import SimConfig


# -- task specs --------------------------------------------------------------------

@dataclass(frozen=True)
class TaskSpec:
    id: int
    category: str
    scene_files: tuple[str, ...]
    instruction_variants: tuple[str, ...]
    target_part: str
    target_delta: float | None = None  # joint-space change; or
    target_state: float | None = None  # absolute joint state to reach
    init_state_sampler: dict[str, tuple[float, float]] = field(default_factory=dict)
    trials: int = 20
    name: str = ""
    manual: str | None = None
    required_effect: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"task {self.id}: trials must be >= 1")
        if not self.scene_files:
            raise ValueError(f"task {self.id}: no scene files")
        if not self.instruction_variants:
            raise ValueError(f"task {self.id}: no instruction variants")
        if (self.target_delta is None) == (self.target_state is None):
            raise ValueError(f"task {self.id}: give exactly one of target delta or to_state")
        for part, (lo, hi) in self.init_state_sampler.items():
            if not lo <= hi:
                raise ValueError(f"task {self.id}: empty init range for {part!r}")

    def check_against(self, obj: ArticulatedObject) -> None:
        """Raise ValueError unless every sampled range lies within the joint limits."""
        for part, (lo, hi) in self.init_state_sampler.items():
            joint = obj.part(part).joint
            if joint is None:
                raise ValueError(f"task {self.id}: {part!r} has no joint")
            jl, jh = joint.limits
            if lo < jl or hi > jh:
                raise ValueError(f"task {self.id}: range [{lo}, {hi}] for {part!r} exceeds limits [{jl}, {jh}]")
        obj.part(self.target_part)

    def goal(self, initial_state: float) -> float:
        if self.target_delta is not None:
            return self.target_delta
        return self.target_state - initial_state

    @classmethod
    def from_json(cls, doc: dict, base: Path | None = None) -> TaskSpec:
        files = doc.get("scene_files") or [doc["scene_file"]]
        target = doc["target"]
        return cls(
            id=int(doc["id"]),
            category=doc["category"],
            scene_files=tuple(_resolve_scene(f, base) for f in files),
            instruction_variants=tuple(doc["instruction_variants"]),
            target_part=target["part"],
            target_delta=target.get("delta"),
            target_state=target.get("to_state"),
            init_state_sampler={k: (float(v[0]), float(v[1])) for k, v in doc.get("init_state_sampler", {}).items()},
            trials=int(doc.get("trials", 20)),
            name=doc.get("name", ""),
            manual=doc.get("manual"),
            required_effect=doc.get("required_effect"),
        )


def _resolve_scene(name: str, base: Path | None) -> str:
    p = Path(name)
    if p.is_absolute():
        return str(p)
    if base is not None and (base / p).exists():
        return str(base / p)
    bundled = Path(str(resources.files("articulate") / "data" / "scenes")) / p.name
    return str(bundled if bundled.exists() else p)


def load_bench(path: str | Path | None = None) -> tuple[list[TaskSpec], Path]:
    """Task specs plus the resolved rules path from a bench document (bundled one by default)."""
    data_dir = Path(str(resources.files("articulate") / "data"))
    path = Path(path) if path is not None else data_dir / "bench.json"
    doc = json.loads(path.read_text())
    base = path.parent
    rules = Path(doc.get("rules", "rules.json"))
    if not rules.is_absolute():
        rules = base / rules if (base / rules).exists() else data_dir / rules.name
    return [TaskSpec.from_json(t, base) for t in doc["tasks"]], rules


# -- success-rate benchmark -----------------------------------------------------------

@dataclass
class TaskRow:
    id: int
    category: str
    name: str
    successes: int
    trials: int

    @property
    def rate(self) -> float:
        return 100.0 * self.successes / self.trials


@dataclass
class SuccessRateReport:
    tasks: list[TaskRow]
    trial_logs: list[dict]

    @property
    def categories(self) -> dict[str, float]:
        out: dict[str, list[int]] = {}
        for row in self.tasks:
            acc = out.setdefault(row.category, [0, 0])
            acc[0] += row.successes
            acc[1] += row.trials
        return {c: 100.0 * s / n for c, (s, n) in out.items()}

    def to_json(self) -> dict:
        return {
            "tasks": [{"id": r.id, "category": r.category, "name": r.name, "successes": r.successes,
                       "trials": r.trials, "success_pct": round(r.rate, 1)} for r in self.tasks],
            "categories": {c: round(v, 1) for c, v in self.categories.items()},
            "trials": self.trial_logs,
        }

    def to_table(self) -> str:
        """Category / Task ID / Success (%) rows, one column per task."""
        cat_cells, id_cells, rate_cells = [], [], []
        prev = None
        for r in self.tasks:
            cat_cells.append(r.category if r.category != prev else "")
            prev = r.category
            id_cells.append(str(r.id))
            rate_cells.append(f"{r.rate:.1f}")
        widths = [max(len(a), len(b), len(c)) for a, b, c in zip(cat_cells, id_cells, rate_cells)]
        head = max(len("Success (%)"), len("Category"), len("Task ID"))

        def line(label, cells):
            return " | ".join([label.ljust(head)] + [c.rjust(w) for c, w in zip(cells, widths)])

        return "\n".join([line("Category", cat_cells), line("Task ID", id_cells), line("Success (%)", rate_cells)])


def _trial_rng(seed: int, task_id: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, task_id, trial]))


def run_trial(spec: TaskSpec, trial: int, rules, sim_cfg: SimConfig, planner_cfg: PlannerConfig, seed: int) -> dict:
    """One seeded trial; any exception is recorded as a failure."""
    rng = _trial_rng(seed, spec.id, trial)
    scene_file = spec.scene_files[int(rng.integers(len(spec.scene_files)))]
    instruction = spec.instruction_variants[int(rng.integers(len(spec.instruction_variants)))]
    log = {"task": spec.id, "trial": trial, "scene": Path(scene_file).name, "instruction": instruction}
    try:
        base = load_scene(scene_file)
        spec.check_against(base)
        states = dict(base.states)
        for part in sorted(spec.init_state_sampler):
            lo, hi = spec.init_state_sampler[part]
            states[part] = float(rng.uniform(lo, hi))
        obj = ArticulatedObject(base.name, base.parts, base.latches, base.effects, states)
        log["init_states"] = {k: states[k] for k in sorted(spec.init_state_sampler)}
        delta = spec.goal(states[spec.target_part])
        result = run_global_plan(
            obj, instruction, mock_backend(rules), None, sim_cfg, int(rng.integers(2**31)),
            manual=spec.manual, target=(spec.target_part, delta), required_effect=spec.required_effect,
            cfg=planner_cfg,
        )
        log.update(success=result.verdict, strategies=len(result.strategies_tried),
                   backend_calls=result.backend_calls, steps=result.steps)
        if result.errors:
            log["errors"] = result.errors
    except Exception as e:  # noqa: BLE001 - the harness must not abort mid-run
        log.update(success=False, errors=[f"{type(e).__name__}: {e}"])
    return log


def run_benchmark(
    specs: Sequence[TaskSpec],
    rules,
    sim_cfg: SimConfig = SimConfig(),
    seed: int = 0,
    *,
    planner_cfg: PlannerConfig = PlannerConfig(),
    workers: int = 1,
) -> SuccessRateReport:
    """Run every task's trials; trial seeds derive from (seed, task id, trial index),
    so the report does not depend on `workers`."""
    if isinstance(rules, (str, Path)):
        rules = json.loads(Path(rules).read_text())
    jobs = [(s, t) for s in specs for t in range(s.trials)]

    def go(job):
        spec, t = job
        return run_trial(spec, t, rules, sim_cfg, planner_cfg, seed)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            logs = list(pool.map(go, jobs))
    else:
        logs = [go(j) for j in jobs]
    rows = []
    for s in specs:
        ok = sum(1 for lg in logs if lg["task"] == s.id and lg["success"])
        rows.append(TaskRow(s.id, s.category, s.name, ok, s.trials))
    return SuccessRateReport(rows, logs)


# -- estimation benchmark --------------------------------------------------------------

@dataclass
class EstimationCell:
    noise: float
    outliers: float
    reports: list[PoseErrorReport]
    kind_errors: int

    def _median(self, attr: str, missing: float = math.nan) -> float:
        vals = [getattr(r, attr) for r in self.reports]
        vals = [missing if v is None else v for v in vals]
        return statistics.median(vals) if vals else math.nan

    def to_json(self) -> dict:
        return {
            "noise": self.noise,
            "outliers": self.outliers,
            "trials": len(self.reports),
            "median_rotation_deg": self._median("rotation_deg"),
            "median_translation_m": self._median("translation_m"),
            "median_axis_deg": self._median("axis_deg"),
            "median_axis_distance_m": self._median("axis_distance_m", math.inf),
            "median_displacement_error": self._median("displacement", math.inf),
            "a5": a5(self.reports),
            "a10": a10(self.reports),
            "kind_errors": self.kind_errors,
        }


@dataclass
class EstimationReport:
    cells: list[EstimationCell]

    def cell(self, noise: float, outliers: float) -> EstimationCell:
        for c in self.cells:
            if c.noise == noise and c.outliers == outliers:
                return c
        raise KeyError((noise, outliers))

    def to_json(self) -> dict:
        return {"cells": [c.to_json() for c in self.cells]}

    def to_table(self) -> str:
        cols = ["noise", "outliers", "trials", "median_axis_deg", "median_rotation_deg", "a5", "a10", "kind_errors"]
        rows = [[f"{v:.4g}" if isinstance(v, float) else str(v) for v in (c.to_json()[k] for k in cols)]
                for c in self.cells]
        widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(cols)]
        out = [" | ".join(h.rjust(w) for h, w in zip(cols, widths))]
        out += [" | ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
        return "\n".join(out)


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def synthetic_motion(rng: np.random.Generator, revolute: bool) -> tuple[OrientedBox, Pose, JointEstimate]:
    """Random box part and a ground-truth joint motion applied to it."""
    box = OrientedBox(
        rng.uniform(-0.5, 0.5, 3),
        rng.uniform(0.05, 0.3, 3),
        Rotation.from_axis_angle(_unit(rng), rng.uniform(0, math.pi)),
    )
    axis = _unit(rng)
    if revolute:
        angle = math.radians(rng.uniform(15.0, 90.0))
        pivot = box.center + rng.uniform(-0.3, 0.3, 3)
        motion = rotation_about_line(pivot, axis, angle)
        truth = JointEstimate(EstimateKind.REVOLUTE, axis, pivot, angle)
    else:
        dist = rng.uniform(0.05, 0.4)
        motion = Pose(Rotation.identity(), axis * dist)
        truth = JointEstimate(EstimateKind.PRISMATIC, axis, None, dist)
    return box, motion, truth


def _corrupt(pts: np.ndarray, sigma: float, frac: float, lo, hi, rng) -> np.ndarray:
    out = pts + rng.normal(scale=sigma, size=pts.shape) if sigma > 0 else pts.copy()
    m = int(round(frac * len(pts)))
    if m:
        idx = rng.choice(len(pts), size=m, replace=False)
        out[idx] = rng.uniform(lo, hi, size=(m, 3))
    return out


def estimation_benchmark(
    n_trials: int,
    noise_grid: Sequence[float],
    outlier_grid: Sequence[float],
    seed: int = 0,
    *,
    points: int = 500,
    ransac: RansacParams = RansacParams(),
) -> EstimationReport:
    """Interactive-perception accuracy per (noise sigma, outlier fraction) cell.

    Trial t draws the same motion in every cell, so cells are paired. The
    inlier threshold widens to 5 sigma when noise would otherwise swamp it.
    """
    cells = []
    for sigma in noise_grid:
        for frac in outlier_grid:
            reports, kind_errors = [], 0
            for t in range(n_trials):
                rng = np.random.default_rng([seed, t])
                box, motion, truth = synthetic_motion(rng, revolute=(t % 2 == 0))
                x0 = sample_box_surface(box, points, seed=int(rng.integers(2**31)))
                xt = motion.apply(x0)
                both = np.vstack([x0, xt])
                lo, hi = both.min(axis=0), both.max(axis=0)
                crng = np.random.default_rng([seed, t, 1])
                y0 = _corrupt(x0, sigma, frac, lo, hi, crng)
                yt = _corrupt(xt, sigma, frac, lo, hi, crng)
                params = RansacParams(ransac.iterations, max(ransac.inlier_threshold, 5 * sigma),
                                      ransac.min_sample, seed + t)
                try:
                    rigid = ransac_align(y0, yt, params)
                except NoConsensus:
                    kind_errors += 1
                    reports.append(PoseErrorReport(rotation_deg=180.0, translation_m=math.inf, axis_deg=90.0))
                    continue
                est = infer_joint(rigid, y0.mean(axis=0), axis_hint=truth.axis_dir)
                rep = pose_errors(rigid, motion)
                try:
                    jrep = pose_errors(est, truth)
                    rep.axis_deg, rep.axis_distance_m, rep.displacement = (
                        jrep.axis_deg, jrep.axis_distance_m, jrep.displacement)
                except KindMismatch:
                    kind_errors += 1
                    rep.axis_deg = 90.0
                reports.append(rep)
            cells.append(EstimationCell(float(sigma), float(frac), reports, kind_errors))
    return EstimationReport(cells)
