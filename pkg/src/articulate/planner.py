"""Instruction interpretation and the replanning global planner.

The loop: describe the scene, ask a backend for strategies, then execute
strategies in preference order. Each action unit is grounded to a part,
turned into a trajectory and executed while interactive perception feeds a
four-way decision rule (continue / next step / halt and replan / success).
A halted strategy triggers one backend re-query carrying a failure note.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import re
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .action_program import ActionUnit, JointKind, Strategy, StrategySyntaxError, parse_strategies
from .joint_estimation import (
    DegenerateInput,
    EstimateKind,
    NoConsensus,
    RansacParams,
    interactive_perception,
)
from .part_grounding import FeatureMap, FeatureStore, GAPartClass, knn_ground, max_pool
from .scene_model import ArticulatedObject, Part, part_histogram
from .simulator import Episode, Outcome, SimConfig
from .trajectory import NoGraspSite, ZeroDelta, generate_trajectory, grasp_target

log = logging.getLogger(__name__)


class BackendFormatError(ValueError):
    pass


class NoRuleMatched(LookupError):
    pass


class NoStrategies(RuntimeError):
    pass


class GroundingError(LookupError):
    pass


# -- scene description ----------------------------------------------------------

@dataclass(frozen=True)
class SceneDescription:
    text: str
    histogram: dict[GAPartClass, int]
    object_name: str


def describe_histogram(hist: dict[GAPartClass, int]) -> str:
    items = [f"{hist[c]} {c.hyphenated}" for c in GAPartClass if hist.get(c)]
    if not items:
        return "There are no actionable parts on the object."
    listing = items[0] if len(items) == 1 else ", ".join(items[:-1]) + " and " + items[-1]
    return f"There are {listing} on the object."


def build_scene_description(obj: ArticulatedObject) -> SceneDescription:
    hist = part_histogram(obj)
    return SceneDescription(describe_histogram(hist), hist, obj.name)


# -- backends ------------------------------------------------------------------------

class InterpreterBackend(Protocol):
    def interpret_text(
        self, instruction: str, description: str, manual: str | None = None, failure_note: str | None = None
    ) -> str: ...


@dataclass(frozen=True)
class MockRule:
    instruction_regex: str
    strategies: str
    requires_classes: tuple[GAPartClass, ...] = ()
    failure_regex: str | None = None
    manual_regex: str | None = None

    def matches(self, instruction: str, description: str, manual: str | None, failure_note: str | None) -> bool:
        if not re.search(self.instruction_regex, instruction, re.IGNORECASE):
            return False
        if any(c.hyphenated not in description for c in self.requires_classes):
            return False
        if self.failure_regex is None:
            if failure_note is not None:
                return False
        elif failure_note is None or not re.search(self.failure_regex, failure_note, re.IGNORECASE):
            return False
        if self.manual_regex is not None:
            if manual is None or not re.search(self.manual_regex, manual, re.IGNORECASE):
                return False
        return True


class MockBackend:
    """Table-driven stand-in for the language model; first matching rule wins."""

    def __init__(self, rules: Sequence[MockRule]):
        self.rules = list(rules)
        self.calls: list[dict] = []

    def interpret_text(self, instruction, description, manual=None, failure_note=None) -> str:
        self.calls.append({"instruction": instruction, "description": description,
                           "manual": manual, "failure_note": failure_note})
        for rule in self.rules:
            if rule.matches(instruction, description, manual, failure_note):
                return rule.strategies
        raise NoRuleMatched(f"no rule for instruction {instruction!r} (failure note: {failure_note!r})")


def mock_backend(rules) -> MockBackend:
    """Build a MockBackend from a rule document: a JSON array (or path to one)
    of {"instruction_regex", "requires_classes", "failure_regex"?, "manual_regex"?, "strategies"}."""
    if isinstance(rules, (str, Path)):
        rules = json.loads(Path(rules).read_text())
    parsed = []
    for i, r in enumerate(rules):
        try:
            parsed.append(MockRule(
                r["instruction_regex"], r["strategies"],
                tuple(GAPartClass.parse(c) for c in r.get("requires_classes", [])),
                r.get("failure_regex"), r.get("manual_regex"),
            ))
        except (KeyError, ValueError) as e:
            raise ValueError(f"rule {i}: {e}") from None
    return MockBackend(parsed)


def compose_prompt(instruction: str, description: str, manual: str | None = None, failure_note: str | None = None) -> str:
    parts = [f"Instruction: {instruction} Description: {description}"]
    if manual:
        parts.append(f"User manual:\n{manual}")
    if failure_note:
        parts.append(f"Failure: {failure_note}")
    return "\n".join(parts)


class HttpBackend:
    """Text-generation service speaking {"prompt": str} -> {"text": str} over HTTP POST."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def interpret_text(self, instruction, description, manual=None, failure_note=None) -> str:
        body = json.dumps({"prompt": compose_prompt(instruction, description, manual, failure_note)}).encode()
        req = urllib.request.Request(self.url, data=body, headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            doc = json.loads(resp.read().decode())
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise BackendFormatError("response lacks a 'text' string")
        return doc["text"]


def interpret(backend: InterpreterBackend, instruction, description, manual=None, failure_note=None):
    text = backend.interpret_text(instruction, description, manual, failure_note)
    try:
        return parse_strategies(text)
    except StrategySyntaxError as e:
        raise BackendFormatError(f"backend output does not parse: {e}") from e


# -- decision rule ----------------------------------------------------------------

_SLACK = 1e-9


class Decision(enum.Enum):
    CONTINUE = "continue"
    TRANSITION = "transition to the next step"
    HALT_AND_REPLAN = "halt and replan"
    SUCCESS = "success"


@dataclass(frozen=True)
class PlannerConfig:
    done_frac: float = 0.1
    check_frac: float = 0.2
    follow_frac: float = 0.5
    observe_every: int = 20
    max_strategies: int = 8
    ransac: RansacParams = RansacParams(iterations=64)
    # perception floors for the feedback loop; observations are clean by default
    min_angle: float = 0.015
    min_translation: float = 0.001


@dataclass(frozen=True)
class PlannerObservation:
    gripper_target: float
    gripper_progress: float
    part_target: float
    part_estimate: float
    unit_index: int = 1  # 1-based
    unit_count: int = 1

    def __post_init__(self):
        vals = (self.gripper_target, self.gripper_progress, self.part_target, self.part_estimate)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("observation values must be finite")
        if not 1 <= self.unit_index <= self.unit_count:
            raise ValueError("unit_index out of range")


def decide(obs: PlannerObservation, cfg: PlannerConfig = PlannerConfig()) -> Decision:
    """Ratio rules on progress measured along the target's direction."""
    sign = math.copysign(1.0, obs.part_target if obs.part_target != 0 else obs.gripper_target)
    g_target, s_target = abs(obs.gripper_target), abs(obs.part_target)
    # compare ratios to the targets with a small slack so rescaling the
    # observation cannot flip a decision through rounding at a boundary
    s_est = sign * obs.part_estimate
    if s_target == 0:
        done = s_est == 0
    else:
        done = abs(s_est / s_target - 1.0) <= cfg.done_frac + _SLACK
    if done:
        return Decision.SUCCESS if obs.unit_index == obs.unit_count else Decision.TRANSITION
    if g_target > 0:
        g_ratio = sign * obs.gripper_progress / g_target
        if g_ratio >= cfg.check_frac - _SLACK and s_est / g_target < cfg.follow_frac * g_ratio - _SLACK:
            return Decision.HALT_AND_REPLAN
    return Decision.CONTINUE


# -- grounding ----------------------------------------------------------------------

SYNONYMS: dict[str, tuple[GAPartClass, ...]] = {
    "door": (GAPartClass.HINGE_DOOR,),
    "drawer": (GAPartClass.SLIDER_DRAWER,),
    "button": (GAPartClass.SLIDER_BUTTON,),
    "handle": (GAPartClass.LINE_FIXED_HANDLE, GAPartClass.ROUND_FIXED_HANDLE),
    "lid": (GAPartClass.HINGE_LID, GAPartClass.SLIDER_LID),
    "knob": (GAPartClass.HINGE_KNOB,),
}


@dataclass
class Grounding:
    """Feature route for names the scene doesn't use: a reference store plus
    the pooled (or poolable) feature observed for each queried name."""

    store: FeatureStore
    features: dict[str, np.ndarray | FeatureMap] = field(default_factory=dict)
    k: int = 5


def resolve_part(obj: ArticulatedObject, name: str, grounding: Grounding | None = None) -> Part:
    key = name.strip().lower()
    for p in obj.parts:
        if p.semantic_name.lower() == key or p.id.lower() == key:
            return p
    syn = SYNONYMS.get(key) or SYNONYMS.get(key.rstrip("s"))
    for cls in syn or ():
        for p in obj.parts:
            if p.gapart_class is cls:
                return p
    if grounding is not None and key in grounding.features:
        feat = grounding.features[key]
        vec = max_pool(feat) if isinstance(feat, FeatureMap) else np.asarray(feat, dtype=float)
        label, _ = knn_ground(grounding.store, vec, min(grounding.k, len(grounding.store)))
        for p in obj.parts:
            if p.gapart_class is label:
                return p
        raise GroundingError(f"{name!r} grounded to {label.value}, which the object lacks")
    raise GroundingError(f"cannot ground part {name!r}")


# -- the loop -----------------------------------------------------------------------

@dataclass
class TaskResult:
    verdict: bool
    strategies_tried: list[Strategy] = field(default_factory=list)
    decisions: list[dict] = field(default_factory=list)
    backend_calls: int = 0
    failure_notes: list[str] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    effects_seen: list[str] = field(default_factory=list)
    final_states: dict[str, float] = field(default_factory=dict)
    steps: int = 0
    events: list[dict] = field(default_factory=list)

    def to_json(self, with_events: bool = False) -> dict:
        from .action_program import format_strategy

        doc = {
            "verdict": self.verdict,
            "strategies_tried": [format_strategy(s) for s in self.strategies_tried],
            "decisions": self.decisions,
            "backend_calls": self.backend_calls,
            "failure_notes": self.failure_notes,
            "errors": self.errors,
            "effects_seen": self.effects_seen,
            "final_states": self.final_states,
            "steps": self.steps,
        }
        if with_events:
            doc["events"] = self.events
        return doc


def failure_note(unit: ActionUnit, part: Part | None = None) -> str:
    if part is not None and part.gapart_class is GAPartClass.SLIDER_BUTTON:
        verb = "pressing"
    else:
        verb = "opening" if unit.delta > 0 else "closing"
    return f"It fails when {verb} the {unit.part_name.lower()}"


class _UnitFailed(Exception):
    pass


def _estimate_progress(x0, xt, hint, kind: JointKind, target: float, cfg: PlannerConfig) -> float:
    """Signed progress along `hint` as seen by interactive perception."""
    # the halt rule first looks at check_frac of the target; motion that small
    # must clear the stationary floor or tiny units (button presses) never register
    floor = 0.5 * cfg.check_frac * abs(target)
    try:
        est = interactive_perception(
            x0, xt, cfg.ransac, axis_hint=hint,
            min_angle=min(cfg.min_angle, floor), min_translation=min(cfg.min_translation, floor),
        )
    except (DegenerateInput, NoConsensus):
        return 0.0
    want = EstimateKind.REVOLUTE if kind is JointKind.REVOLUTE else EstimateKind.PRISMATIC
    return est.displacement if est.kind is want else 0.0


def _execute_unit(ep: Episode, unit: ActionUnit, index: int, count: int, grounding, cfg: PlannerConfig,
                  decisions: list, strategy_no: int) -> tuple[Decision, str, float, Part]:
    """Run one action unit. Returns (final decision, actuated part id, applied delta, part)."""
    obj = ep.object
    try:
        part = resolve_part(obj, unit.part_name, grounding)
    except GroundingError as e:
        raise _UnitFailed(str(e)) from None
    act = obj.actuator(part.id)
    if act is None:
        raise _UnitFailed(f"part {part.id!r} is not articulated")
    joint = obj.world_joint(act)
    if joint.kind is not unit.joint:
        raise _UnitFailed(f"{unit.part_name} moves on a {joint.kind.value} joint, not {unit.joint.value}")
    try:
        held, gpose = grasp_target(part, obj)
    except NoGraspSite as e:
        raise _UnitFailed(str(e)) from None
    ep.move_to(gpose)
    if ep.grasp(held) is not Outcome.OK:
        raise _UnitFailed(f"could not grasp {held!r}")
    extent = obj.part_box(act).extent_along(joint.axis_dir) if joint.kind is JointKind.PRISMATIC else None
    try:
        traj = generate_trajectory(gpose, joint, unit.delta, extent=extent, state=obj.states[act])
    except ZeroDelta as e:
        ep.release()
        raise _UnitFailed(str(e)) from None
    target = traj.joint_delta
    done = Decision.SUCCESS if index == count else Decision.TRANSITION
    if target == 0:
        decisions.append({"strategy": strategy_no, "unit": index, "step": ep.step_count, "decision": done.value})
        return done, act, target, part

    hint = joint.axis_dir * math.copysign(1.0, target)
    sign = math.copysign(1.0, target)
    n = len(traj.waypoints) - 1
    x0 = ep.observe(act)
    decision = Decision.CONTINUE
    for i, (out, _) in enumerate(ep.iter_trajectory(traj), 1):
        if out is Outcome.SLIPPED:
            decision = Decision.HALT_AND_REPLAN
            decisions.append({"strategy": strategy_no, "unit": index, "step": ep.step_count,
                              "decision": decision.value, "reason": "slipped"})
            break
        if i % cfg.observe_every and i != n:
            continue
        progress = _estimate_progress(x0, ep.observe(act), hint, unit.joint, target, cfg)
        obs = PlannerObservation(target, target * i / n, target, sign * progress, index, count)
        decision = decide(obs, cfg)
        if decision is not Decision.CONTINUE:
            decisions.append({"strategy": strategy_no, "unit": index, "step": ep.step_count,
                              "decision": decision.value, "estimate": sign * progress, "target": target})
            break
    else:
        # trajectory exhausted without reaching the target
        decision = Decision.HALT_AND_REPLAN
        decisions.append({"strategy": strategy_no, "unit": index, "step": ep.step_count,
                          "decision": decision.value, "reason": "trajectory exhausted"})
    return decision, act, target, part


def run_global_plan(
    obj: ArticulatedObject,
    instruction: str,
    backend: InterpreterBackend,
    grounding: Grounding | None = None,
    sim_cfg: SimConfig = SimConfig(),
    seed: int = 0,
    *,
    manual: str | None = None,
    target: tuple[str, float] | None = None,
    required_effect: str | None = None,
    cfg: PlannerConfig = PlannerConfig(),
) -> TaskResult:
    """Perceive-decide-execute-feedback loop for one instruction.

    `target` (part id, joint-space delta) is the ground-truth goal checked by
    the simulator; without it the last executed unit's goal is used.
    """
    desc = build_scene_description(obj)
    ep = Episode(obj, sim_cfg, seed)
    result = TaskResult(verdict=False)
    result.backend_calls = 1
    strategies = list(interpret(backend, instruction, desc.text, manual))
    if not strategies:
        raise NoStrategies(instruction)

    queue = list(strategies)
    pos = 0
    while pos < len(queue) and len(result.strategies_tried) < cfg.max_strategies:
        strat = queue[pos]
        pos += 1
        result.strategies_tried.append(strat)
        no = len(result.strategies_tried)
        failed_unit: tuple[ActionUnit, Part | None] | None = None
        verdict = False
        for ui, unit in enumerate(strat.steps, 1):
            part = None
            try:
                decision, act, applied, part = _execute_unit(
                    ep, unit, ui, len(strat.steps), grounding, cfg, result.decisions, no
                )
            except _UnitFailed as e:
                result.errors.append(f"strategy {no} unit {ui}: {e}")
                ep.release()
                failed_unit = (unit, part)
                break
            if decision is Decision.HALT_AND_REPLAN:
                ep.release()
                failed_unit = (unit, part)
                break
            if decision is Decision.TRANSITION:
                ep.release()
                continue
            # success claimed on the final unit: settle, then ask the simulator
            ep.hold(sim_cfg.stability_window)
            goal = target if target is not None else (act, applied)
            verdict = ep.check_success(*goal)
            if required_effect is not None:
                verdict = verdict and required_effect in ep.effects_seen
            ep.release()
            if not verdict:
                result.errors.append(f"strategy {no}: success claimed but not confirmed")
                failed_unit = (unit, part)
        if verdict:
            result.verdict = True
            break
        if failed_unit is not None:
            note = failure_note(*failed_unit)
            result.failure_notes.append(note)
            result.backend_calls += 1
            try:
                queue.extend(interpret(backend, instruction, desc.text, manual, note))
            except (NoRuleMatched, BackendFormatError) as e:
                result.errors.append(f"replan after strategy {no}: {e}")

    result.effects_seen = sorted(ep.effects_seen)
    result.final_states = dict(ep.object.states)
    result.steps = ep.step_count
    result.events = ep.event_log
    return result
