"""Kinematic articulated objects: box parts, one-DOF joints, latches and effects.

All geometry is given in the object frame at the zero configuration. A
part's current placement is its parent's motion composed with its own joint
motion; fixed parts ride along with their parent.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .action_program import JointKind
from .geometry import (
    OrientedBox,
    Pose,
    Rotation,
    box_from_json,
    box_to_json,
    pose_compose,
    rotation_about_line,
    sample_box_local,
    vec3,
    vec_to_json,
)
from .part_grounding import GAPartClass


class SchemaError(ValueError):
    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


class InvariantViolation(ValueError):
    pass


class UnknownPart(KeyError):
    def __str__(self) -> str:
        return f"unknown part {self.args[0]!r}"


def crossed(state: float, threshold: float) -> bool:
    """True once `state` has gone past `threshold`, moving away from zero."""
    return state >= threshold if threshold > 0 else state <= threshold


@dataclass(frozen=True, eq=False)
class JointSpec:
    kind: JointKind
    axis_point: np.ndarray
    axis_dir: np.ndarray
    limits: tuple[float, float]
    open_sign: int = 1
    spring_return: bool = False

    def __post_init__(self):
        d = vec3(self.axis_dir)
        n = np.linalg.norm(d)
        if n == 0:
            raise InvariantViolation("joint axis direction is zero")
        object.__setattr__(self, "axis_dir", d / n)
        object.__setattr__(self, "axis_point", vec3(self.axis_point))
        lo, hi = map(float, self.limits)
        if not lo < hi:
            raise InvariantViolation(f"joint limits need lo < hi, got [{lo}, {hi}]")
        if not lo <= 0.0 <= hi:
            raise InvariantViolation(f"zero state must lie within limits [{lo}, {hi}]")
        object.__setattr__(self, "limits", (lo, hi))
        if self.open_sign not in (1, -1):
            raise InvariantViolation("open_sign must be +1 or -1")

    def motion(self, s: float) -> Pose:
        if self.kind is JointKind.REVOLUTE:
            return rotation_about_line(self.axis_point, self.axis_dir, s)
        return Pose(Rotation.identity(), s * self.axis_dir)

    def clamp(self, s: float) -> float:
        lo, hi = self.limits
        return min(max(s, lo), hi)

    def transformed(self, p: Pose) -> JointSpec:
        return JointSpec(
            self.kind, p.apply(self.axis_point), p.rotation.apply(self.axis_dir),
            self.limits, self.open_sign, self.spring_return,
        )

    def to_json(self) -> dict:
        doc = {
            "kind": self.kind.value,
            "axis_point": vec_to_json(self.axis_point),
            "axis_dir": vec_to_json(self.axis_dir),
            "limits": list(self.limits),
            "open_sign": self.open_sign,
        }
        if self.spring_return:
            doc["spring_return"] = True
        return doc


@dataclass(frozen=True, eq=False)
class Part:
    id: str
    semantic_name: str
    gapart_class: GAPartClass
    box: OrientedBox
    joint: JointSpec | None = None
    parent: str | None = None
    grasp_sites: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        sites = np.asarray(self.grasp_sites, dtype=float).reshape(-1, 3)
        sites.setflags(write=False)
        object.__setattr__(self, "grasp_sites", sites)

    @property
    def is_fixed(self) -> bool:
        return self.joint is None


@dataclass(frozen=True)
class LatchRule:
    locked_joint: str
    unlocking_joint: str
    threshold: float
    release_offset: float = 0.05


@dataclass(frozen=True)
class EffectRule:
    trigger_joint: str
    threshold: float
    effect: str


@dataclass
class ArticulatedObject:
    name: str
    parts: tuple[Part, ...]
    latches: tuple[LatchRule, ...] = ()
    effects: tuple[EffectRule, ...] = ()
    states: dict[str, float] = field(default_factory=dict)
    latch_engaged: list[bool] = field(default_factory=list)

    def __post_init__(self):
        self.parts = tuple(self.parts)
        self.latches = tuple(self.latches)
        self.effects = tuple(self.effects)
        self._index = {p.id: p for p in self.parts}
        if len(self._index) != len(self.parts):
            raise InvariantViolation("duplicate part ids")
        for p in self.parts:
            if p.joint is not None:
                self.states.setdefault(p.id, 0.0)
        if not self.latch_engaged:
            self.latch_engaged = [not crossed(self.states.get(l.unlocking_joint, 0.0), l.threshold) for l in self.latches]
        self.validate()

    # -- structure ---------------------------------------------------------

    def part(self, part_id: str) -> Part:
        try:
            return self._index[part_id]
        except KeyError:
            raise UnknownPart(part_id) from None

    def has_part(self, part_id: str) -> bool:
        return part_id in self._index

    def children(self, part_id: str) -> list[Part]:
        return [p for p in self.parts if p.parent == part_id]

    def actuator(self, part_id: str) -> str | None:
        """Id of the nearest part (self or ancestor) that owns a joint."""
        p = self.part(part_id)
        while p is not None:
            if p.joint is not None:
                return p.id
            p = self.part(p.parent) if p.parent else None
        return None

    def validate(self) -> None:
        for p in self.parts:
            if p.parent is not None and p.parent not in self._index:
                raise InvariantViolation(f"part {p.id!r} has unknown parent {p.parent!r}")
        for p in self.parts:
            seen = {p.id}
            q = p
            while q.parent is not None:
                if q.parent in seen:
                    raise InvariantViolation(f"cyclic parent chain through {q.parent!r}")
                seen.add(q.parent)
                q = self._index[q.parent]
        for pid, s in self.states.items():
            p = self.part(pid) if pid in self._index else None
            if p is None:
                raise InvariantViolation(f"state given for unknown part {pid!r}")
            if p.joint is None:
                raise InvariantViolation(f"state given for fixed part {pid!r}")
            lo, hi = p.joint.limits
            if not lo - 1e-12 <= s <= hi + 1e-12:
                raise InvariantViolation(f"state {s} of {pid!r} outside limits [{lo}, {hi}]")
        for rule in self.latches:
            for pid in (rule.locked_joint, rule.unlocking_joint):
                if pid not in self._index or self._index[pid].joint is None:
                    raise InvariantViolation(f"latch references missing joint {pid!r}")
            if rule.locked_joint == rule.unlocking_joint:
                raise InvariantViolation("latch locks its own unlocking joint")
            if rule.threshold == 0 or rule.release_offset < 0:
                raise InvariantViolation("latch threshold must be non-zero and release_offset >= 0")
        for rule in self.effects:
            if rule.trigger_joint not in self._index or self._index[rule.trigger_joint].joint is None:
                raise InvariantViolation(f"effect references missing joint {rule.trigger_joint!r}")
            if rule.threshold == 0:
                raise InvariantViolation("effect threshold must be non-zero")

    def clone(self) -> ArticulatedObject:
        return ArticulatedObject(
            self.name, self.parts, self.latches, self.effects, dict(self.states), list(self.latch_engaged)
        )

    # -- kinematics --------------------------------------------------------

    def part_motion(self, part_id: str) -> Pose:
        """Rigid motion taking the part from its rest placement to the current one."""
        p = self.part(part_id)
        base = self.part_motion(p.parent) if p.parent else Pose.identity()
        if p.joint is None:
            return base
        return pose_compose(base, p.joint.motion(self.states[p.id]))

    def part_box(self, part_id: str) -> OrientedBox:
        return self.part(part_id).box.transformed(self.part_motion(part_id))

    def world_joint(self, part_id: str) -> JointSpec:
        """The part's own joint expressed at the current configuration."""
        p = self.part(part_id)
        if p.joint is None:
            raise InvariantViolation(f"part {part_id!r} has no joint")
        base = self.part_motion(p.parent) if p.parent else Pose.identity()
        return p.joint.transformed(base)

    def grasp_sites_world(self, part_id: str) -> np.ndarray:
        p = self.part(part_id)
        if len(p.grasp_sites) == 0:
            return p.grasp_sites
        return self.part_motion(part_id).apply(p.grasp_sites)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        corners = np.vstack([self.part_box(p.id).corners() for p in self.parts])
        return corners.min(axis=0), corners.max(axis=0)

    # -- rules -------------------------------------------------------------

    def is_locked(self, part_id: str) -> bool:
        return any(e and l.locked_joint == part_id for l, e in zip(self.latches, self.latch_engaged))

    def apply_rules(self) -> list[dict]:
        """Release latches whose unlocking joint crossed its threshold."""
        events = []
        for i, rule in enumerate(self.latches):
            if self.latch_engaged[i] and crossed(self.states[rule.unlocking_joint], rule.threshold):
                self.latch_engaged[i] = False
                joint = self.part(rule.locked_joint).joint
                target = joint.clamp(joint.open_sign * rule.release_offset)
                cur = self.states[rule.locked_joint]
                if (target - cur) * joint.open_sign > 0:
                    self.states[rule.locked_joint] = target
                events.append({"event": "latch_released", "part": rule.locked_joint,
                               "state": self.states[rule.locked_joint]})
        return events

    def active_effects(self) -> set[str]:
        return {r.effect for r in self.effects if crossed(self.states[r.trigger_joint], r.threshold)}


def forward_state(obj: ArticulatedObject) -> dict[str, Pose]:
    """World pose of every part's box at the current joint states."""
    return {p.id: pose_compose(obj.part_motion(p.id), p.box.pose) for p in obj.parts}


def part_histogram(obj: ArticulatedObject) -> dict[GAPartClass, int]:
    counts = Counter(p.gapart_class for p in obj.parts)
    return {c: counts[c] for c in GAPartClass if counts[c]}


def observe_part_detail(
    obj: ArticulatedObject,
    part_id: str,
    n: int,
    noise_sigma: float = 0.0,
    outlier_frac: float = 0.0,
    seed: int = 0,
    noise_seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Like observe_part but also returns the indices replaced by outliers."""
    p = obj.part(part_id)
    if n < 3:
        raise ValueError("n must be >= 3")
    if not 0.0 <= outlier_frac < 1.0:
        raise ValueError("outlier_frac must be in [0, 1)")
    local = sample_box_local(p.box.half_extents, n, seed)
    pts = obj.part_box(part_id).pose.apply(local)
    rng = np.random.default_rng([seed if noise_seed is None else noise_seed, 0x5EED])
    if noise_sigma > 0:
        pts = pts + rng.normal(scale=noise_sigma, size=pts.shape)
    m = int(round(outlier_frac * n))
    idx = np.sort(rng.choice(n, size=m, replace=False)) if m else np.zeros(0, dtype=int)
    if m:
        lo, hi = obj.bounds()
        pts[idx] = rng.uniform(lo, hi, size=(m, 3))
    return pts, idx


def observe_part(obj, part_id, n, noise_sigma=0.0, outlier_frac=0.0, seed=0, noise_seed=None) -> np.ndarray:
    """Point samples on the part's box surface at its current placement.

    Surface samples depend only on `seed`, so two calls with the same seed at
    different states return index-corresponding points.
    """
    return observe_part_detail(obj, part_id, n, noise_sigma, outlier_frac, seed, noise_seed)[0]


# -- scene documents ----------------------------------------------------------

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}

SCENE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["name", "parts"],
    "properties": {
        "name": {"type": "string"},
        "parts": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "semantic_name", "gapart_class", "box", "joint"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "semantic_name": {"type": "string"},
                    "gapart_class": {"type": "string"},
                    "box": {
                        "type": "object",
                        "required": ["center", "half_extents"],
                        "properties": {
                            "center": _VEC3,
                            "half_extents": _VEC3,
                            "rotation": {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4},
                        },
                    },
                    "joint": {
                        "oneOf": [
                            {"const": "fixed"},
                            {
                                "type": "object",
                                "required": ["kind", "axis_point", "axis_dir", "limits"],
                                "properties": {
                                    "kind": {"enum": ["revolute", "prismatic"]},
                                    "axis_point": _VEC3,
                                    "axis_dir": _VEC3,
                                    "limits": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                                    "open_sign": {"enum": [1, -1]},
                                    "spring_return": {"type": "boolean"},
                                },
                            },
                        ]
                    },
                    "parent": {"type": ["string", "null"]},
                    "grasp_sites": {"type": "array", "items": _VEC3},
                },
            },
        },
        "latches": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["locked_joint", "unlocking_joint", "threshold"],
                "properties": {
                    "locked_joint": {"type": "string"},
                    "unlocking_joint": {"type": "string"},
                    "threshold": {"type": "number"},
                    "release_offset": {"type": "number", "minimum": 0},
                },
            },
        },
        "effects": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["trigger_joint", "threshold", "effect"],
                "properties": {
                    "trigger_joint": {"type": "string"},
                    "threshold": {"type": "number"},
                    "effect": {"type": "string"},
                },
            },
        },
        "initial_states": {"type": "object", "additionalProperties": {"type": "number"}},
    },
}


def load_scene(document: dict | str | Path) -> ArticulatedObject:
    """Validate a scene document (dict, JSON text or path) and build the object."""
    if isinstance(document, Path) or (isinstance(document, str) and not document.lstrip().startswith("{")):
        document = json.loads(Path(document).read_text())
    elif isinstance(document, str):
        document = json.loads(document)
    validator = jsonschema.Draft202012Validator(SCENE_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, err.json_path)

    parts = []
    for i, pd in enumerate(document["parts"]):
        try:
            cls = GAPartClass.parse(pd["gapart_class"])
        except ValueError as e:
            raise SchemaError(str(e), f"$.parts[{i}].gapart_class") from None
        joint = None
        if pd["joint"] != "fixed":
            jd = pd["joint"]
            joint = JointSpec(
                JointKind(jd["kind"]), vec3(jd["axis_point"]), vec3(jd["axis_dir"]),
                tuple(jd["limits"]), int(jd.get("open_sign", 1)), bool(jd.get("spring_return", False)),
            )
        parts.append(Part(
            pd["id"], pd["semantic_name"], cls, box_from_json(pd["box"]), joint,
            pd.get("parent"), np.asarray(pd.get("grasp_sites", []), dtype=float).reshape(-1, 3),
        ))
    latches = [LatchRule(d["locked_joint"], d["unlocking_joint"], float(d["threshold"]),
                         float(d.get("release_offset", 0.05))) for d in document.get("latches", [])]
    effects = [EffectRule(d["trigger_joint"], float(d["threshold"]), d["effect"]) for d in document.get("effects", [])]
    states = {k: float(v) for k, v in document.get("initial_states", {}).items()}
    return ArticulatedObject(document["name"], tuple(parts), tuple(latches), tuple(effects), states)


def scene_to_json(obj: ArticulatedObject) -> dict:
    return {
        "name": obj.name,
        "parts": [
            {
                "id": p.id,
                "semantic_name": p.semantic_name,
                "gapart_class": p.gapart_class.value,
                "box": box_to_json(p.box),
                "joint": "fixed" if p.joint is None else p.joint.to_json(),
                "parent": p.parent,
                "grasp_sites": [vec_to_json(s) for s in p.grasp_sites],
            }
            for p in obj.parts
        ],
        "latches": [vars(l) for l in obj.latches],
        "effects": [vars(e) for e in obj.effects],
        "initial_states": dict(obj.states),
    }


def bundled_scene_path(name: str) -> Path:
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("articulate") / "data" / "scenes" / name))


def load_bundled_scene(name: str) -> ArticulatedObject:
    return load_scene(bundled_scene_path(name))
