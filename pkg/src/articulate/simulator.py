"""Kinematic execution of gripper trajectories against an articulated object.

The gripper is free-flying. While it holds a part, every commanded pose is
projected onto the single DOF that moves the part (arc angle about a hinge,
axial travel along a slider). Latched or saturated joints absorb the motion
and the step reports Blocked; an off-DOF residual above the slip tolerance
breaks the grasp.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .action_program import JointKind
from .geometry import Pose, pose_compose, pose_inverse
from .scene_model import ArticulatedObject, UnknownPart, observe_part
from .trajectory import Trajectory

_TINY = 1e-15


class AlreadyHolding(RuntimeError):
    pass


class NotHolding(RuntimeError):
    pass


class Outcome(enum.Enum):
    OK = "ok"
    BLOCKED_LATCH = "blocked:latch"
    BLOCKED_LIMIT = "blocked:limit"
    SLIPPED = "slipped"
    GRASP_FAILED = "grasp_failed"

    @property
    def blocked(self) -> bool:
        return self in (Outcome.BLOCKED_LATCH, Outcome.BLOCKED_LIMIT)


@dataclass(frozen=True)
class SimConfig:
    max_steps: int = 1000
    grasp_radius: float = 0.03
    slip_tolerance: float = 0.02
    success_fraction: float = 0.9
    stability_window: int = 10
    stability_eps: float = 1e-4
    # observation model used by the feedback loop
    obs_points: int = 300
    obs_noise: float = 0.0
    obs_outliers: float = 0.0

    def __post_init__(self):
        if not 0 < self.success_fraction <= 1:
            raise ValueError("success_fraction must be in (0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


class Episode:
    """Mutable episode state over a private clone of the scene."""

    def __init__(self, obj: ArticulatedObject, cfg: SimConfig = SimConfig(), seed: int = 0):
        self.object = obj.clone()
        self.cfg = cfg
        self.seed = seed
        self.gripper = Pose.identity()
        self.held_part: str | None = None
        self.step_count = 0
        self.effect_flags: set[str] = set(self.object.active_effects())
        self.effects_seen: set[str] = set(self.effect_flags)
        self.event_log: list[dict] = []
        self.initial_states = dict(self.object.states)
        self.history: list[dict[str, float]] = [dict(self.object.states)]
        self._grip_offset: Pose | None = None

    # -- bookkeeping -------------------------------------------------------

    def _log(self, event: str, **fields) -> None:
        self.event_log.append({"event": event, "step": self.step_count, **fields})

    def _after_update(self) -> None:
        for ev in self.object.apply_rules():
            self.event_log.append({**ev, "step": self.step_count})
        flags = self.object.active_effects()
        for f in sorted(flags - self.effect_flags):
            self._log("effect_on", effect=f)
        for f in sorted(self.effect_flags - flags):
            self._log("effect_off", effect=f)
        self.effect_flags = flags
        self.effects_seen |= flags

    def _tick(self, outcome: Outcome) -> None:
        self.history.append(dict(self.object.states))
        self._log("step", outcome=outcome.value, states=dict(self.object.states))

    # -- gripper -----------------------------------------------------------

    def move_to(self, pose: Pose) -> None:
        """Free-space approach; only allowed with an empty gripper."""
        if self.held_part is not None:
            raise AlreadyHolding(f"holding {self.held_part!r}")
        self.gripper = pose

    def grasp(self, part_id: str) -> Outcome:
        if self.held_part is not None:
            raise AlreadyHolding(f"holding {self.held_part!r}")
        sites = self.object.grasp_sites_world(part_id)
        if len(sites) and np.min(np.linalg.norm(sites - self.gripper.translation, axis=1)) <= self.cfg.grasp_radius:
            self.held_part = part_id
            self._grip_offset = pose_compose(pose_inverse(self.object.part_motion(part_id)), self.gripper)
            self._log("grasp", part=part_id, outcome=Outcome.OK.value)
            return Outcome.OK
        self._log("grasp", part=part_id, outcome=Outcome.GRASP_FAILED.value)
        return Outcome.GRASP_FAILED

    def release(self) -> None:
        if self.held_part is None:
            return
        part = self.held_part
        act = self.object.actuator(part)
        self.held_part = None
        self._grip_offset = None
        if act is not None and self.object.part(act).joint.spring_return:
            self.object.states[act] = self.object.part(act).joint.clamp(0.0)
        self._log("release", part=part)
        self._after_update()

    def _drop(self) -> None:
        self.held_part = None
        self._grip_offset = None

    # -- stepping ----------------------------------------------------------

    def _dof_increment(self, act: str, p_cur: np.ndarray, p_cmd: np.ndarray) -> float:
        joint = self.object.world_joint(act)
        u = joint.axis_dir
        if joint.kind is JointKind.PRISMATIC:
            return float(np.dot(p_cmd - p_cur, u))
        a = p_cur - joint.axis_point
        b = p_cmd - joint.axis_point
        a = a - u * np.dot(a, u)
        b = b - u * np.dot(b, u)
        if np.linalg.norm(a) < 1e-12 or np.linalg.norm(b) < 1e-12:
            return 0.0
        return math.atan2(float(np.dot(u, np.cross(a, b))), float(np.dot(a, b)))

    def step(self, commanded: Pose) -> Outcome:
        if self.held_part is None:
            raise NotHolding("step() needs a held part")
        self.step_count += 1
        act = self.object.actuator(self.held_part)
        p_cur = self.gripper.translation
        p_cmd = commanded.translation
        if act is None:
            outcome = Outcome.BLOCKED_LIMIT if np.linalg.norm(p_cmd - p_cur) > _TINY else Outcome.OK
            self._tick(outcome)
            return outcome

        ds = self._dof_increment(act, p_cur, p_cmd)
        s = self.object.states[act]
        joint = self.object.part(act).joint
        if abs(ds) > _TINY and self.object.is_locked(act):
            self._tick(Outcome.BLOCKED_LATCH)
            return Outcome.BLOCKED_LATCH
        new = joint.clamp(s + ds) if abs(ds) > _TINY else s
        if abs(ds) > _TINY and new == s:
            self._tick(Outcome.BLOCKED_LIMIT)
            return Outcome.BLOCKED_LIMIT

        self.object.states[act] = new
        follow = pose_compose(self.object.part_motion(self.held_part), self._grip_offset)
        residual = float(np.linalg.norm(p_cmd - follow.translation))
        if residual > self.cfg.slip_tolerance:
            self.object.states[act] = s
            part = self.held_part
            self._drop()
            self._tick(Outcome.SLIPPED)
            self._log("slip", part=part, residual=residual)
            return Outcome.SLIPPED
        self.gripper = follow
        self._after_update()
        self._tick(Outcome.OK)
        return Outcome.OK

    def hold(self, n: int) -> None:
        """Advance n steps without commanding motion."""
        for _ in range(n):
            if self.held_part is not None:
                self.step(self.gripper)
            else:
                self.step_count += 1
                self._tick(Outcome.OK)

    # -- observation -------------------------------------------------------

    def observed_part(self) -> str:
        """The part whose joint the held part moves (the held part if fixed to nothing)."""
        if self.held_part is None:
            raise NotHolding("nothing held")
        return self.object.actuator(self.held_part) or self.held_part

    def observe(self, part_id: str) -> np.ndarray:
        cfg = self.cfg
        return observe_part(
            self.object, part_id, cfg.obs_points, cfg.obs_noise, cfg.obs_outliers,
            seed=self.seed, noise_seed=self.seed * 100003 + self.step_count,
        )

    def iter_trajectory(self, traj: Trajectory, observe_every: int = 0) -> Iterator[tuple[Outcome, tuple | None]]:
        """Step through waypoints 1..N; yields (outcome, observation pair or None).

        Stops after a Slipped step.
        """
        if self.held_part is None:
            raise NotHolding("grasp must be established before running a trajectory")
        part = self.observed_part()
        x0 = self.observe(part) if observe_every else None
        for i, wp in enumerate(traj.waypoints[1:], 1):
            out = self.step(wp.pose)
            obs = None
            if observe_every and i % observe_every == 0 and out is not Outcome.SLIPPED:
                obs = (x0, self.observe(part))
            yield out, obs
            if out is Outcome.SLIPPED:
                return

    def run_trajectory(self, traj: Trajectory, observe_every: int = 0) -> list[tuple[Outcome, tuple | None]]:
        return list(self.iter_trajectory(traj, observe_every))

    # -- verdict -----------------------------------------------------------

    def check_success(self, target_part: str, delta_target: float) -> bool:
        """Moved at least success_fraction of the target (in its direction)
        within max_steps, and still over the last stability_window steps."""
        if not self.object.has_part(target_part):
            raise UnknownPart(target_part)
        cfg = self.cfg
        s0 = self.initial_states.get(target_part, 0.0)
        s1 = self.object.states.get(target_part, 0.0)
        moved = (s1 - s0) * math.copysign(1.0, delta_target)
        # relative slack of 1e-9 absorbs float drift exactly at the boundary
        if moved < cfg.success_fraction * abs(delta_target) * (1 - 1e-9):
            return False
        if self.step_count > cfg.max_steps:
            return False
        w = cfg.stability_window
        if len(self.history) < w + 1:
            return False
        recent = [h.get(target_part, 0.0) for h in self.history[-(w + 1):]]
        return max(recent) - min(recent) < cfg.stability_eps


def write_event_log(path: str | Path, events: list[dict]) -> None:
    with open(path, "w") as fh:
        for ev in events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
