"""Heuristic gripper trajectories for one action unit.

A revolute unit sweeps the grasp along a circular arc about the hinge; a
prismatic unit slides it along the joint axis by a fraction of the part's
extent. Either way the gripper stays rigidly attached to the moving part.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .action_program import JointKind
from .geometry import OrientedBox, Pose, Rotation, pose_compose, pose_to_json, vec3
from .part_grounding import HANDLE_CLASSES
from .scene_model import ArticulatedObject, JointSpec, Part

log = logging.getLogger(__name__)

STEPS = 250


class NoGraspSite(ValueError):
    pass


class ZeroDelta(ValueError):
    pass


@dataclass(frozen=True)
class Waypoint:
    t: float
    pose: Pose
    gripper: str = "closed"


@dataclass
class Trajectory:
    waypoints: list[Waypoint]
    joint_delta: float  # applied state change in joint units, after clamping
    requested_delta: float
    kind: JointKind
    clamped: bool = False

    def __len__(self) -> int:
        return len(self.waypoints)

    def reversed(self) -> Trajectory:
        n = len(self.waypoints) - 1
        wps = [Waypoint(i / n, w.pose, "closed") for i, w in enumerate(reversed(self.waypoints))]
        wps[-1] = Waypoint(1.0, wps[-1].pose, "open")
        return Trajectory(wps, -self.joint_delta, -self.requested_delta, self.kind, self.clamped)

    def to_json(self) -> list[dict]:
        return [
            {"t": w.t, "position": pose_to_json(w.pose)["translation"],
             "rotation": pose_to_json(w.pose)["rotation"], "gripper": w.gripper}
            for w in self.waypoints
        ]


def _outward_axis(box: OrientedBox, point: np.ndarray) -> tuple[int, float]:
    local = box.rotation.inverse().apply(point - box.center)
    ratios = np.abs(local) / box.half_extents
    axis = int(np.argmax(ratios))
    return axis, (1.0 if local[axis] >= 0 else -1.0)


def grasp_orientation(face_box: OrientedBox, grip_box: OrientedBox, point) -> Rotation:
    """Gripper frame: z approaches against the outward face normal, x (the
    closing direction) lies along the grip box's shortest side orthogonal to z."""
    p = vec3(point)
    axis, sign = _outward_axis(face_box, p)
    rf = face_box.rotation.as_matrix()
    z = -sign * rf[:, axis]
    rg = grip_box.rotation.as_matrix()
    best = None
    for i in np.argsort(grip_box.half_extents, kind="stable"):
        cand = rg[:, i] - z * np.dot(rg[:, i], z)
        if np.linalg.norm(cand) > 1e-6:
            best = cand / np.linalg.norm(cand)
            break
    if best is None:
        raise NoGraspSite("cannot build a closing axis orthogonal to the approach")
    y = np.cross(z, best)
    return Rotation.from_basis(best, y, z)


def _axis_distance(point: np.ndarray, joint: JointSpec) -> float:
    w = point - joint.axis_point
    return float(np.linalg.norm(w - joint.axis_dir * np.dot(w, joint.axis_dir)))


def grasp_target(part: Part, obj: ArticulatedObject) -> tuple[str, Pose]:
    """(id of the part to hold, world grasp pose) for manipulating `part`."""
    handles = [c for c in obj.children(part.id) if c.gapart_class in HANDLE_CLASSES]
    if handles:
        h = handles[0]
        hbox = obj.part_box(h.id)
        return h.id, Pose(grasp_orientation(obj.part_box(part.id), hbox, hbox.center), hbox.center)
    sites = obj.grasp_sites_world(part.id)
    if len(sites) == 0:
        raise NoGraspSite(f"part {part.id!r} has no grasp site and no handle")
    act = obj.actuator(part.id)
    if act is None:
        raise NoGraspSite(f"part {part.id!r} is not articulated")
    joint = obj.world_joint(act)
    dists = [_axis_distance(s, joint) for s in sites]
    site = sites[int(np.argmax(dists))]
    box = obj.part_box(part.id)
    return part.id, Pose(grasp_orientation(box, box, site), site)


def select_grasp(part: Part, obj: ArticulatedObject) -> Pose:
    return grasp_target(part, obj)[1]


def joint_delta(joint: JointSpec, delta: float, extent: float | None = None) -> float:
    """Action-unit delta (degrees, or fraction of extent) to a signed joint-state change."""
    if delta == 0:
        raise ZeroDelta("delta must be non-zero")
    if joint.kind is JointKind.REVOLUTE:
        return joint.open_sign * math.radians(delta)
    if extent is None or extent <= 0:
        raise ValueError("prismatic units need the part extent along the axis")
    return joint.open_sign * delta * extent


def generate_trajectory(
    grasp: Pose,
    joint: JointSpec,
    delta: float,
    *,
    extent: float | None = None,
    state: float = 0.0,
    steps: int = STEPS,
) -> Trajectory:
    """Waypoints i = 0..steps following the part's motion by (i/steps)·delta.

    `joint` must be expressed in the frame of `grasp` at the current
    configuration, and `state` is the joint's current state; targets past the
    joint limits are clamped with a warning.
    """
    requested = joint_delta(joint, delta, extent)
    target = state + requested
    clamped = joint.clamp(target)
    applied = requested
    if clamped != target:
        applied = clamped - state
        log.warning("delta %.6g clamped to %.6g by joint limits %s", requested, applied, joint.limits)
    wps = []
    for i in range(steps + 1):
        motion = joint.motion(applied * i / steps)
        wps.append(Waypoint(i / steps, pose_compose(motion, grasp), "closed"))
    wps[-1] = Waypoint(1.0, wps[-1].pose, "open")
    return Trajectory(wps, applied, requested, joint.kind, clamped != target)
