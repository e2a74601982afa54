import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from articulate.action_program import JointKind
from articulate.geometry import Pose, Rotation, pose_compose, pose_inverse
from articulate.scene_model import JointSpec, load_bundled_scene, load_scene
from articulate.trajectory import (
    STEPS, NoGraspSite, ZeroDelta, generate_trajectory, grasp_target, joint_delta, select_grasp,
)

from conftest import unit_vectors

HINGE = JointSpec(JointKind.REVOLUTE, [0, 0, 0], [0, 0, 1], (-4, 4))


def test_quarter_arc_midpoint():
    traj = generate_trajectory(Pose(Rotation.identity(), [0.5, 0, 0]), HINGE, 90)
    assert len(traj) == STEPS + 1 == 251
    np.testing.assert_allclose(traj.waypoints[125].pose.translation, [0.35355, 0.35355, 0], atol=1e-5)
    np.testing.assert_allclose(traj.waypoints[-1].pose.translation, [0, 0.5, 0], atol=1e-12)
    assert traj.waypoints[0].gripper == "closed" and traj.waypoints[-1].gripper == "open"


def test_prismatic_fraction_of_extent():
    slide = JointSpec(JointKind.PRISMATIC, [0, 0, 0], [0, -1, 0], (0, 1))
    traj = generate_trajectory(Pose.identity(), slide, 0.5, extent=0.4)
    np.testing.assert_allclose(traj.waypoints[-1].pose.translation, [0, -0.2, 0], atol=1e-12)
    assert traj.joint_delta == pytest.approx(0.2)


def test_zero_delta():
    with pytest.raises(ZeroDelta):
        generate_trajectory(Pose.identity(), HINGE, 0)


def test_prismatic_needs_extent():
    slide = JointSpec(JointKind.PRISMATIC, [0, 0, 0], [1, 0, 0], (0, 1))
    with pytest.raises(ValueError):
        joint_delta(slide, 0.5)


def test_open_sign_flips_direction():
    closing = JointSpec(JointKind.REVOLUTE, [0, 0, 0], [0, 0, 1], (-2, 0), open_sign=-1)
    assert joint_delta(closing, 30) == pytest.approx(-math.radians(30))


def test_limits_clamp_with_warning(caplog):
    door = JointSpec(JointKind.REVOLUTE, [0, 0, 0], [0, 0, 1], (0, math.radians(60)))
    traj = generate_trajectory(Pose(Rotation.identity(), [0.5, 0, 0]), door, 90, state=math.radians(10))
    assert traj.clamped
    assert traj.joint_delta == pytest.approx(math.radians(50))
    assert traj.requested_delta == pytest.approx(math.radians(90))
    assert "clamped" in caplog.text


def test_reversed_trajectory():
    traj = generate_trajectory(Pose(Rotation.identity(), [0.5, 0, 0]), HINGE, 45)
    back = traj.reversed()
    np.testing.assert_allclose(back.waypoints[0].pose.translation, traj.waypoints[-1].pose.translation)
    np.testing.assert_allclose(back.waypoints[-1].pose.translation, traj.waypoints[0].pose.translation)
    assert back.joint_delta == -traj.joint_delta


@given(unit_vectors, st.tuples(*[st.floats(-1, 1)] * 3), st.tuples(*[st.floats(-1, 1)] * 3),
       st.floats(-180, 180).filter(lambda d: abs(d) > 1e-3))
def test_arc_and_rigid_follow(axis, point, grasp_at, delta):
    joint = JointSpec(JointKind.REVOLUTE, point, axis, (-4, 4))
    grasp = Pose(Rotation.from_axis_angle([1, 2, 3], 0.3), grasp_at)
    traj = generate_trajectory(grasp, joint, delta)
    u, c = joint.axis_dir, joint.axis_point

    def radius(p):
        w = p - c
        return np.linalg.norm(w - u * (w @ u))

    r0 = radius(grasp.translation)
    for i, wp in enumerate(traj.waypoints):
        assert abs(radius(wp.pose.translation) - r0) < 1e-9
        rel = pose_compose(pose_inverse(joint.motion(traj.joint_delta * i / STEPS)), wp.pose)
        np.testing.assert_allclose(rel.as_matrix(), grasp.as_matrix(), atol=1e-9)


def test_handle_is_preferred():
    obj = load_bundled_scene("microwave")
    held, pose = grasp_target(obj.part("door"), obj)
    assert held == "handle"
    np.testing.assert_allclose(pose.translation, obj.part_box("handle").center)


def _handleless(sites):
    return load_scene({
        "name": "plain",
        "parts": [{"id": "door", "semantic_name": "door", "gapart_class": "hinge_door",
                   "box": {"center": [0.35, 0, 0], "half_extents": [0.35, 0.01, 0.3]},
                   "joint": {"kind": "revolute", "axis_point": [0, 0, 0], "axis_dir": [0, 0, 1], "limits": [0, 2]},
                   "grasp_sites": sites}],
    })


def test_farthest_site_from_axis():
    obj = _handleless([[0.1, -0.01, 0], [0.6, -0.01, 0]])
    np.testing.assert_allclose(select_grasp(obj.part("door"), obj).translation, [0.6, -0.01, 0])


def test_no_grasp_site():
    obj = _handleless([])
    with pytest.raises(NoGraspSite):
        grasp_target(obj.part("door"), obj)


def test_grasp_approach_faces_outward():
    obj = _handleless([[0.6, -0.01, 0]])
    pose = select_grasp(obj.part("door"), obj)
    approach = pose.rotation.apply([0, 0, 1])
    # the site is on the -y face, so the gripper approaches along +y
    np.testing.assert_allclose(np.abs(approach), [0, 1, 0], atol=1e-12)


def test_trajectory_json():
    traj = generate_trajectory(Pose(Rotation.identity(), [0.5, 0, 0]), HINGE, 10, steps=4)
    doc = traj.to_json()
    assert len(doc) == 5 and doc[0]["t"] == 0 and doc[-1]["gripper"] == "open"
