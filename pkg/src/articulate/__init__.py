"""Language-guided manipulation of articulated objects in a kinematic world.

Submodules: geometry, action_program, joint_estimation, part_grounding,
scene_model, trajectory, simulator, planner, benchmark, cli.
"""

__version__ = "0.1.0"
