"""Mobility-aware handover control with an augmented hierarchical QP.

The decision vector stacks robot joint velocities, the robot ee twist, human
joint velocities and the human hand twist, so the interaction poses come out
of the optimization instead of being fixed in advance.
"""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig, load_config, parse_config, preset_names
from .controller import Controller, ControllerConfig, Setup, TrajectoryLog, impedance_torque, run_scenario
from .impairment import ImpairmentProfile, RomBounds, impaired_rom, severity_matrix_for_condition
from .kinematics import KinematicChain, Pose, build_human_chain, build_robot_chain, fk, geometric_jacobian
from .metrics import MetricsReport, compensation_cost, evaluate, jerk_cost, path_deviation
from .qp import HierarchyStack, QpProblem, TaskLevel, solve_hierarchy, solve_qp
from .scenarios import build_setup, load_setup, run_baseline, run_method, run_proposed
