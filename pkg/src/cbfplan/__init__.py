"""Motion planning with control-barrier-function safety filters.

Subpackages cover the shared domain types (core), the exact small-QP solver
(qp), barrier constraint rows (barriers), the steering tree planner (rrt),
the receding-horizon tracker and prioritized fleets (mpc), joint-space
planning for serial chains (arm), and file formats plus rendering and the
CLI (scenario, svg, cli).
"""

from .arm import (
    ActivationThresholds,
    KinematicChain,
    SphereObstacle,
    activation,
    arm_plan,
    arm_safe_steer,
    baxter_left_arm_chain,
    link_barrier,
    link_barrier_rate_row,
    link_frame,
    obstacle_in_link_frame,
    sample_direction,
    two_link_chain,
)
from .barriers import (
    FirstOrderGains,
    SecondOrderGains,
    barrier_value,
    turn_rate_row,
    velocity_row,
    velocity_row_xy,
)
from .core import (
    CircleObstacle,
    ControlBounds,
    JointState,
    PlanarState,
    RandomSource,
    Trajectory,
    UnicycleState,
    Workspace,
    normal_sample,
    obstacle_position_at,
    wrap_angle,
)
from .mpc import MpcConfig, PathDisc, RobotSpec, mpc_step, plan_fleet, track
from .qp import QpProblem, QpSolution, solve, verify
from .rrt import (
    PlanResult,
    SteerConfig,
    Tree,
    UnsafeStartError,
    Vertex,
    goal_check,
    plan,
    safe_steer,
    sample_heading,
    sample_vertex,
)
from .scenario import (
    RunReport,
    Scenario,
    ScenarioError,
    dump_scenario,
    load_scenario,
    read_trajectory_csv,
    verify_trajectory,
    write_trajectory_csv,
)
from .svg import render_svg

__version__ = "0.1.0"
