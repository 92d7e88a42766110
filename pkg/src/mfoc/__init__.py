"""Model-free open-loop optimal control with basis-function inputs."""

from .basis import BasisKind, BasisSet, basis_matrix, control_signal, eval_basis
from .cost import CostSpec, augmented_cost, terminal_residual, trajectory_cost
from .dynamics import (
    DelaySpec,
    Region,
    Trajectory,
    classify_region,
    rollout_delayed,
    rollout_smooth,
    rollout_switched,
)
from .estimator import PerturbationScheme, SchemeKind, estimate_gradient, flatten, unflatten
from .optimizer import (
    ControlProblem,
    MuMode,
    OptimizerConfig,
    OptimizerState,
    RunResult,
    ScheduleKind,
    StepSchedule,
    multi_trial,
    objective,
    project_control,
    solve,
    step,
    sweep_m,
)

__version__ = "0.1.0"
