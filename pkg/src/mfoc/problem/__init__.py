from .builtins import BUILTIN_NAMES, builtin
from .expr import compile_expression, compile_guard, eval_expression, eval_guard, parse_expression, parse_guard, render
from .spec import (
    DelayedDynamics,
    ProblemSpec,
    SmoothDynamics,
    SolverDefaults,
    SwitchedDynamics,
    dump_problem,
    make_config,
    parse_problem_file,
    parse_problem_text,
)
