"""Problem definitions, the TOML problem-file format, and compilation to runnable problems."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from ..basis import BasisKind
from ..cost import CostSpec
from ..dynamics import (
    DelaySpec,
    Region,
    rollout_delayed_batch,
    rollout_smooth_batch,
    rollout_switched_batch,
)
from ..errors import ExpressionError, MfocError, ProblemFileError
from ..estimator import PerturbationScheme
from ..optimizer import ControlProblem, OptimizerConfig, StepSchedule
from .expr import (
    Expr,
    Guard,
    TrueGuard,
    compile_expression,
    compile_guard,
    parse_expression,
    parse_guard,
    render,
)


@dataclass(frozen=True)
class SmoothDynamics:
    f: tuple


@dataclass(frozen=True)
class SwitchedRegion:
    guard: Guard
    f: tuple


@dataclass(frozen=True)
class SwitchedDynamics:
    regions: tuple


@dataclass(frozen=True)
class DelayedDynamics:
    f: tuple
    tau: float
    history: tuple


Dynamics = Union[SmoothDynamics, SwitchedDynamics, DelayedDynamics]


@dataclass(frozen=True)
class SolverDefaults:
    """Optional ``[solver]`` values; ``None`` falls through to the next layer."""

    basis: Optional[str] = None
    m: Optional[int] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    rho: Optional[float] = None
    epsilon: Optional[float] = None
    samples: Optional[int] = None
    tol: Optional[float] = None
    max_iter: Optional[int] = None
    seed: Optional[int] = None
    estimator: Optional[str] = None
    mu_mode: Optional[str] = None
    schedule: Optional[str] = None

    def merged(self, other: "SolverDefaults") -> "SolverDefaults":
        """Values from ``other`` win where set."""
        return replace(self, **{f.name: getattr(other, f.name) for f in fields(other)
                                if getattr(other, f.name) is not None})


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    n_x: int
    n_u: int
    tf: float
    dt: float
    x0: tuple
    dynamics: Dynamics
    stage: Expr
    terminal: Expr
    xf: Optional[tuple] = None
    u_min: Optional[tuple] = None
    u_max: Optional[tuple] = None
    solver: SolverDefaults = field(default_factory=SolverDefaults)

    @property
    def N(self) -> int:
        return int(round(self.tf / self.dt))

    @property
    def kind(self) -> str:
        return {SmoothDynamics: "smooth", SwitchedDynamics: "switched",
                DelayedDynamics: "delayed"}[type(self.dynamics)]

    @property
    def regions(self) -> tuple:
        if not isinstance(self.dynamics, SwitchedDynamics):
            raise AttributeError(f"problem {self.name!r} is not switched")
        return self.dynamics.regions

    @property
    def tau(self) -> float:
        if not isinstance(self.dynamics, DelayedDynamics):
            raise AttributeError(f"problem {self.name!r} has no delay")
        return self.dynamics.tau

    def build(self) -> ControlProblem:
        """Compile expressions into a batched :class:`ControlProblem`."""
        return _build(self)


# -- parsing -------------------------------------------------------------------

_SOLVER_TYPES = {
    "basis": str, "m": int, "alpha": float, "beta": float, "rho": float, "epsilon": float,
    "samples": int, "tol": float, "max_iter": int, "seed": int, "estimator": str,
    "mu_mode": str, "schedule": str,
}
_SOLVER_CHOICES = {
    "basis": {k.value for k in BasisKind},
    "estimator": {"ls", "central"},
    "mu_mode": {"residual", "estimated"},
    "schedule": {"constant", "polydecay"},
}


def _fail(path: str, msg: str):
    raise ProblemFileError(f"{path}: {msg}")


def _require(table: dict, key: str, path: str):
    if key not in table:
        _fail(f"{path}.{key}" if path else key, "missing required field")
    return table[key]


def _real(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        _fail(path, "must be finite")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    return int(value)


def _vector(value, n: int, path: str, allow_inf: bool = False) -> tuple:
    if not isinstance(value, list):
        _fail(path, f"expected an array of {n} numbers")
    if len(value) != n:
        _fail(path, f"expected {n} entries, got {len(value)}")
    out = []
    for i, v in enumerate(value):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or math.isnan(v):
            _fail(f"{path}[{i}]", f"expected a number, got {v!r}")
        if math.isinf(v) and not allow_inf:
            _fail(f"{path}[{i}]", "must be finite")
        out.append(float(v))
    return tuple(out)


def _expressions(value, n: int, path: str, n_x: int, n_u: int, **kw) -> tuple:
    if not isinstance(value, list) or len(value) != n:
        _fail(path, f"expected an array of {n} expression strings")
    return tuple(_expression(v, f"{path}[{i}]", n_x, n_u, **kw) for i, v in enumerate(value))


def _expression(text, path: str, n_x: int, n_u: int, **kw) -> Expr:
    if not isinstance(text, str):
        _fail(path, f"expected an expression string, got {text!r}")
    try:
        return parse_expression(text, n_x, n_u, **kw)
    except ExpressionError as exc:
        _fail(path, str(exc))


def _solver(table: dict) -> SolverDefaults:
    values = {}
    for key, raw in table.items():
        path = f"solver.{key}"
        if key not in _SOLVER_TYPES:
            _fail(path, "unknown solver option")
        typ = _SOLVER_TYPES[key]
        if typ is int:
            val = _integer(raw, path)
        elif typ is float:
            val = _real(raw, path)
        else:
            if not isinstance(raw, str):
                _fail(path, f"expected a string, got {raw!r}")
            val = raw.lower()
            if val not in _SOLVER_CHOICES[key]:
                _fail(path, f"must be one of {sorted(_SOLVER_CHOICES[key])}")
        values[key] = val
    return SolverDefaults(**values)


def problem_from_dict(doc: dict) -> ProblemSpec:
    """Validate a decoded problem document."""
    prob = _require(doc, "problem", "")
    name = _require(prob, "name", "problem")
    if not isinstance(name, str) or not name:
        _fail("problem.name", "expected a non-empty string")
    n_x = _integer(_require(prob, "n_x", "problem"), "problem.n_x")
    n_u = _integer(_require(prob, "n_u", "problem"), "problem.n_u")
    if n_x < 1 or n_u < 1:
        _fail("problem", "n_x and n_u must be >= 1")
    tf = _real(_require(prob, "tf", "problem"), "problem.tf")
    dt = _real(_require(prob, "dt", "problem"), "problem.dt")
    if tf <= 0 or dt <= 0:
        _fail("problem", "tf and dt must be positive")
    ratio = tf / dt
    if abs(ratio - round(ratio)) >= 1e-9 or round(ratio) < 1:
        _fail("problem.dt", f"tf/dt = {ratio!r} is not an integer number of steps")
    x0 = _vector(_require(prob, "x0", "problem"), n_x, "problem.x0")
    xf = _vector(prob["xf"], n_x, "problem.xf") if "xf" in prob else None
    u_min = _vector(prob["u_min"], n_u, "problem.u_min", allow_inf=True) if "u_min" in prob else None
    u_max = _vector(prob["u_max"], n_u, "problem.u_max", allow_inf=True) if "u_max" in prob else None
    if u_min is not None and u_max is not None and any(a > b for a, b in zip(u_min, u_max)):
        _fail("problem.u_min", "must not exceed u_max")

    dyn = _require(doc, "dynamics", "")
    kind = _require(dyn, "kind", "dynamics")
    if kind == "smooth":
        dynamics = SmoothDynamics(_expressions(_require(dyn, "f", "dynamics"), n_x, "dynamics.f", n_x, n_u))
    elif kind == "delayed":
        f = _expressions(_require(dyn, "f", "dynamics"), n_x, "dynamics.f", n_x, n_u, allow_delayed=True)
        tau = _real(_require(dyn, "tau", "dynamics"), "dynamics.tau")
        if tau <= 0:
            _fail("dynamics.tau", "delay must be positive")
        if abs(tau / dt - round(tau / dt)) >= 1e-9:
            _fail("dynamics.tau", f"tau={tau} is not a multiple of dt={dt}")
        hist_raw = _require(dyn, "history", "dynamics")
        history = _expressions(hist_raw, n_x, "dynamics.history", 0, 0)
        dynamics = DelayedDynamics(f, tau, history)
    elif kind == "switched":
        raw = _require(dyn, "region", "dynamics")
        if not isinstance(raw, list) or not raw:
            _fail("dynamics.region", "expected one or more [[dynamics.region]] tables")
        regions = []
        for i, reg in enumerate(raw):
            path = f"dynamics.region[{i}]"
            gtext = _require(reg, "guard", path)
            if not isinstance(gtext, str):
                _fail(f"{path}.guard", "expected a guard string")
            try:
                guard = parse_guard(gtext, n_x)
            except ExpressionError as exc:
                _fail(f"{path}.guard", str(exc))
            f = _expressions(_require(reg, "f", path), n_x, f"{path}.f", n_x, n_u)
            regions.append(SwitchedRegion(guard, f))
        if not isinstance(regions[-1].guard, TrueGuard):
            _fail(f"dynamics.region[{len(regions) - 1}].guard", "last region must be the catch-all 'true'")
        dynamics = SwitchedDynamics(tuple(regions))
    else:
        _fail("dynamics.kind", f"expected 'smooth', 'switched' or 'delayed', got {kind!r}")

    cost = _require(doc, "cost", "")
    stage = _expression(_require(cost, "stage", "cost"), "cost.stage", n_x, n_u)
    terminal = _expression(cost.get("terminal", "0"), "cost.terminal", n_x, n_u, allow_input=False)

    solver = _solver(doc.get("solver", {}))
    unknown = set(doc) - {"problem", "dynamics", "cost", "solver"}
    if unknown:
        _fail(sorted(unknown)[0], "unknown section")

    return ProblemSpec(name, n_x, n_u, tf, dt, x0, dynamics, stage, terminal,
                       xf, u_min, u_max, solver)


def parse_problem_text(text: str) -> ProblemSpec:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ProblemFileError(f"invalid TOML: {exc}") from None
    return problem_from_dict(doc)


def parse_problem_file(source: Union[str, Path]) -> ProblemSpec:
    """Read a problem from a path, or from TOML text when ``source`` contains a newline."""
    if isinstance(source, str) and "\n" in source:
        return parse_problem_text(source)
    path = Path(source)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"{path}: cannot read problem file ({exc.strerror or exc})") from None
    try:
        return parse_problem_text(text)
    except ProblemFileError as exc:
        raise ProblemFileError(f"{path}: {exc}") from None


# -- serialization -------------------------------------------------------------

def _toml_value(v) -> str:
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(i) for i in v) + "]"
    raise TypeError(f"cannot serialize {v!r}")


def dump_problem(spec: ProblemSpec) -> str:
    """Render a problem as TOML text accepted by :func:`parse_problem_file`."""
    lines = ["[problem]"]
    for key in ("name", "n_x", "n_u", "tf", "dt", "x0", "xf", "u_min", "u_max"):
        val = getattr(spec, key)
        if val is not None:
            lines.append(f"{key} = {_toml_value(val)}")
    lines += ["", "[dynamics]", f'kind = "{spec.kind}"']
    dyn = spec.dynamics
    if isinstance(dyn, SwitchedDynamics):
        for reg in dyn.regions:
            lines += ["", "[[dynamics.region]]",
                      f"guard = {_toml_value(render(reg.guard))}",
                      f"f = {_toml_value([render(e) for e in reg.f])}"]
    else:
        lines.append(f"f = {_toml_value([render(e) for e in dyn.f])}")
        if isinstance(dyn, DelayedDynamics):
            lines.append(f"tau = {_toml_value(dyn.tau)}")
            lines.append(f"history = {_toml_value([render(e) for e in dyn.history])}")
    lines += ["", "[cost]", f"stage = {_toml_value(render(spec.stage))}",
              f"terminal = {_toml_value(render(spec.terminal))}"]
    solver = [(f.name, getattr(spec.solver, f.name)) for f in fields(spec.solver)]
    solver = [(k, v) for k, v in solver if v is not None]
    if solver:
        lines += ["", "[solver]"] + [f"{k} = {_toml_value(v)}" for k, v in solver]
    return "\n".join(lines) + "\n"


# -- compilation -----------------------------------------------------------------

def _field(exprs: tuple, delayed: bool = False):
    comps = [compile_expression(e) for e in exprs]

    if delayed:
        def f(x, xd, u, t):
            out = np.empty_like(x)
            for j, c in enumerate(comps):
                out[:, j] = c(x, u, t, xd)
            return out
    else:
        def f(x, u, t):
            out = np.empty_like(x)
            for j, c in enumerate(comps):
                out[:, j] = c(x, u, t)
            return out
    return f


def _build(spec: ProblemSpec) -> ControlProblem:
    dyn = spec.dynamics
    x0 = np.array(spec.x0, dtype=float)
    if isinstance(dyn, SmoothDynamics):
        f = _field(dyn.f)

        def simulate(U, dt):
            return rollout_smooth_batch(f, x0, U, dt)
    elif isinstance(dyn, SwitchedDynamics):
        regions = tuple(Region(compile_guard(r.guard), _field(r.f)) for r in dyn.regions)

        def simulate(U, dt):
            return rollout_switched_batch(regions, x0, U, dt)
    else:
        f = _field(dyn.f, delayed=True)
        hist = [compile_expression(e) for e in dyn.history]
        delay = DelaySpec(dyn.tau, lambda t: np.array([float(h(None, None, t)) for h in hist]))

        def simulate(U, dt):
            return rollout_delayed_batch(f, delay, x0, U, dt)

    stage_c = compile_expression(spec.stage)
    term_c = compile_expression(spec.terminal)
    tf = spec.tf

    def stage(x, u, t):
        return np.broadcast_to(stage_c(x, u, t), (x.shape[0],))

    def terminal(x):
        return np.broadcast_to(term_c(x, None, tf), (x.shape[0],))

    cost = CostSpec(stage, terminal, None if spec.xf is None else np.array(spec.xf))
    return ControlProblem(
        name=spec.name,
        x0=x0,
        tf=spec.tf,
        dt=spec.dt,
        n_u=spec.n_u,
        cost=cost,
        simulate=simulate,
        u_min=None if spec.u_min is None else np.array(spec.u_min),
        u_max=None if spec.u_max is None else np.array(spec.u_max),
    )


# -- solver configuration ----------------------------------------------------------

BUILTIN_DEFAULTS = SolverDefaults(
    basis="chebyshev", m=4, alpha=0.01, beta=0.01, rho=1.0, epsilon=1e-3, samples=None,
    tol=0.01, max_iter=5000, seed=42, estimator="ls", mu_mode="residual", schedule="constant",
)


def make_config(spec: ProblemSpec, overrides: SolverDefaults | None = None) -> OptimizerConfig:
    """Built-in defaults, then the problem's ``[solver]`` table, then ``overrides``."""
    s = BUILTIN_DEFAULTS.merged(spec.solver)
    if overrides is not None:
        s = s.merged(overrides)
    try:
        return OptimizerConfig(
            basis=s.basis,
            m=s.m,
            schedule=StepSchedule(s.schedule, alpha0=s.alpha, beta0=s.beta),
            rho=s.rho,
            tol=s.tol,
            max_iter=s.max_iter,
            scheme=PerturbationScheme(s.estimator, epsilon=s.epsilon, samples=s.samples, seed=s.seed),
            mu_mode=s.mu_mode,
        )
    except (MfocError, ValueError) as exc:
        raise ProblemFileError(f"solver: {exc}") from None
