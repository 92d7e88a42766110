"""Projected-gradient / dual-ascent loop over basis coefficients.

Each iteration rolls out the current control, estimates the gradient of the
augmented objective with respect to the coefficients from perturbed rollouts,
takes a gradient step on the coefficients and an ascent step on the
multiplier.  Input bounds are enforced by clamping the control signal before
every rollout.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
import multiprocessing as mp
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .basis import BasisKind, BasisSet, basis_matrix, control_signal
from .cost import CostSpec, batch_objective
from .dynamics import BatchRollout, Trajectory
from .errors import ConfigurationError, DivergedRolloutError, EstimationError, MfocError
from .estimator import PerturbationScheme, estimate_gradient, flatten, unflatten

log = logging.getLogger(__name__)

BURN_IN = 10


@dataclass(frozen=True)
class ControlProblem:
    """Executable form of an optimal-control problem.

    ``simulate(U, dt)`` rolls out a batch of input sequences ``(B, N, n_u)``.
    """

    name: str
    x0: np.ndarray
    tf: float
    dt: float
    n_u: int
    cost: CostSpec
    simulate: Callable[[np.ndarray, float], BatchRollout]
    u_min: Optional[np.ndarray] = None
    u_max: Optional[np.ndarray] = None

    @property
    def N(self) -> int:
        return int(round(self.tf / self.dt))

    @property
    def n_x(self) -> int:
        return int(np.size(self.x0))

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.N) * self.dt


class ScheduleKind(enum.Enum):
    CONSTANT = "constant"
    POLYDECAY = "polydecay"


@dataclass(frozen=True)
class StepSchedule:
    kind: ScheduleKind = ScheduleKind.CONSTANT
    alpha0: float = 0.01
    beta0: float = 0.01
    p_alpha: float = 0.6
    p_beta: float = 0.8
    n0: float = 100.0

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                object.__setattr__(self, "kind", ScheduleKind(self.kind.lower()))
            except ValueError:
                raise ConfigurationError(f"unknown schedule {self.kind!r}") from None
        if not (self.alpha0 > 0 and self.beta0 > 0):
            raise ConfigurationError("step sizes alpha and beta must be positive")
        if self.kind is ScheduleKind.POLYDECAY:
            # sum alpha = sum beta = inf, sum alpha^2 + beta^2 < inf, beta/alpha -> 0
            if not 0.5 < self.p_alpha < self.p_beta <= 1.0:
                raise ConfigurationError("polydecay needs 0.5 < p_alpha < p_beta <= 1")
            if self.n0 < 1:
                raise ConfigurationError("polydecay offset n0 must be >= 1")

    def alpha(self, n: int) -> float:
        if self.kind is ScheduleKind.CONSTANT:
            return self.alpha0
        return self.alpha0 / (1.0 + n / self.n0) ** self.p_alpha

    def beta(self, n: int) -> float:
        if self.kind is ScheduleKind.CONSTANT:
            return self.beta0
        return self.beta0 / (1.0 + n / self.n0) ** self.p_beta


class MuMode(enum.Enum):
    RESIDUAL = "residual"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class OptimizerConfig:
    basis: BasisKind = BasisKind.CHEBYSHEV
    m: int = 4
    schedule: StepSchedule = field(default_factory=StepSchedule)
    rho: float = 1.0
    tol: float = 0.01
    max_iter: int = 5000
    scheme: PerturbationScheme = field(default_factory=PerturbationScheme)
    mu_mode: MuMode = MuMode.RESIDUAL
    theta_init: str = "uniform"
    init_scale: float = 0.1
    u_min: Optional[np.ndarray] = None
    u_max: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "basis", BasisKind.parse(self.basis))
        if isinstance(self.mu_mode, str):
            try:
                object.__setattr__(self, "mu_mode", MuMode(self.mu_mode.lower()))
            except ValueError:
                raise ConfigurationError(f"unknown mu mode {self.mu_mode!r}") from None
        if self.theta_init not in ("uniform", "zeros"):
            raise ConfigurationError(f"theta_init must be 'uniform' or 'zeros', got {self.theta_init!r}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not self.rho >= 0:
            raise ConfigurationError("rho must be >= 0")

    @property
    def seed(self) -> int:
        return self.scheme.seed

    def with_seed(self, seed: int) -> "OptimizerConfig":
        return replace(self, scheme=replace(self.scheme, seed=int(seed)))


@dataclass
class OptimizerState:
    theta: np.ndarray
    mu: np.ndarray
    iter: int = 0
    J_history: list = field(default_factory=list)
    cost_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)


@dataclass(frozen=True)
class RunResult:
    theta_star: np.ndarray
    mu_star: np.ndarray
    J_star: float
    terminal_state: np.ndarray
    trajectory: Trajectory
    iterations: int
    converged: bool
    trace_J: np.ndarray  # raw trajectory cost per iteration
    trace_objective: np.ndarray  # augmented objective per iteration
    trace_residual_norm: np.ndarray
    seed: int = 0


def project_control(u, u_min=None, u_max=None) -> np.ndarray:
    """Clamp every input channel into ``[u_min, u_max]`` (``None`` means unbounded)."""
    u = np.asarray(u, dtype=float)
    lo = -np.inf if u_min is None else np.asarray(u_min, dtype=float)
    hi = np.inf if u_max is None else np.asarray(u_max, dtype=float)
    return np.clip(u, lo, hi)


def _bounds(problem: ControlProblem, config: OptimizerConfig):
    lo = config.u_min if config.u_min is not None else problem.u_min
    hi = config.u_max if config.u_max is not None else problem.u_max
    if lo is not None and hi is not None and np.any(np.asarray(lo) > np.asarray(hi)):
        raise ConfigurationError("u_min must not exceed u_max")
    return lo, hi


class _Evaluator:
    """Maps flat coefficient vectors to objective values for one problem/config."""

    def __init__(self, problem: ControlProblem, config: OptimizerConfig):
        self.problem = problem
        self.config = config
        self.rows = basis_matrix(BasisSet(config.basis, config.m, problem.tf), problem.grid)
        self.lo, self.hi = _bounds(problem, config)
        self.cost = problem.cost.with_rho(config.rho)
        self.n_mu = problem.n_x if (problem.cost.target is not None and config.mu_mode is MuMode.ESTIMATED) else 0

    def inputs(self, thetas: np.ndarray) -> np.ndarray:
        U = control_signal(thetas, self.rows)
        return project_control(U, self.lo, self.hi)

    def rollouts(self, flat_thetas: np.ndarray) -> BatchRollout:
        m, n_u = self.config.m, self.problem.n_u
        thetas = flat_thetas[:, : m * n_u].reshape(-1, n_u, m).transpose(0, 2, 1)
        return self.problem.simulate(self.inputs(thetas), self.problem.dt)

    def __call__(self, flat_thetas: np.ndarray, mu) -> np.ndarray:
        flat_thetas = np.atleast_2d(flat_thetas)
        batch = self.rollouts(flat_thetas)
        if self.n_mu:
            mus = flat_thetas[:, -self.n_mu:]
            A, J = batch_objective(self.cost, np.zeros(self.problem.n_x), batch)
            r = batch.states[:, -1] - self.cost.target
            with np.errstate(all="ignore"):
                A = A + np.sum(mus * r, axis=1)
            A[~np.isfinite(A)] = np.inf
            return A
        A, _ = batch_objective(self.cost, mu, batch)
        return A

    def base(self, theta: np.ndarray, mu: np.ndarray):
        """Objective, raw cost, residual and trajectory at the current iterate."""
        batch = self.rollouts(flatten(theta)[None])
        A, J = batch_objective(self.cost, mu, batch)
        if not batch.ok[0] or not np.isfinite(A[0]):
            raise DivergedRolloutError(max(int(batch.diverged_at[0]), 0),
                                       "rollout at the current iterate diverged")
        traj = batch.trajectory(0)
        if self.cost.target is None:
            r = np.zeros(0)
        else:
            r = traj.terminal - self.cost.target
        return float(A[0]), float(J[0]), r, traj


def init_state(problem: ControlProblem, config: OptimizerConfig) -> OptimizerState:
    shape = (config.m, problem.n_u)
    if config.theta_init == "zeros":
        theta = np.zeros(shape)
    else:
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EED]))
        theta = rng.uniform(-config.init_scale, config.init_scale, size=shape)
    n_mu = problem.n_x if problem.cost.target is not None else 0
    return OptimizerState(theta=theta, mu=np.zeros(n_mu))


def objective(problem: ControlProblem, config: OptimizerConfig, theta, mu=None) -> float:
    """Objective value at one coefficient matrix: augmented cost, or the plain cost without a target.

    Diverged rollouts evaluate to ``+inf``.
    """
    ev = _Evaluator(problem, config)
    theta = np.asarray(theta, dtype=float).reshape(config.m, problem.n_u)
    if mu is None:
        mu = np.zeros(problem.n_x)
    A, _ = batch_objective(ev.cost, mu, ev.rollouts(flatten(theta)[None]))
    return float(A[0])


def _update(ev: _Evaluator, state: OptimizerState, A0: float, r: np.ndarray) -> OptimizerState:
    config = ev.config
    n = state.iter
    alpha, beta = config.schedule.alpha(n), config.schedule.beta(n)
    m, n_u = config.m, ev.problem.n_u
    try:
        if ev.n_mu:
            x = flatten(state.theta, state.mu)
            g = estimate_gradient(lambda th: ev(th, None), x, config.scheme,
                                  iteration=n, base_value=A0, vectorized=True)
            g_theta, g_mu = unflatten(g, m, n_u, ev.n_mu)
        else:
            x = flatten(state.theta)
            g = estimate_gradient(lambda th: ev(th, state.mu), x, config.scheme,
                                  iteration=n, base_value=A0, vectorized=True)
            g_theta, g_mu = unflatten(g, m, n_u), r
    except EstimationError as exc:
        raise EstimationError(f"iteration {n}: {exc}") from exc
    theta = state.theta - alpha * g_theta
    mu = state.mu + beta * g_mu if state.mu.size else state.mu
    return OptimizerState(theta, mu, n + 1, state.J_history, state.cost_history, state.residual_history)


def _record(state: OptimizerState, A0: float, J0: float, r: np.ndarray) -> None:
    state.J_history.append(A0)
    state.cost_history.append(J0)
    state.residual_history.append(r.copy())


def step(problem: ControlProblem, config: OptimizerConfig, state: OptimizerState,
         _ev: _Evaluator | None = None) -> OptimizerState:
    """One primal descent / dual ascent iteration; histories are extended by one entry."""
    ev = _ev or _Evaluator(problem, config)
    A0, J0, r, _ = ev.base(state.theta, state.mu)
    state = OptimizerState(state.theta, state.mu, state.iter,
                           list(state.J_history), list(state.cost_history), list(state.residual_history))
    _record(state, A0, J0, r)
    return _update(ev, state, A0, r)


def solve(problem: ControlProblem, config: OptimizerConfig, state: OptimizerState | None = None) -> RunResult:
    """Iterate until ``|A_n - A_{n-1}| < tol`` on the augmented objective, or ``max_iter``."""
    ev = _Evaluator(problem, config)
    state = state or init_state(problem, config)
    converged = False
    while True:
        A0, J0, r, traj = ev.base(state.theta, state.mu)
        _record(state, A0, J0, r)
        n = len(state.J_history) - 1
        if n >= BURN_IN and abs(state.J_history[-1] - state.J_history[-2]) < config.tol:
            converged = True
            break
        if n >= config.max_iter:
            break
        state = _update(ev, state, A0, r)

    res_norm = np.array([float(np.linalg.norm(v)) for v in state.residual_history])
    return RunResult(
        theta_star=state.theta.copy(),
        mu_star=state.mu.copy(),
        J_star=J0,
        terminal_state=traj.terminal.copy(),
        trajectory=traj,
        iterations=n,
        converged=converged,
        trace_J=np.array(state.cost_history),
        trace_objective=np.array(state.J_history),
        trace_residual_norm=res_norm,
        seed=config.seed,
    )


@dataclass
class TrialStats:
    seeds: list
    results: list  # RunResult or None for failed trials
    errors: dict  # seed -> message
    mean_J: float
    std_J: float
    mean_terminal: np.ndarray
    std_terminal: np.ndarray
    mean_residual_norm: float

    @property
    def successful(self) -> list:
        return [r for r in self.results if r is not None]

    @property
    def n_failed(self) -> int:
        return len(self.errors)

    @property
    def n_converged(self) -> int:
        return sum(r.converged for r in self.successful)


def _stats(values: np.ndarray):
    if values.shape[0] == 0:
        nan = np.full(values.shape[1:], np.nan)
        return nan, nan
    mean = values.mean(axis=0)
    std = values.std(axis=0, ddof=1) if values.shape[0] > 1 else np.zeros(values.shape[1:])
    return mean, std


_JOB = None


def _run_seed(seed: int):
    problem, config = _JOB
    try:
        return solve(problem, config.with_seed(seed)), None
    except MfocError as exc:
        return None, str(exc)


def default_jobs() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1))


def multi_trial(problem: ControlProblem, config: OptimizerConfig, trials: int,
                base_seed: int | None = None, jobs: int = 1) -> TrialStats:
    """Run :func:`solve` for seeds ``base_seed .. base_seed + trials - 1`` and summarize."""
    global _JOB
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    base_seed = config.seed if base_seed is None else int(base_seed)
    seeds = [base_seed + i for i in range(trials)]
    _JOB = (problem, config)
    try:
        if jobs > 1 and trials > 1 and "fork" in mp.get_all_start_methods():
            with ProcessPoolExecutor(max_workers=min(jobs, trials), mp_context=mp.get_context("fork")) as pool:
                outcomes = list(pool.map(_run_seed, seeds))
        else:
            outcomes = [_run_seed(s) for s in seeds]
    finally:
        _JOB = None

    results = [res for res, _ in outcomes]
    errors = {s: err for s, (_, err) in zip(seeds, outcomes) if err is not None}
    for s, err in errors.items():
        log.warning("trial with seed %d failed: %s", s, err)
    ok = [r for r in results if r is not None]
    Js = np.array([r.J_star for r in ok], dtype=float)
    terms = np.array([r.terminal_state for r in ok], dtype=float).reshape(len(ok), problem.n_x)
    mean_J, std_J = _stats(Js)
    mean_t, std_t = _stats(terms)
    res_norms = [float(r.trace_residual_norm[-1]) for r in ok]
    return TrialStats(
        seeds=seeds,
        results=results,
        errors=errors,
        mean_J=float(mean_J),
        std_J=float(std_J),
        mean_terminal=mean_t,
        std_terminal=std_t,
        mean_residual_norm=float(np.mean(res_norms)) if ok else math.nan,
    )


@dataclass(frozen=True)
class SweepRow:
    m: int
    mean_J: float
    std_J: float
    mean_residual_norm: float
    stats: Optional[TrialStats] = None
    error: Optional[str] = None


def sweep_m(problem: ControlProblem, config: OptimizerConfig, m_values: Sequence[int],
            trials: int = 1, base_seed: int | None = None, jobs: int = 1) -> list[SweepRow]:
    """Mean cost per basis size; a failing size is recorded and the sweep continues."""
    if not len(m_values):
        raise ConfigurationError("m list must be nonempty")
    rows = []
    for m in sorted(int(v) for v in m_values):
        try:
            stats = multi_trial(problem, replace(config, m=m), trials, base_seed, jobs)
            rows.append(SweepRow(m, stats.mean_J, stats.std_J, stats.mean_residual_norm, stats))
        except MfocError as exc:
            log.warning("sweep at m=%d failed: %s", m, exc)
            rows.append(SweepRow(m, math.nan, math.nan, math.nan, None, str(exc)))
    return rows
