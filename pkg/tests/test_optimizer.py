import math
from dataclasses import replace

import numpy as np
import pytest

from mfoc.cost import CostSpec, trajectory_cost
from mfoc.dynamics import rollout_smooth, rollout_smooth_batch
from mfoc.errors import ConfigurationError
from mfoc.estimator import PerturbationScheme
from mfoc.optimizer import (
    ControlProblem,
    OptimizerConfig,
    OptimizerState,
    StepSchedule,
    _Evaluator,
    init_state,
    multi_trial,
    objective,
    project_control,
    solve,
    step,
    sweep_m,
)
from mfoc.problem import builtin, make_config


def toy_problem():
    """min theta^2 s.t. theta = 1: one Euler step of dx/dt = u with a constant input."""
    return ControlProblem(
        "toy", np.zeros(1), 1.0, 1.0, 1,
        CostSpec(lambda x, u, t: u[:, 0] ** 2, target=[1.0]),
        lambda U, dt: rollout_smooth_batch(lambda x, u, t: u, np.zeros(1), U, dt),
    )


@pytest.fixture(scope="module")
def ex1():
    spec = builtin("ex1")
    return spec.build(), make_config(spec)


def test_projection_examples():
    assert project_control(12.0, -10, 10) == 10
    u = np.array([[-3.0], [0.5], [9.9]])
    np.testing.assert_array_equal(project_control(u, [-10], [10]), u)
    np.testing.assert_array_equal(project_control(u), u)


def test_projection_idempotent():
    u = np.random.default_rng(0).normal(scale=20, size=(50, 2))
    once = project_control(u, [-10, -1], [10, 1])
    assert np.array_equal(project_control(once, [-10, -1], [10, 1]), once)
    assert once[:, 0].max() <= 10 and once[:, 1].min() >= -1


def test_simulated_inputs_respect_bounds():
    spec = builtin("ex2")
    problem, config = spec.build(), make_config(spec)
    ev = _Evaluator(problem, config)
    thetas = np.random.default_rng(1).normal(scale=30, size=(5, 28))
    batch = ev.rollouts(thetas)
    assert batch.inputs.max() <= 10 and batch.inputs.min() >= -10
    assert batch.inputs.max() == 10  # some input was actually clamped


def test_polydecay_conditions():
    s = StepSchedule("polydecay", 0.1, 0.05)
    assert s.alpha(0) == 0.1 and s.beta(0) == 0.05
    assert s.beta(10**6) / s.alpha(10**6) < s.beta(0) / s.alpha(0)
    with pytest.raises(ConfigurationError):
        StepSchedule("polydecay", p_alpha=0.8, p_beta=0.6)
    with pytest.raises(ConfigurationError):
        StepSchedule("polydecay", p_alpha=0.5, p_beta=0.8)
    with pytest.raises(ConfigurationError):
        StepSchedule(alpha0=0.0)


def test_dual_step():
    problem = toy_problem()
    config = OptimizerConfig(basis="fourier", m=1, schedule=StepSchedule(beta0=0.5), rho=0.0)
    # theta = 1.2 puts the residual at 0.2
    state = step(problem, config, OptimizerState(np.array([[1.2]]), np.zeros(1)))
    assert state.mu[0] == pytest.approx(0.1, abs=1e-12)
    assert len(state.J_history) == 1 and state.iter == 1


def test_fixed_point():
    # theta = 1, mu = -2 is the KKT point: zero gradient (up to the forward-difference bias) and zero residual
    problem = toy_problem()
    config = OptimizerConfig(basis="fourier", m=1, rho=0.0, scheme=PerturbationScheme(kind="central"))
    state = step(problem, config, OptimizerState(np.array([[1.0]]), np.array([-2.0])))
    assert state.theta[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert state.mu[0] == -2.0


def test_kkt_toy_polydecay():
    problem = toy_problem()
    config = OptimizerConfig(basis="fourier", m=1, rho=0.0, schedule=StepSchedule("polydecay", 0.2, 0.1))
    ev = _Evaluator(problem, config)
    state = init_state(problem, config)
    for n in range(50_000):
        if abs(state.theta[0, 0] - 1) <= 0.01 and abs(state.mu[0] + 2) <= 0.05:
            break
        state = step(problem, config, state, ev)
        state.J_history.clear()
        state.cost_history.clear()
        state.residual_history.clear()
    assert abs(state.theta[0, 0] - 1) <= 0.01 and abs(state.mu[0] + 2) <= 0.05, (n, state)


def test_infinite_tol_stops_after_burn_in(ex1):
    problem, config = ex1
    res = solve(problem, OptimizerConfig(**{**config.__dict__, "tol": math.inf}))
    assert res.converged and res.iterations == 10
    assert len(res.trace_J) == 11


def test_max_iter_returns_unconverged(ex1):
    problem, config = ex1

    res = solve(problem, replace(config, tol=1e-300, max_iter=12))
    assert not res.converged and res.iterations == 12


def test_solve_deterministic(ex1):
    problem, config = ex1
    a, b = solve(problem, config.with_seed(3)), solve(problem, config.with_seed(3))
    assert a.trace_objective.tobytes() == b.trace_objective.tobytes()
    assert a.theta_star.tobytes() == b.theta_star.tobytes()
    c = solve(problem, config.with_seed(4))
    assert c.trace_objective.tobytes() != a.trace_objective.tobytes()


def test_converged_flag_matches_stop_rule(ex1):
    problem, config = ex1
    res = solve(problem, config.with_seed(0))
    assert res.converged
    assert abs(res.trace_objective[-1] - res.trace_objective[-2]) < config.tol


def test_objective_at_zero_matches_rollout(ex1):
    problem, config = ex1
    traj = rollout_smooth(lambda x, u, t: x + u, [2.0], np.zeros(100), 0.01)
    J = trajectory_cost(CostSpec(lambda x, u, t: x[:, 0] ** 2 + u[:, 0] ** 2), traj)
    r = traj.terminal[0] - 4.0
    assert traj.terminal[0] == pytest.approx(2 * 1.01**100)
    expected = J + 0.5 * config.rho * r**2
    assert objective(problem, config, np.zeros((4, 1))) == pytest.approx(expected, rel=1e-13)
    mu = np.array([0.7])
    assert objective(problem, config, np.zeros((4, 1)), mu) == pytest.approx(expected + 0.7 * r, rel=1e-13)


def test_objective_reduces_without_target():
    problem = ControlProblem(
        "free", np.array([1.0]), 1.0, 0.1, 1,
        CostSpec(lambda x, u, t: x[:, 0] ** 2),
        lambda U, dt: rollout_smooth_batch(lambda x, u, t: -x + u, np.array([1.0]), U, dt),
    )
    config = OptimizerConfig(m=2, rho=5.0)
    traj = rollout_smooth(lambda x, u, t: -x + u, [1.0], np.zeros(10), 0.1)
    assert objective(problem, config, np.zeros((2, 1))) == pytest.approx(
        trajectory_cost(CostSpec(lambda x, u, t: x[:, 0] ** 2), traj), rel=1e-14)
    res = solve(problem, config)
    assert res.mu_star.size == 0 and res.trace_residual_norm.max() == 0


def test_ex2_zero_input_finite():
    spec = builtin("ex2")
    problem, config = spec.build(), make_config(spec)
    assert np.isfinite(objective(problem, config, np.zeros((28, 1))))


def test_estimated_mu_mode(ex1):
    problem, config = ex1

    res = solve(problem, replace(config, mu_mode="estimated", max_iter=200))
    assert np.isfinite(res.J_star) and res.mu_star.shape == (1,)
    assert abs(res.terminal_state[0] - 4.0) < 0.1


def test_multi_trial_single(ex1):
    problem, config = ex1
    stats = multi_trial(problem, config, 1)
    assert stats.std_J == 0 and np.all(stats.std_terminal == 0)
    assert stats.seeds == [config.seed]


def test_multi_trial_statistics(ex1):
    problem, config = ex1
    stats = multi_trial(problem, config, 4, base_seed=7)
    Js = [r.J_star for r in stats.results]
    assert stats.seeds == [7, 8, 9, 10]
    assert stats.mean_J == pytest.approx(np.mean(Js), rel=1e-14)
    assert stats.std_J == pytest.approx(np.std(Js, ddof=1), rel=1e-12)
    assert stats.n_failed == 0


def test_multi_trial_parallel_identical(ex1):
    problem, config = ex1
    a = multi_trial(problem, config, 3, jobs=1)
    b = multi_trial(problem, config, 3, jobs=3)
    for ra, rb in zip(a.results, b.results):
        assert ra.trace_objective.tobytes() == rb.trace_objective.tobytes()


def test_multi_trial_records_failures():
    problem = ControlProblem(
        "boom", np.array([1.0]), 1.0, 0.01, 1,
        CostSpec(lambda x, u, t: x[:, 0] ** 2, target=[0.0]),
        lambda U, dt: rollout_smooth_batch(lambda x, u, t: 1e4 * x + u, np.array([1.0]), U, dt),
    )
    stats = multi_trial(problem, OptimizerConfig(m=2), 2)
    assert stats.n_failed == 2 and not stats.successful
    assert math.isnan(stats.mean_J)


def test_sweep_orders_by_m(ex1):
    problem, config = ex1
    rows = sweep_m(problem, config, [4, 2])
    assert [r.m for r in rows] == [2, 4]
    single = multi_trial(problem, config, 1)
    assert rows[1].mean_J == single.mean_J


def test_sweep_requires_values(ex1):
    with pytest.raises(ConfigurationError):
        sweep_m(*ex1, [])
