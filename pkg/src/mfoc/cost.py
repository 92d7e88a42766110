"""Running/terminal cost and the augmented-Lagrangian objective.

Cost callables are vectorized: ``stage(x, u, t)`` receives ``x`` of shape
``(R, n_x)``, ``u`` of shape ``(R, n_u)`` and ``t`` of shape ``(R,)`` and
returns ``(R,)`` cost rates; ``terminal(x)`` maps ``(R, n_x)`` to ``(R,)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .dynamics import BatchRollout, Trajectory
from .errors import ConfigurationError, DivergedRolloutError


def _zero_terminal(x):
    return np.zeros(np.shape(x)[0])


@dataclass(frozen=True)
class CostSpec:
    stage: Callable
    terminal: Callable = _zero_terminal
    target: Optional[np.ndarray] = None
    rho: float = 0.0

    def __post_init__(self):
        if not self.rho >= 0:
            raise ConfigurationError(f"penalty rho must be >= 0, got {self.rho}")
        if self.target is not None:
            object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(-1))

    def with_rho(self, rho: float) -> "CostSpec":
        return CostSpec(self.stage, self.terminal, self.target, rho)


def _stage_sums(spec: CostSpec, times, states, inputs) -> np.ndarray:
    # states (B, N+1, n_x), inputs (B, N, n_u) -> left Riemann sums (B,)
    B, N, n_u = inputs.shape
    n_x = states.shape[-1]
    dt = times[1] - times[0]
    x = states[:, :N].reshape(B * N, n_x)
    u = inputs.reshape(B * N, n_u)
    t = np.tile(times[:N], B)
    rates = np.asarray(spec.stage(x, u, t), dtype=float)
    rates = np.broadcast_to(rates, (B * N,)).reshape(B, N)
    term = np.broadcast_to(np.asarray(spec.terminal(states[:, N]), dtype=float), (B,))
    return term + rates.sum(axis=1) * dt


def trajectory_cost(spec: CostSpec, traj: Trajectory) -> float:
    """``Psi(x_N) + sum_k L(x_k, u_k, t_k) dt`` on the Euler grid."""
    with np.errstate(all="ignore"):
        J = _stage_sums(spec, traj.times, traj.states[None], traj.inputs[None])[0]
    if not np.isfinite(J):
        raise DivergedRolloutError(traj.N, "trajectory cost is not finite")
    return float(J)


def _require_target(spec: CostSpec) -> np.ndarray:
    if spec.target is None:
        raise ConfigurationError("cost has no terminal target; augmented terms are undefined")
    return spec.target


def terminal_residual(spec: CostSpec, traj: Trajectory) -> np.ndarray:
    """``x_N - x_f``."""
    return traj.terminal - _require_target(spec)


def _augment(spec: CostSpec, mu, J, xN):
    r = xN - _require_target(spec)
    return J + r @ np.asarray(mu, dtype=float).reshape(-1) + 0.5 * spec.rho * np.sum(r * r, axis=-1)


def augmented_cost(spec: CostSpec, mu, traj: Trajectory) -> float:
    """Trajectory cost plus ``mu . r + rho/2 |r|^2`` with ``r`` the terminal residual."""
    J = trajectory_cost(spec, traj)
    return float(_augment(spec, mu, J, traj.terminal))


def batch_objective(spec: CostSpec, mu, batch: BatchRollout) -> tuple[np.ndarray, np.ndarray]:
    """Objective per rollout row (augmented when a target exists) and the raw costs.

    Diverged rows come back as ``+inf``.
    """
    with np.errstate(all="ignore"):
        J = _stage_sums(spec, batch.times, batch.states, batch.inputs)
        if spec.target is None:
            A = J.copy()
        else:
            A = _augment(spec, mu, J, batch.states[:, -1])
    bad = ~batch.ok | ~np.isfinite(A)
    A[bad] = np.inf
    J[bad] = np.inf
    return A, J
