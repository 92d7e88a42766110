"""Forward-Euler simulation of smooth, switched and constant-delay systems.

Vector fields are vectorized over a leading batch axis: a field is called as
``f(x, u, t)`` (or ``f(x, xd, u, t)`` for delayed systems) with ``x`` of shape
``(B, n_x)``, ``u`` of shape ``(B, n_u)`` and scalar ``t``, and returns an array
of shape ``(B, n_x)``.  Guards are called as ``guard(x, t)`` and return a
boolean array of shape ``(B,)``.

The public ``rollout_*`` functions simulate one trajectory and raise
:class:`DivergedRolloutError` on blow-up.  The ``*_batch`` variants simulate
many input sequences at once and report divergence per row instead, which is
what the optimizer uses for its perturbation samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergedRolloutError, SpecificationError

DIVERGENCE_LIMIT = 1e9

VectorField = Callable[..., np.ndarray]
Guard = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class Region:
    guard: Guard
    field: VectorField


RegionSpec = Sequence[Region]


@dataclass(frozen=True)
class DelaySpec:
    tau: float
    history: Callable[[float], np.ndarray]

    def steps(self, dt: float) -> int:
        if not self.tau > 0:
            raise ConfigurationError(f"delay tau must be > 0, got {self.tau} (use rollout_smooth)")
        ratio = self.tau / dt
        d = int(round(ratio))
        if abs(ratio - d) > 1e-9 or d < 1:
            raise ConfigurationError(f"delay tau={self.tau} is not an integer multiple of dt={dt}")
        return d


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def N(self) -> int:
        return self.inputs.shape[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]


@dataclass
class BatchRollout:
    """States of ``B`` simultaneous rollouts; ``diverged_at[b] = -1`` if row ``b`` stayed finite."""

    times: np.ndarray
    states: np.ndarray  # (B, N+1, n_x)
    inputs: np.ndarray  # (B, N, n_u)
    diverged_at: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.diverged_at < 0

    def trajectory(self, b: int) -> Trajectory:
        return Trajectory(self.times, self.states[b], self.inputs[b])


def _as_inputs(u, N: int | None) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    if u.ndim != 2:
        raise ConfigurationError(f"input sequence must be N x n_u, got shape {u.shape}")
    if N is not None and u.shape[0] != N:
        raise ConfigurationError(f"input sequence has {u.shape[0]} rows, expected N={N}")
    return u


def _as_batch_inputs(U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim == 2:
        U = U[:, :, None]
    if U.ndim != 3:
        raise ConfigurationError(f"batched inputs must be B x N x n_u, got shape {U.shape}")
    return U


def _check_grid(dt: float, N: int) -> None:
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if N < 1:
        raise ConfigurationError(f"N must be >= 1, got {N}")


def classify_batch(regions: RegionSpec, x: np.ndarray, t: float = 0.0) -> np.ndarray:
    """0-based region index of every row of ``x`` under first-match semantics."""
    x = np.atleast_2d(x)
    idx = np.full(x.shape[0], -1, dtype=np.intp)
    for q, region in enumerate(regions):
        free = idx < 0
        if not free.any():
            break
        hit = np.broadcast_to(np.asarray(region.guard(x, t), dtype=bool), (x.shape[0],))
        idx[free & hit] = q
    if (idx < 0).any():
        bad = x[np.argmax(idx < 0)]
        raise SpecificationError(f"no region guard matches state {bad.tolist()}; add a catch-all region")
    return idx


def classify_region(regions: RegionSpec, x) -> int:
    """Return the 1-based number of the first region whose guard holds at ``x``."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    return int(classify_batch(regions, x)[0]) + 1


def switched_field(regions: RegionSpec) -> VectorField:
    """Compose a region list into a single batched field (guards on the pre-step state)."""
    regions = tuple(regions)
    if not regions:
        raise SpecificationError("switched system needs at least one region")

    def f(x, u, t):
        idx = classify_batch(regions, x, t)
        out = np.empty_like(x)
        for q in np.unique(idx):
            sel = idx == q
            out[sel] = regions[q].field(x[sel], u[sel], t)
        return out

    return f


def _euler(step_field, x0, U, dt, delay_steps=None, history=None) -> BatchRollout:
    B, N, _ = U.shape
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n_x = x0.size
    times = np.arange(N + 1) * dt
    X = np.empty((B, N + 1, n_x))
    X[:, 0] = x0
    diverged_at = np.full(B, -1, dtype=np.intp)
    alive = np.ones(B, dtype=bool)

    hist = None
    if delay_steps is not None:
        # history samples at t = (k - d) dt for k < d
        hist = np.array([np.asarray(history((k - delay_steps) * dt), dtype=float).reshape(n_x)
                         for k in range(min(delay_steps, N))])

    with np.errstate(all="ignore"):
        for k in range(N):
            x = X[:, k]
            if delay_steps is None:
                dx = step_field(x, U[:, k], times[k])
            else:
                if k < delay_steps:
                    xd = np.broadcast_to(hist[k], x.shape)
                else:
                    xd = X[:, k - delay_steps]
                dx = step_field(x, xd, U[:, k], times[k])
            xn = x + np.asarray(dx, dtype=float).reshape(B, n_x) * dt
            bad = alive & ~np.all(np.isfinite(xn) & (np.abs(xn) <= DIVERGENCE_LIMIT), axis=1)
            if bad.any():
                diverged_at[bad] = k + 1
                alive &= ~bad
                xn[bad] = np.nan
            X[:, k + 1] = xn
    return BatchRollout(times, X, U, diverged_at)


def _single(batch: BatchRollout) -> Trajectory:
    if not batch.ok[0]:
        raise DivergedRolloutError(int(batch.diverged_at[0]))
    return batch.trajectory(0)


def rollout_smooth_batch(f: VectorField, x0, U, dt: float) -> BatchRollout:
    U = _as_batch_inputs(U)
    _check_grid(dt, U.shape[1])
    return _euler(f, x0, U, dt)


def rollout_switched_batch(regions: RegionSpec, x0, U, dt: float) -> BatchRollout:
    U = _as_batch_inputs(U)
    _check_grid(dt, U.shape[1])
    return _euler(switched_field(regions), x0, U, dt)


def rollout_delayed_batch(f: VectorField, delay: DelaySpec, x0, U, dt: float) -> BatchRollout:
    U = _as_batch_inputs(U)
    _check_grid(dt, U.shape[1])
    d = delay.steps(dt)
    return _euler(f, x0, U, dt, delay_steps=d, history=delay.history)


def rollout_smooth(f: VectorField, x0, u, dt: float, N: int | None = None) -> Trajectory:
    """Simulate ``x_{k+1} = x_k + f(x_k, u_k, t_k) dt`` for ``N`` steps."""
    u = _as_inputs(u, N)
    return _single(rollout_smooth_batch(f, x0, u[None], dt))


def rollout_switched(regions: RegionSpec, x0, u, dt: float, N: int | None = None) -> Trajectory:
    u = _as_inputs(u, N)
    return _single(rollout_switched_batch(regions, x0, u[None], dt))


def rollout_delayed(f: VectorField, delay: DelaySpec, x0, u, dt: float,
                    N: int | None = None) -> Trajectory:
    """Euler with an index-shift buffer; ``tau`` must be a whole number of steps."""
    u = _as_inputs(u, N)
    return _single(rollout_delayed_batch(f, delay, x0, u[None], dt))
