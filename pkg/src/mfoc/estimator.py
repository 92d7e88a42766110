"""Sample-based gradient estimates of a scalar objective.

Two schemes are provided:

``central``
    Coordinate central differences, ``(J(th + eps e_i) - J(th - eps e_i)) / 2 eps``.
``ls``
    Randomized least squares: ``K`` perturbations with i.i.d. entries in
    ``{-eps, +eps}``, forward differences against the base value, and the
    least-squares solution of ``dTheta g = dJ`` obtained from a QR
    factorization of ``dTheta``.

Objectives may be scalar (``f(theta) -> float``) or vectorized over rows
(``f(Theta) -> array`` for ``Theta`` of shape ``(K, p)``); pass
``vectorized=True`` for the latter.  Non-finite values mark diverged samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, EstimationError


_MAX_REDRAWS = 64


class SchemeKind(enum.Enum):
    CENTRAL = "central"
    LEAST_SQUARES = "ls"


@dataclass(frozen=True)
class PerturbationScheme:
    kind: SchemeKind = SchemeKind.LEAST_SQUARES
    epsilon: float = 1e-3
    samples: Optional[int] = None  # K; defaults to 2p
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.kind, str):
            try:
                object.__setattr__(self, "kind", SchemeKind(self.kind.lower()))
            except ValueError:
                raise ConfigurationError(f"unknown estimator {self.kind!r} (expected 'ls' or 'central')") from None
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if self.samples is not None and self.samples < 1:
            raise ConfigurationError(f"samples must be >= 1, got {self.samples}")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")

    def sample_count(self, p: int) -> int:
        K = 2 * p if self.samples is None else int(self.samples)
        if K < p:
            raise ConfigurationError(f"samples K={K} is smaller than parameter dimension p={p}")
        return K


def _draw(scheme: PerturbationScheme, K: int, p: int, key: list) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([scheme.seed] + key))
    signs = rng.integers(0, 2, size=(K, p)) * 2 - 1
    return scheme.epsilon * signs.astype(float)


def perturbations(scheme: PerturbationScheme, p: int, iteration: int = 0, attempt: int = 0) -> np.ndarray:
    """The ``K x p`` Rademacher perturbation matrix for one iteration.

    Depends only on ``(seed, iteration, attempt)``, never on evaluation order.
    A draw without full column rank is redrawn before any objective is spent
    on it; small ``p`` makes such coincidences common.
    """
    K = scheme.sample_count(p)
    D = _draw(scheme, K, p, [iteration, attempt])
    for redraw in range(1, _MAX_REDRAWS + 1):
        if np.linalg.matrix_rank(D) == p:
            break
        D = _draw(scheme, K, p, [iteration, attempt, redraw])
    return D


def _evaluate(objective, thetas: np.ndarray, vectorized: bool) -> np.ndarray:
    if vectorized:
        vals = np.asarray(objective(thetas), dtype=float).reshape(-1)
        if vals.size != thetas.shape[0]:
            raise EstimationError(f"vectorized objective returned {vals.size} values for {thetas.shape[0]} points")
        return vals
    return np.array([float(objective(th)) for th in thetas])


def _ls_solve(D: np.ndarray, dJ: np.ndarray) -> np.ndarray | None:
    Q, R = np.linalg.qr(D)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= 1e-10 * max(diag.max(), np.finfo(float).tiny):
        return None
    return np.linalg.solve(R, Q.T @ dJ)


def estimate_gradient(
    objective: Callable,
    theta,
    scheme: PerturbationScheme,
    *,
    iteration: int = 0,
    base_value: float | None = None,
    vectorized: bool = False,
) -> np.ndarray:
    """Estimate the gradient of ``objective`` at the flat parameter vector ``theta``."""
    theta = np.asarray(theta, dtype=float).reshape(-1)
    p = theta.size
    eps = scheme.epsilon

    if scheme.kind is SchemeKind.CENTRAL:
        steps = eps * np.eye(p)
        vals = _evaluate(objective, np.vstack([theta + steps, theta - steps]), vectorized)
        if not np.all(np.isfinite(vals)):
            raise EstimationError("central-difference sample diverged")
        return (vals[:p] - vals[p:]) / (2.0 * eps)

    if base_value is None:
        base_value = float(_evaluate(objective, theta[None], vectorized)[0])
    if not np.isfinite(base_value):
        raise EstimationError("objective is not finite at the base point")

    # a second draw is appended to the surviving rows rather than replacing them
    D_all, dJ_all = np.empty((0, p)), np.empty(0)
    for attempt in range(2):
        D = perturbations(scheme, p, iteration, attempt)
        vals = _evaluate(objective, theta + D, vectorized)
        keep = np.isfinite(vals)
        D_all = np.vstack([D_all, D[keep]])
        dJ_all = np.concatenate([dJ_all, vals[keep] - base_value])
        if D_all.shape[0] < p:
            continue
        g = _ls_solve(D_all, dJ_all)
        if g is not None:
            return g
    raise EstimationError(
        f"least-squares gradient system is rank deficient after resampling (p={p}, iteration={iteration})"
    )


def flatten(theta, mu=None) -> np.ndarray:
    """Column-major coefficients followed by multiplier entries."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 2:
        raise ValueError(f"coefficient matrix must be 2-D, got shape {theta.shape}")
    flat = theta.reshape(-1, order="F")
    if mu is None:
        return flat.copy()
    return np.concatenate([flat, np.asarray(mu, dtype=float).reshape(-1)])


def unflatten(vec, m: int, n_u: int, n_mu: int = 0):
    """Inverse of :func:`flatten`; returns ``theta`` or ``(theta, mu)`` when ``n_mu > 0``."""
    vec = np.asarray(vec, dtype=float).reshape(-1)
    if vec.size != m * n_u + n_mu:
        raise ValueError(f"vector of length {vec.size} does not match {m}x{n_u} + {n_mu}")
    theta = vec[: m * n_u].reshape((m, n_u), order="F").copy()
    if n_mu == 0:
        return theta
    return theta, vec[m * n_u:].copy()
