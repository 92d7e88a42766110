"""Reference solutions that share no code with the sampled-rollout solver.

``ex1_optimal`` solves the first-order example through its necessary
conditions: with Hamiltonian ``x^2 + u^2 + lam (x + u)`` the optimal input is
``u = -lam / 2`` and

    dx/dt = x - lam / 2,      dlam/dt = -2 x - lam,

with ``x(0) = 2`` and ``x(1) = 4``.  The unknown ``lam(0)`` is found by
shooting; the cost is integrated alongside the state with classical RK4.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import MfocError


def rk4(f: Callable[[float, np.ndarray], np.ndarray], y0, t0: float, t1: float, n: int) -> np.ndarray:
    """Fixed-step fourth-order Runge-Kutta; returns ``y(t1)``."""
    y = np.array(y0, dtype=float)
    h = (t1 - t0) / n
    t = t0
    for _ in range(n):
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t = t0 + (_ + 1) * h
    return y


def _ex1_rhs(t, y):
    x, lam, _ = y
    u = -lam / 2
    return np.array([x + u, -2 * x - lam, x * x + u * u])


def ex1_shoot(lam0: float, dt: float = 1e-4) -> tuple[float, float]:
    """Integrate the state/costate system from ``lam(0) = lam0``; return ``(x(1), J)``."""
    n = int(round(1.0 / dt))
    x1, _, J = rk4(_ex1_rhs, [2.0, lam0, 0.0], 0.0, 1.0, n)
    return float(x1), float(J)


def ex1_optimal(dt: float = 1e-4, target: float = 4.0) -> tuple[float, float]:
    """Optimal cost and terminal state of the first-order example."""

    def miss(lam0):
        return ex1_shoot(lam0, dt)[0] - target

    # secant; the miss is affine in lam0 so this settles in a couple of steps
    a, b = 0.0, 1.0
    fa, fb = miss(a), miss(b)
    for _ in range(50):
        if fb == fa:
            raise MfocError("shooting failed: terminal state insensitive to initial costate")
        a, b, fa = b, b - fb * (b - a) / (fb - fa), fb
        fb = miss(b)
        if abs(fb) < 1e-12 or abs(b - a) < 1e-14 * max(1.0, abs(b)):
            break
    else:
        raise MfocError("shooting did not converge")
    lam0 = b
    x1, J = ex1_shoot(lam0, dt)
    return J, x1


def finite_check(f: Callable, x, analytic_grad, eps: float = 1e-5) -> float:
    """Largest componentwise relative gap between a central-difference gradient and ``analytic_grad``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(analytic_grad, dtype=float))
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = eps
        fd[i] = (f(x + e) - f(x - e)) / (2 * eps)
    scale = np.maximum(np.maximum(np.abs(fd), np.abs(g)), 1e-12)
    return float(np.max(np.abs(fd - g) / scale))
