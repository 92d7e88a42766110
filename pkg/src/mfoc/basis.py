"""Orthogonal basis families for control parameterization.

A control signal on ``[0, tf]`` is written as ``u(t) = sum_i theta_i phi_i(t)``,
one coefficient column per input channel.  Polynomial families are evaluated
on the mapped coordinate ``s = 2 t / tf - 1``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class BasisKind(enum.Enum):
    CHEBYSHEV = "chebyshev"
    LEGENDRE = "legendre"
    FOURIER = "fourier"

    @classmethod
    def parse(cls, name: "str | BasisKind") -> "BasisKind":
        if isinstance(name, BasisKind):
            return name
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown basis {name!r} (expected one of: {valid})") from None


@dataclass(frozen=True)
class BasisSet:
    kind: BasisKind
    m: int
    tf: float

    def __post_init__(self):
        object.__setattr__(self, "kind", BasisKind.parse(self.kind))
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"basis size m must be a positive integer, got {self.m}")
        if not self.tf > 0:
            raise ValueError(f"horizon tf must be positive, got {self.tf}")


def _check_domain(basis: BasisSet, t: np.ndarray) -> None:
    # tiny slack for grids built as k*dt
    slack = 1e-12 * max(1.0, basis.tf)
    if t.size and (np.min(t) < -slack or np.max(t) > basis.tf + slack or not np.all(np.isfinite(t))):
        raise ValueError(f"time outside basis domain [0, {basis.tf}]")


def _columns(basis: BasisSet, t: np.ndarray) -> np.ndarray:
    m = basis.m
    out = np.empty(t.shape + (m,))
    if basis.kind is BasisKind.FOURIER:
        omega = 2.0 * np.pi / basis.tf
        out[..., 0] = 1.0
        for i in range(1, m):
            k = (i + 1) // 2
            out[..., i] = np.sin(k * omega * t) if i % 2 == 1 else np.cos(k * omega * t)
        return out

    s = 2.0 * t / basis.tf - 1.0
    out[..., 0] = 1.0
    if m > 1:
        out[..., 1] = s
    if basis.kind is BasisKind.CHEBYSHEV:
        for k in range(1, m - 1):
            out[..., k + 1] = 2.0 * s * out[..., k] - out[..., k - 1]
    else:
        for k in range(1, m - 1):
            out[..., k + 1] = ((2 * k + 1) * s * out[..., k] - k * out[..., k - 1]) / (k + 1)
    return out


def eval_basis(basis: BasisSet, t: float) -> np.ndarray:
    """Return ``[phi_1(t), ..., phi_m(t)]``."""
    ta = np.asarray(t, dtype=float)
    if ta.ndim != 0:
        raise ValueError("eval_basis takes a scalar time; use basis_matrix for grids")
    _check_domain(basis, ta.reshape(1))
    return _columns(basis, ta)


def basis_matrix(basis: BasisSet, grid) -> np.ndarray:
    """Stack basis rows for every time in ``grid`` into an ``N x m`` matrix."""
    g = np.asarray(grid, dtype=float).reshape(-1)
    _check_domain(basis, g)
    return _columns(basis, g)


def control_signal(theta, basisrows) -> np.ndarray:
    """Map an ``m x n_u`` coefficient matrix to ``N x n_u`` control samples.

    ``theta`` may carry leading batch dimensions (``... x m x n_u``).
    """
    theta = np.asarray(theta, dtype=float)
    rows = np.asarray(basisrows, dtype=float)
    if rows.ndim != 2 or theta.ndim < 2 or theta.shape[-2] != rows.shape[1]:
        raise ValueError(
            f"shape mismatch: basis rows {rows.shape} vs coefficients {theta.shape}"
        )
    return rows @ theta
