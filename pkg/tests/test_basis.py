import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfoc.basis import BasisKind, BasisSet, basis_matrix, control_signal, eval_basis


def test_chebyshev_midpoint():
    np.testing.assert_array_equal(eval_basis(BasisSet("chebyshev", 4, 1.0), 0.5), [1, 0, -1, 0])


def test_legendre_midpoint():
    np.testing.assert_allclose(eval_basis(BasisSet("legendre", 3, 2.0), 1.0), [1, 0, -0.5], atol=0)


def test_fourier_at_origin():
    np.testing.assert_array_equal(eval_basis(BasisSet("fourier", 5, 2.0), 0.0), [1, 0, 1, 0, 1])


def test_fourier_ordering():
    tf = 3.0
    t = 0.7
    w = 2 * np.pi / tf
    expected = [1, np.sin(w * t), np.cos(w * t), np.sin(2 * w * t), np.cos(2 * w * t), np.sin(3 * w * t)]
    np.testing.assert_allclose(eval_basis(BasisSet("fourier", 6, tf), t), expected, rtol=1e-14)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError, match="unknown basis"):
        BasisSet("hermite", 3, 1.0)


@pytest.mark.parametrize("m", [0, -1, 2.5])
def test_bad_size_rejected(m):
    with pytest.raises(ValueError):
        BasisSet("legendre", m, 1.0)


@pytest.mark.parametrize("t", [-0.1, 1.01, np.nan])
def test_outside_horizon(t):
    with pytest.raises(ValueError, match="outside"):
        eval_basis(BasisSet("chebyshev", 3, 1.0), t)


def test_basis_matrix_chebyshev_endpoints():
    np.testing.assert_array_equal(basis_matrix(BasisSet("chebyshev", 2, 1.0), [0, 1]), [[1, -1], [1, 1]])


def test_basis_matrix_fourier_constant():
    B = basis_matrix(BasisSet("fourier", 1, 2.0), np.linspace(0, 2, 17))
    np.testing.assert_array_equal(B, np.ones((17, 1)))


def test_legendre_matches_explicit_polynomials():
    tf = 1.7
    grid = np.linspace(0, tf, 200)
    s = 2 * grid / tf - 1
    explicit = np.column_stack([np.ones_like(s), s, (3 * s**2 - 1) / 2, (5 * s**3 - 3 * s) / 2])
    np.testing.assert_allclose(basis_matrix(BasisSet("legendre", 4, tf), grid), explicit, atol=1e-14)


def test_rows_match_eval_basis():
    b = BasisSet("chebyshev", 6, 2.0)
    grid = np.linspace(0, 2, 11)
    B = basis_matrix(b, grid)
    for j, t in enumerate(grid):
        np.testing.assert_array_equal(B[j], eval_basis(b, t))


def test_control_signal_constant_coefficient():
    rows = np.array([[1.0, s] for s in np.linspace(-1, 1, 5)])
    np.testing.assert_array_equal(control_signal([[2.0], [0.0]], rows), np.full((5, 1), 2.0))


def test_control_signal_linear_combination():
    row = eval_basis(BasisSet("chebyshev", 2, 1.0), 0.75)  # s = 0.5
    assert control_signal([[1.0], [1.0]], row[None])[0, 0] == pytest.approx(1.5)


def test_control_signal_matches_summation_loop():
    rng = np.random.default_rng(3)
    b = BasisSet("legendre", 4, 1.0)
    grid = np.linspace(0, 1, 100)
    theta = rng.normal(size=(4, 1))
    u = control_signal(theta, basis_matrix(b, grid))
    for j, t in enumerate(grid):
        phi = eval_basis(b, t)
        total = 0.0
        for i in range(4):
            total += theta[i, 0] * phi[i]
        assert u[j, 0] == pytest.approx(total, rel=1e-13, abs=1e-13)


def test_control_signal_multichannel():
    rows = basis_matrix(BasisSet("chebyshev", 3, 1.0), np.linspace(0, 1, 7))
    theta = np.array([[1.0, 0.0], [0.0, 2.0], [0.5, 0.0]])
    u = control_signal(theta, rows)
    assert u.shape == (7, 2)
    np.testing.assert_allclose(u[:, 0], rows[:, 0] + 0.5 * rows[:, 2])
    np.testing.assert_allclose(u[:, 1], 2 * rows[:, 1])


def test_control_signal_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        control_signal(np.zeros((3, 1)), np.zeros((5, 4)))


s_values = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(s=s_values)
def test_closed_forms(s):
    t = (s + 1) / 2
    T = eval_basis(BasisSet("chebyshev", 4, 1.0), t)
    P = eval_basis(BasisSet("legendre", 4, 1.0), t)
    s = 2 * t - 1
    assert abs(T[2] - (2 * s**2 - 1)) <= 1e-12
    assert abs(T[3] - (4 * s**3 - 3 * s)) <= 1e-12
    assert abs(P[2] - (3 * s**2 - 1) / 2) <= 1e-12
    assert abs(P[3] - (5 * s**3 - 3 * s) / 2) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(t=st.floats(0, 1), m=st.integers(1, 40))
def test_chebyshev_bounded(t, m):
    assert np.all(np.abs(eval_basis(BasisSet("chebyshev", m, 1.0), t)) <= 1 + 1e-12)


@settings(max_examples=100, deadline=None)
@given(
    a=st.floats(-10, 10), b=st.floats(-10, 10),
    seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(list(BasisKind)),
)
def test_control_signal_linear(a, b, seed, kind):
    rng = np.random.default_rng(seed)
    rows = basis_matrix(BasisSet(kind, 5, 2.0), np.linspace(0, 2, 30))
    t1, t2 = rng.normal(size=(5, 2)), rng.normal(size=(5, 2))
    lhs = control_signal(a * t1 + b * t2, rows)
    rhs = a * control_signal(t1, rows) + b * control_signal(t2, rows)
    scale = np.abs(a * control_signal(t1, rows)).max() + np.abs(b * control_signal(t2, rows)).max() + 1e-300
    assert np.max(np.abs(lhs - rhs)) / scale <= 1e-12


def test_fourier_gram_diagonally_dominant():
    tf = 2.0
    m = 9
    grid = np.linspace(0, tf, 1000)
    B = basis_matrix(BasisSet("fourier", m, tf), grid)[:, 1:]
    G = B.T @ B / len(grid)
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) < 1e-2 * np.min(np.diag(G))
