import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lensforge.exceptions import DimensionError, DomainError, ParameterError
from lensforge.geometry import (
    OneFormField,
    PhasePoint,
    antiderivative,
    bump_mu,
    closedness_defect,
    cutoff_xi,
    loop_integral,
    smooth_step,
    symplectic_defect,
    symplectic_matrix,
)


def test_symplectic_defect_examples():
    assert symplectic_defect(np.eye(2)) == 0.0
    assert symplectic_defect([[2.0, 1.0], [1.0, 1.0]]) == 0.0
    assert symplectic_defect(np.diag([2.0, 2.0])) == 3.0


def test_symplectic_defect_odd_dimension():
    with pytest.raises(DimensionError):
        symplectic_defect(np.eye(3))


def _random_symplectic(rng, m):
    # exp of a Hamiltonian matrix via Cayley transform keeps things exact enough
    S = rng.normal(size=(2 * m, 2 * m)) * 0.3
    S = S + S.T
    A = symplectic_matrix(m) @ S
    eye = np.eye(2 * m)
    return np.linalg.solve(eye - 0.5 * A, eye + 0.5 * A)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.05))
def test_defect_submultiplicative(seed, eps):
    rng = np.random.default_rng(seed)
    J1 = _random_symplectic(rng, 2) + eps * rng.normal(size=(4, 4))
    J2 = _random_symplectic(rng, 2) + eps * rng.normal(size=(4, 4))
    for J in (J1, J2):
        J *= min(1.0, 2.0 / np.linalg.norm(J, 2))
    d12 = symplectic_defect(J1 @ J2)
    # constant from the 4x4 max-norm/operator-norm equivalence with |J| <= 2
    assert d12 <= 64.0 * (symplectic_defect(J1) + symplectic_defect(J2)) + 1e-12


def test_phase_point_validation():
    x = PhasePoint([1.0, 2.0], [3.0, 4.0])
    assert x.n == 2
    np.testing.assert_array_equal(x.as_array(), [1, 2, 3, 4])
    with pytest.raises(DimensionError):
        PhasePoint([1.0], [1.0, 2.0])
    with pytest.raises(ParameterError):
        PhasePoint([np.nan], [0.0])


def test_bump_mu_examples_and_exact_endpoints():
    assert bump_mu(-1.0) == 1.0
    assert bump_mu(1.0) == 0.0
    assert bump_mu(0.0) == pytest.approx(0.5, abs=1e-15)
    t = np.array([-5.0, -0.5, 0.5, 7.0])
    np.testing.assert_array_equal(bump_mu(t), [1.0, 1.0, 0.0, 0.0])


def test_bump_mu_monotone_and_symmetric():
    t = np.linspace(-0.5, 0.5, 2001)
    v = bump_mu(t)
    assert np.all(np.diff(v) <= 0)
    np.testing.assert_allclose(v + v[::-1], 1.0, atol=1e-14)


@pytest.mark.parametrize("deriv", [1, 2])
def test_smooth_step_derivatives_match_differences(deriv):
    u = np.linspace(0.02, 0.98, 97)
    h = 1e-6
    fd = (smooth_step(u + h, deriv - 1) - smooth_step(u - h, deriv - 1)) / (2 * h)
    np.testing.assert_allclose(smooth_step(u, deriv), fd, atol=1e-6)


def test_bump_mu_derivative_sign_convention():
    t = np.linspace(-0.4, 0.4, 9)
    h = 1e-6
    fd = (bump_mu(t + h) - bump_mu(t - h)) / (2 * h)
    np.testing.assert_allclose(bump_mu(t, 1), fd, atol=1e-7)
    fd2 = (bump_mu(t + h, 1) - bump_mu(t - h, 1)) / (2 * h)
    np.testing.assert_allclose(bump_mu(t, 2), fd2, atol=1e-6)


def test_cutoff_xi_examples():
    assert cutoff_xi(0.0, 0.2) == 1.0
    assert cutoff_xi(0.5, 0.2) == 0.0
    mid = cutoff_xi(0.15, 0.2)
    assert 0.0 < mid < 1.0
    assert cutoff_xi(0.149, 0.2) > mid > cutoff_xi(0.151, 0.2)
    np.testing.assert_array_equal(cutoff_xi(np.array([0.0, 0.1, 0.2, 1.0]), 0.2), [1, 1, 0, 0])


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 2.0])
def test_cutoff_xi_rejects_delta(delta):
    with pytest.raises(ParameterError):
        cutoff_xi(0.1, delta)


def test_cutoff_xi_derivative():
    s = np.linspace(0.11, 0.19, 9)
    h = 1e-7
    fd = (cutoff_xi(s + h, 0.2) - cutoff_xi(s - h, 0.2)) / (2 * h)
    np.testing.assert_allclose(cutoff_xi(s, 0.2, 1), fd, rtol=1e-5, atol=1e-6)


# one-forms ------------------------------------------------------------------

const_form = OneFormField(2, lambda x: np.array([1.0, 2.0]))
exact_form = OneFormField(2, lambda x: np.array([x[1], x[0]]))
shear_form = OneFormField(2, lambda x: np.array([x[1], 0.0]))


def test_antiderivative_constant_form():
    rng = np.random.default_rng(0)
    for q in rng.uniform(-1, 1, size=(5, 2)):
        val = antiderivative(const_form, [0.0, -1.0], q)
        assert val == pytest.approx(q[0] + 2 * q[1] + 2, abs=1e-12)


def test_antiderivative_zero_path():
    assert antiderivative(shear_form, [0.3, 0.2], [0.3, 0.2]) == 0.0


def test_antiderivative_exact_form():
    assert antiderivative(exact_form, [0.0, 0.0], [1.0, 1.0]) == pytest.approx(1.0, abs=1e-12)


def test_antiderivative_domain_error():
    boxed = OneFormField(2, lambda x: np.ones(2), domain=([-1, -1], [1, 1]))
    with pytest.raises(DomainError):
        antiderivative(boxed, [0.0, 0.0], [2.0, 0.0])


def _wavy(x):
    # gradient of sin(x0) * exp(x1) + x2^2 x0
    return np.array([np.cos(x[0]) * np.exp(x[1]) + x[2] ** 2,
                     np.sin(x[0]) * np.exp(x[1]),
                     2 * x[2] * x[0]])


wavy_form = OneFormField(3, _wavy)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=9, max_size=9))
def test_antiderivative_additive(coords):
    a, b, c = np.array(coords).reshape(3, 3)
    ab = antiderivative(wavy_form, a, b)
    bc = antiderivative(wavy_form, b, c)
    ac = antiderivative(wavy_form, a, c)
    assert abs(ab + bc - ac) <= 1e-10


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-1, 1), min_size=6, max_size=6), st.permutations([0, 1, 2]))
def test_antiderivative_path_independent(coords, order):
    a, b = np.array(coords).reshape(2, 3)
    assert closedness_defect(wavy_form, a) <= 1e-8
    v1 = antiderivative(wavy_form, a, b)
    v2 = antiderivative(wavy_form, a, b, order=order)
    assert abs(v1 - v2) <= 1e-8


def test_closedness_defect_examples():
    assert closedness_defect(const_form, [0.2, 0.4]) == 0.0
    assert closedness_defect(shear_form, [0.2, 0.4]) == pytest.approx(1.0, abs=1e-8)
    assert closedness_defect(exact_form, [0.2, 0.4]) <= 1e-8


def test_closedness_defect_uses_analytic_jacobian():
    form = OneFormField(2, lambda x: np.array([x[1], 0.0]),
                        jacobian=lambda x: np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert closedness_defect(form, [0.0, 0.0]) == 1.0


def test_loop_integral_exact_and_angular():
    assert abs(loop_integral(exact_form, ((-1, 1), (-1, 1)))) <= 1e-12
    angular = OneFormField(2, lambda x: np.array([-x[1], x[0]]) / (x[0] ** 2 + x[1] ** 2))
    assert loop_integral(angular, ((-1, 1), (-1, 1))) == pytest.approx(2 * np.pi, abs=1e-10)
    # orientation: clockwise traversal flips the sign of the shear form circulation
    # d(q2 dq1) = -dq1^dq2, so counter-clockwise circulation is minus the area
    assert loop_integral(shear_form, ((0, 2), (0, 1))) == pytest.approx(-2.0, abs=1e-12)
