import numpy as np
import pytest

from lensforge.exceptions import DimensionError, ParameterError
from lensforge.family import (
    DiscKickFamily,
    ExtendedMap,
    extend_high_dim,
    family_from_realization,
    family_ramp,
)
from lensforge.maps import FiberShear, IdentityMap


@pytest.fixture(scope="module")
def shear_family():
    phi0 = FiberShear.with_c1_size(0.01, m=1, radius=0.4, momentum_radius=0.4, energy_radius=0.4)
    return phi0, family_from_realization(phi0)


def _fibre_points(n, k, radius, seed=0):
    rng = np.random.default_rng(seed)
    X = np.zeros((k, 2 * n))
    X[:, [0, n]] = rng.uniform(-0.45, 0.45, (k, 2))
    y = rng.normal(size=(k, 2 * n - 2))
    y *= (radius / np.linalg.norm(y, axis=-1))[:, None]
    X[:, [i for i in range(2 * n) if i not in (0, n)]] = y
    return X


def test_ramp_plateaus():
    np.testing.assert_array_equal(family_ramp(np.array([0.0, 0.2, 1 / 3, 2 / 3, 0.9])), [1, 1, 1, 0, 0])


def test_identity_family_is_trivial():
    fam = family_from_realization(IdentityMap(1))
    x = np.array([[0.1, 0.2], [-0.3, 0.05]])
    np.testing.assert_array_equal(fam(0.0, x), x)
    X = np.array([[0.1, 0.2, -0.3, 0.7]])
    assert fam.value(X)[0] == 0.7
    np.testing.assert_array_equal(fam.grad(X), [[0.0, 0.0, 0.0, 1.0]])


def test_realized_family_endpoint_and_plateaus(shear_family):
    phi0, fam = shear_family
    x = np.random.default_rng(0).uniform(-0.35, 0.35, (6, 2))
    start = fam(0.0, x)
    assert np.max(np.abs(start - phi0(x, np.zeros(6)))) <= 1e-6
    assert np.max(np.abs(fam(0.25, x) - start)) <= 1e-10
    assert np.max(np.abs(fam(0.8, x) - x)) <= 1e-10


def test_normalised_hamiltonian_shares_zero_level(shear_family):
    _, fam = shear_family
    rng = np.random.default_rng(1)
    q1, q2, p1 = rng.uniform(-0.5, 0.5, (3, 20))
    rho = fam.rho(q1, q2, p1)
    X = np.stack([q1, q2, p1, rho], -1)
    assert np.max(np.abs(fam.realizer.predict(X))) <= 1e-12
    assert np.max(np.abs(fam.value(X))) <= 1e-15
    step = 1e-6
    fd = np.stack([(fam.value(X + step * e) - fam.value(X - step * e)) / (2 * step) for e in np.eye(4)], -1)
    np.testing.assert_allclose(fam.grad(X), fd, atol=1e-6)
    np.testing.assert_allclose(fam.slice_hamiltonian(q2, X[:, [0, 2]]), -rho, atol=1e-15)


def test_disc_kick_family_plateaus():
    fam = DiscKickFamily()
    x = np.random.default_rng(0).uniform(-0.4, 0.4, (20, 2))
    np.testing.assert_array_equal(fam(0.3, x), fam(0.0, x))
    np.testing.assert_array_equal(fam(0.7, x), x)
    assert np.max(np.abs(fam(0.0, x) - x)) > 1e-2


def test_extension_plateaus_and_identity():
    Phi = extend_high_dim(n=3)
    inner = _fibre_points(3, 20, 0.25)
    out = Phi(inner)
    np.testing.assert_array_equal(out[:, [0, 3]], Phi.family(0.0, inner[:, [0, 3]]))
    np.testing.assert_array_equal(np.delete(out, [0, 3], 1), np.delete(inner, [0, 3], 1))
    outer = _fibre_points(3, 20, 0.7)
    np.testing.assert_array_equal(Phi(outer), outer)


def test_extension_fibrewise_symplectic_everywhere():
    Phi = extend_high_dim(n=2)
    for r in (0.1, 0.4, 0.5, 0.6, 0.9):
        fib, _ = Phi.symplectic_defects(_fibre_points(2, 30, r, seed=int(10 * r)))
        assert fib <= 1e-12


def test_extension_full_symplectic_on_plateaus():
    Phi = extend_high_dim(n=2)
    for r in (0.2, 0.3, 0.7, 0.9):
        _, full = Phi.symplectic_defects(_fibre_points(2, 30, r))
        assert full <= 1e-12


@pytest.mark.xfail(strict=True, reason="(phi_|y|(x), y) is not symplectic where |y| is on the ramp: "
                                       "the cross term omega(D phi, d phi/dt) d|y| does not vanish")
def test_extension_full_symplectic_at_random_points():
    Phi = extend_high_dim(n=2)
    rng = np.random.default_rng(5)
    X = _fibre_points(2, 100, 1.0)
    X[:, [1, 3]] *= rng.uniform(0, 1, (100, 1))
    _, full = Phi.symplectic_defects(X)
    assert full <= 1e-6


def test_extension_errors():
    with pytest.raises(DimensionError):
        extend_high_dim(n=1)
    with pytest.raises(ParameterError):
        extend_high_dim(lambda t, x: x + np.asarray(t).reshape(-1, 1) * 0.01)
    with pytest.raises(DimensionError):
        ExtendedMap(DiscKickFamily(), 2)(np.zeros((1, 3)))
