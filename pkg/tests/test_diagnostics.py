import numpy as np
import pytest

from lensforge.action import IntegrableActionHamiltonian
from lensforge.diagnostics import (
    CatMap,
    IdentitySystem,
    LyapunovReport,
    RotationMap,
    chaotic_fraction,
    entropy_indicator,
    invariance_defect,
    lyapunov_spectrum,
    periodicity_defect,
)
from lensforge.exceptions import ParameterError
from lensforge.injector import ShearDynamics

CAT = np.log((3 + np.sqrt(5)) / 2)


def _torus(k, seed=0):
    return np.random.default_rng(seed).uniform(0, 1, (k, 2))


def test_identity_has_zero_exponents():
    rep = lyapunov_spectrum(IdentitySystem(), _torus(5), iterates=200, transient=10)
    np.testing.assert_allclose(rep.exponents, 0.0, atol=1e-15)
    assert chaotic_fraction(rep) == 0.0
    assert entropy_indicator(rep) == 0.0


def test_cat_map_calibration_and_invariants():
    rep = lyapunov_spectrum(CatMap(), _torus(10), iterates=2000, transient=100)
    assert np.max(np.abs(rep.lambda_max - CAT)) <= 0.01 * CAT
    assert rep.pairing_defect() <= 0.01 and rep.sum_defect() <= 0.01
    assert chaotic_fraction(rep, threshold=0.5) == 1.0
    assert entropy_indicator(rep) == pytest.approx(CAT, rel=0.01)


def test_cat_map_doubling_consistency():
    x = _torus(4, seed=1)
    a = lyapunov_spectrum(CatMap(), x, iterates=1000, transient=100).lambda_max
    b = lyapunov_spectrum(CatMap(), x, iterates=2000, transient=100).lambda_max
    assert np.max(np.abs(a - b) / b) <= 0.005


def test_determinism():
    x = _torus(3)
    a = lyapunov_spectrum(CatMap(), x, iterates=300, transient=10, seed=7)
    b = lyapunov_spectrum(CatMap(), x, iterates=300, transient=10, seed=7)
    assert a.exponents.tobytes() == b.exponents.tobytes()
    assert a.to_dict() == b.to_dict()


def test_shear_exponents_decay():
    dyn = ShearDynamics(IntegrableActionHamiltonian.standard(2), 0.0)
    z = np.array([[0.1, 0.2], [0.0, -0.3]])
    short = lyapunov_spectrum(dyn, z, iterates=100, transient=0).lambda_max
    longer = lyapunov_spectrum(dyn, z, iterates=1000, transient=0).lambda_max
    assert np.all(longer < short) and np.all(longer < 0.02)


def test_region_escape_freezes_rows():
    rot = RotationMap(0.3)
    x = np.array([[0.5, 0.0], [0.1, 0.1]])
    rep = lyapunov_spectrum(rot, x, iterates=50, transient=0, region=lambda y: y[:, 1] < 0.3)
    assert rep.escaped.tolist() == [True, False]
    assert chaotic_fraction(rep, threshold=-1.0) == 0.5


def test_periodicity_defect():
    N = 7
    pts = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert periodicity_defect(RotationMap(2 * np.pi / N), N, pts) <= 1e-12
    assert periodicity_defect(IdentitySystem(), 5, pts) == 0.0


def test_invariance_defect():
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 2))
    disc = lambda y: np.sum(y * y, -1) < 1.0
    assert invariance_defect(RotationMap(0.7), disc, pts, iterates=100) == 0
    dyn = ShearDynamics(IntegrableActionHamiltonian.standard(2), 0.0)
    window = lambda z: np.abs(z[:, 0]) < 1.0
    z = np.array([[0.0, 0.2], [0.0, -0.3], [0.0, 0.0]])
    assert invariance_defect(dyn, window, z, iterates=100) == 2


def test_entropy_indicator_weights():
    rep = LyapunovReport(np.array([[1.0, -1.0], [0.0, 0.0]]), 0, 1, 1, 0, np.zeros(2, bool), np.zeros((0, 2)))
    assert entropy_indicator(rep, [1.0, 3.0]) == 0.25
    with pytest.raises(ParameterError):
        entropy_indicator(rep, [1.0])
