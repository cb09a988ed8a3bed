import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from lensforge.action import IntegrableActionHamiltonian
from lensforge.diagnostics import invariance_defect, periodicity_defect
from lensforge.exceptions import DomainError, ParameterError
from lensforge.injector import (
    EntropyInjector,
    InjectedSectionMap,
    InjectionParams,
    PerturbedShearFlow,
    ShearDynamics,
    build_disc_kick,
    compose_injected_map,
    energy_ramp,
    inner_time1_map,
)

STD = IntegrableActionHamiltonian.standard(2)


@pytest.fixture(scope="module")
def R():
    return InjectedSectionMap(STD, InjectionParams())


def _inner_samples(R, k, seed=0):
    return R.sample_invariant_region(k, seed=seed)


def test_params_defaults_and_validation():
    p = InjectionParams()
    assert p.epsilon == pytest.approx(np.pi**2 / 64)
    assert InjectionParams.from_dict(p.to_dict()) == p
    assert InjectionParams(N=0).epsilon == 0.0
    for bad in (dict(h0=0.0), dict(delta=1.5), dict(N=1), dict(amplitude=-1.0), dict(nested=0)):
        with pytest.raises(ParameterError):
            InjectionParams(**bad)


def test_energy_ramp_plateaus():
    h0 = 0.05
    h = np.array([0.0, h0 / 3, -h0 / 3, 2 * h0 / 3, 0.9 * h0])
    np.testing.assert_array_equal(energy_ramp(h, h0), [1.0, 1.0, 1.0, 0.0, 0.0])


def test_inner_rotation_quarter_turn():
    img, _ = inner_time1_map(np.array([[1.0, 0.0]]), np.pi**2 / 16, np.array([1.0]))
    np.testing.assert_allclose(img, [[0.0, -np.pi / 4]], atol=1e-15)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(2, 40), q=st.floats(-1, 1), p=st.floats(-1, 1), sgn=st.sampled_from([1.0, -1.0]))
def test_inner_rotation_periodic(N, q, p, sgn):
    w0 = np.array([[q, p]])
    w = w0
    for _ in range(N):
        w = inner_time1_map(w, np.pi**2 / N**2, np.array([sgn]))[0]
    assert np.max(np.abs(w - w0)) <= 1e-12


def test_inner_rotation_limit_and_conservation():
    w = np.array([[0.3, -0.2, 0.1, 0.25]])
    s = np.array([1.0, -1.0])
    img, _ = inner_time1_map(w, 0.0, s)
    np.testing.assert_allclose(img, [[0.3 + 2 * 0.1, -0.2 - 2 * 0.25, 0.1, 0.25]], atol=1e-15)
    flow = PerturbedShearFlow(s, 0.04)
    eps = 0.1
    img, _ = inner_time1_map(w * 0.1, eps, s)
    assert abs(flow.conserved(img, eps) - flow.conserved(w * 0.1, eps))[0] <= 1e-10


def test_inner_and_collar_agree_at_seam():
    eps, delta = np.pi**2 / 64, 0.04
    flow = PerturbedShearFlow(np.array([1.0]), delta)
    rng = np.random.default_rng(0)
    ang = rng.uniform(0, 2 * np.pi, 10)
    rad = np.sqrt(eps * delta / 2) * 0.999
    w = np.stack([rad * np.cos(ang) / np.sqrt(eps), rad * np.sin(ang)], -1)
    a, Sa = flow.evaluate(w, eps, route=1)
    b, Sb = flow.evaluate(w, eps, route=2)
    assert np.max(np.abs(a - b)) <= 1e-8
    assert np.max(np.abs(Sa - Sb)) <= 1e-8


def test_collar_not_periodic():
    eps, delta = np.pi**2 / 64, 0.04
    flow = PerturbedShearFlow(np.array([1.0]), delta)
    w = np.array([[0.0, np.sqrt(0.6 * delta)]])
    assert flow.classify(w, eps)[0] == 2
    assert periodicity_defect(lambda x: flow.evaluate(x, eps), 8, w) > 1e-3


def test_inner_periodicity_on_samples(R):
    w = _inner_samples(R, 100)
    assert periodicity_defect(lambda x: R.flow.evaluate(x, R.epsilon0), 8, w) <= 1e-8


def test_zero_perturbation_is_shear():
    Rz = InjectedSectionMap(STD, InjectionParams(N=0, amplitude=0.0))
    rng = np.random.default_rng(0)
    z = np.concatenate([rng.uniform(-1, 1, (50, 1)), rng.uniform(-0.3, 0.3, (50, 1))], -1)
    h = rng.uniform(-0.03, 0.03, 50)
    a, Sa = Rz.evaluate(z, h)
    b, Sb = Rz.shear(z, h)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(Sa, Sb)


def test_outside_energy_window_is_shear(R):
    rng = np.random.default_rng(1)
    z = np.concatenate([rng.uniform(-0.1, 0.1, (50, 1)), rng.uniform(-0.1, 0.1, (50, 1))], -1)
    h = rng.choice([-1, 1], 50) * rng.uniform(2 * 0.05 / 3, 0.05, 50)
    np.testing.assert_array_equal(R.evaluate(z, h)[0], R.shear(z, h)[0])


def _chart_points(R, k, seed):
    w = R.sample_invariant_region(k, seed=seed, shrink=1.5)
    return R.chart.inverse(w, np.zeros(k))


def test_level_preservation_and_symplectic(R):
    z = _chart_points(R, 60, 2)
    h = np.random.default_rng(2).uniform(-0.03, 0.03, 60)
    assert R.level_defect(z, h) <= 1e-9
    assert R.symplectic_defect(z, h, step=1e-7) <= 1e-6


def test_action_primitive(R):
    z = _chart_points(R, 20, 3)
    h = np.zeros(20)
    img, _ = R.evaluate(z, h)
    step = 1e-7
    for e in np.eye(2):
        ip, sp = R.evaluate(z + step * e, h)
        im, sm = R.evaluate(z - step * e, h)
        lhs = img[:, 1] * (ip - im)[:, 0] / (2 * step) - z[:, 1] * e[0]
        assert np.max(np.abs((sp - sm) / (2 * step) - lhs)) <= 1e-5


def test_disc_return_equals_kick(R):
    kick = R.kick
    c, r = kick.discs[0]
    pts = kick.from_normal(kick._centre(c) + r * 0.95 * np.array([[0.0, 0.0], [0.5, 0.1], [-0.2, -0.6]]))
    G = compose_injected_map(R.flow, kick)
    w = pts
    for _ in range(R.params.N):
        w = G(w, R.epsilon0)[0]
    assert np.max(np.abs(w - kick(pts))) <= 1e-8


def test_disc_overlap_rejected():
    with pytest.raises(ParameterError):
        build_disc_kick(InjectionParams(disc={"center": [0.05, 0.0], "radius": 0.04}))


def test_chart_dynamics_invariance_reduced(R):
    dyn = R.chart_dynamics(0.0)
    starts = _inner_samples(R, 100, seed=4)
    assert invariance_defect(dyn, R.invariant_region, starts, iterates=300) == 0
    with pytest.raises(DomainError):
        dyn.step(np.array([[1.0, 1.0]]))
    out, J = dyn.step(starts[:5])
    np.testing.assert_allclose(np.linalg.det(J), 1.0, atol=1e-12)


def test_shear_dynamics_jacobian():
    dyn = ShearDynamics(STD, 0.0)
    z = np.array([[0.1, 0.3], [0.2, -0.1]])
    out, J = dyn.step(z)
    step = 1e-6
    fd = np.stack([(dyn(z + step * e) - dyn(z - step * e)) / (2 * step) for e in np.eye(2)], -1)
    np.testing.assert_allclose(J, fd, atol=1e-8)


def test_estimator_interface(R):
    est = EntropyInjector().fit(STD.to_json())
    assert clone(est).get_params() == est.get_params()
    rows = np.array([[0.1, 0.05, 0.0], [0.3, 0.2, 0.01]])
    out = est.transform(rows)
    np.testing.assert_array_equal(out[:, -1], rows[:, -1])
    np.testing.assert_allclose(out[:, :2], R.evaluate(rows[:, :2], rows[:, 2])[0], atol=0)
