import numpy as np
import pytest

from lensforge.exceptions import TransversalityError
from lensforge.flow import HamiltonianField, TrajectorySpec
from lensforge.sections import (
    HyperplaneSection,
    action_angle_return_map,
    detect_crossing,
    induced_volume_estimate,
    level_restrict,
    poincare_map,
    slicing_volume_estimate,
)

SIG0 = HyperplaneSection(2, -1.0)
SIG1 = HyperplaneSection(2, 1.0)


def drift(n=2):
    return HamiltonianField(n, lambda X: X[..., 2 * n - 1])


def test_poincare_drift():
    x = SIG0.embed([0.3, 0.1, 0.2])
    res = poincare_map(drift(), SIG0, SIG1, x, TrajectorySpec(dt=1e-2, t_max=5.0))
    assert res.defined
    np.testing.assert_allclose(res.points, [0.3, 1.0, 0.1, 0.2], atol=1e-12)
    assert res.times == pytest.approx(2.0, abs=1e-10)


def test_poincare_undefined_when_no_drift():
    H = HamiltonianField(2, lambda X: X[..., 2])  # moves q1 only
    res = poincare_map(H, SIG0, SIG1, SIG0.embed([0.0, 0.1, 0.2]), TrajectorySpec(dt=0.1, t_max=5.0))
    assert not res.defined
    assert np.all(np.isnan(res.points))


def test_poincare_refinement_curved_orbit():
    # q2 dot = 1 + p1, p1 dot = -q1 ... H = p2 + p2*p1 + q1^2/2 keeps crossings transversal
    H = HamiltonianField(2, lambda X: X[..., 3] * (1 + 0.3 * X[..., 2]) + 0.5 * X[..., 0] ** 2)
    z = np.array([[0.2, 0.1, 0.0], [-0.3, -0.2, 0.5], [0.1, 0.4, -0.1]])
    res = poincare_map(H, SIG0, SIG1, SIG0.embed(z), TrajectorySpec(dt=1e-2, t_max=10.0))
    assert np.all(res.defined)
    assert np.max(np.abs(res.points[:, 1] - 1.0)) <= 1e-10
    e0 = H(SIG0.embed(z))
    assert np.max(np.abs(H(res.points) - e0)) <= 1e-8


def test_poincare_tangential_crossing():
    # crossing speed 1e-5 is below the default floor of 1e-4
    H = HamiltonianField(1, lambda X: 1e-5 * X[..., 1], grad=lambda X: np.broadcast_to([0.0, 1e-5], X.shape).copy())
    s0 = HyperplaneSection(1, 1.0 - 1e-5)
    s1 = HyperplaneSection(1, 1.0)
    with pytest.raises(TransversalityError):
        poincare_map(H, s0, s1, np.array([1.0 - 1e-5, 0.0]), TrajectorySpec(dt=0.1, t_max=3.0))


def test_detect_crossing_linear():
    t = np.linspace(0, 3, 7)
    res = detect_crossing(t, -1 + t, 1.0, velocities=np.ones_like(t))
    assert res.time == 2.0 or abs(res.time - 2.0) <= 1e-15


def test_detect_crossing_quadratic():
    t = np.linspace(0, 2, 5)
    q = t**2 - 0.7 * t - 0.3  # root at (0.7 + sqrt(0.49 + 1.2)) / 2
    v = 2 * t - 0.7
    root = (0.7 + np.sqrt(0.49 + 1.2)) / 2
    res = detect_crossing(t, q, 0.0, velocities=v)
    assert abs(res.time - root) <= 1e-10


def test_detect_crossing_none_and_tangential():
    t = np.linspace(0, 1, 5)
    assert detect_crossing(t, t, 5.0) is None
    # q = -(t-1)^2 touches 0 at t=1 from below with zero velocity
    t = np.linspace(0, 2, 9)
    with pytest.raises(TransversalityError):
        detect_crossing(t, -(t - 1) ** 2, 0.0, velocities=-2 * (t - 1))


def test_level_restrict_examples():
    grid = np.random.default_rng(0).uniform(-0.5, 0.5, (50, 2))
    exact = level_restrict(lambda z: z, 0.1, grid)
    assert exact.defect == 0.0
    bad = level_restrict(lambda z: z + np.array([0, 0, 0.05]), 0.1, grid)
    assert bad.defect == pytest.approx(0.05)


def test_level_restrict_symplectic_defect():
    s = 0.02

    def shear(z):
        out = z.copy()
        out[..., 1] += s * np.sin(np.pi * z[..., 0]) * (1 + z[..., 2])
        return out

    slc = level_restrict(shear, 0.1, np.zeros((1, 2)))
    pts = np.random.default_rng(0).uniform(-0.5, 0.5, (20, 2))
    assert slc.symplectic_defect(pts) <= 1e-6
    # a non-area-preserving map is flagged
    slc = level_restrict(lambda z: z * np.array([1.1, 1.0, 1.0]), 0.1, np.zeros((1, 2)))
    assert slc.symplectic_defect(pts) > 0.05


def test_induced_volume_unit_cube():
    sec = HyperplaneSection(2, 0.0)
    est = induced_volume_estimate(drift(), sec, ([0, 0, 0], [1, 1, 1]), 2000, seed=1)
    assert est.value == pytest.approx(1.0, abs=1e-9)  # fd gradient
    empty = induced_volume_estimate(drift(), sec, ([0, 0, 0], [0, 1, 1]), 100, seed=1)
    assert empty.value == 0.0


def _nonlinear():
    # dH/dp2 = 1 + p1^2 + p2 varies across the box
    return HamiltonianField(2, lambda X: X[..., 3] + X[..., 3] * X[..., 2] ** 2 + 0.5 * X[..., 3] ** 2
                            + 0.1 * np.sin(X[..., 0]))


def test_induced_volume_additive_and_slicing():
    H = _nonlinear()
    sec = HyperplaneSection(2, 0.0)
    whole = induced_volume_estimate(H, sec, ([0, 0, 0], [1, 1, 1]), 20000, seed=2)
    left = induced_volume_estimate(H, sec, ([0, 0, 0], [0.5, 1, 1]), 20000, seed=3)
    right = induced_volume_estimate(H, sec, ([0.5, 0, 0], [1, 1, 1]), 20000, seed=4)
    s = np.sqrt(whole.stderr**2 + left.stderr**2 + right.stderr**2)
    assert abs(left.value + right.value - whole.value) <= 3 * s
    # closed form: int (1 + p1^2 + p2) = 1 + 1/3 + 1/2
    assert abs(whole.value - 11 / 6) <= 3 * whole.stderr
    sliced = slicing_volume_estimate(H, sec, ([0, 0, 0], [1, 1, 1]), 20000, seed=5)
    assert whole.agrees(sliced)


def test_action_angle_return_map_examples():
    freq = lambda p: np.stack([p[..., 0], 1 + p[..., 1]], axis=-1)
    out = action_angle_return_map(freq, [0.3, 0.0, 0.0])
    np.testing.assert_allclose(out, [0.3, 0.0, 0.0])
    out = action_angle_return_map(freq, [0.1, 0.6, -0.2])
    np.testing.assert_allclose(out, [0.85, 0.6, -0.2], atol=1e-15)
    half = lambda p: np.stack([0.5 * np.ones(p.shape[:-1]), np.ones(p.shape[:-1])], axis=-1)
    np.testing.assert_allclose(action_angle_return_map(half, [0.8, 0, 0])[0], 0.3, atol=1e-15)
    with pytest.raises(TransversalityError):
        action_angle_return_map(lambda p: np.array([0.1, -1.0]), [0.0, 0.0, 0.0])
