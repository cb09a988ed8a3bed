import numpy as np
import pytest

from lensforge.maps import (
    ChainMap,
    FiberShear,
    FlowMap,
    IdentityMap,
    InverseShearMap,
    LinearMap,
    ShearMap,
    compact_bump,
)


def _action_defect(mp, pts, h, step=1e-6):
    """Compare dS with Y.dX - p.dq along every coordinate direction."""
    m = mp.m
    worst = 0.0
    for v in np.eye(2 * m):
        plus, Sp = mp.evaluate(pts + step * v, h)
        minus, Sm = mp.evaluate(pts - step * v, h)
        img, _ = mp.evaluate(pts, h)
        dS = (Sp - Sm) / (2 * step)
        dX = (plus[:, :m] - minus[:, :m]) / (2 * step)
        lhs = np.sum(img[:, m:] * dX, axis=-1) - pts[:, m:] @ v[:m]
        worst = max(worst, float(np.max(np.abs(dS - lhs))))
    return worst


def _pts(m, k=40, scale=0.5, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, (k, 2 * m)), rng.uniform(-0.1, 0.1, k)


def test_compact_bump_derivatives():
    y = np.linspace(-0.95, 0.95, 39)
    h = 1e-6
    np.testing.assert_allclose(compact_bump(y, 1), (compact_bump(y + h) - compact_bump(y - h)) / (2 * h),
                               atol=1e-7)
    np.testing.assert_allclose(compact_bump(y, 2),
                               (compact_bump(y + h, 1) - compact_bump(y - h, 1)) / (2 * h), atol=1e-5)
    assert compact_bump(0.0) == 1.0
    assert np.all(compact_bump(np.array([-1.0, 1.0, 2.0])) == 0.0)


@pytest.mark.parametrize("m", [1, 2])
def test_linear_map_action(m):
    rng = np.random.default_rng(m)
    S = rng.normal(size=(2 * m, 2 * m))
    S = S + S.T
    from lensforge.geometry import symplectic_matrix
    A = symplectic_matrix(m) @ S * 0.3
    eye = np.eye(2 * m)
    M = np.linalg.solve(eye - 0.5 * A, eye + 0.5 * A)
    mp = LinearMap(M)
    pts, h = _pts(m)
    assert _action_defect(mp, pts, h) <= 1e-8


@pytest.mark.parametrize("kw", [
    dict(),
    dict(momentum_radius=0.4, energy_radius=0.4),
])
@pytest.mark.parametrize("m", [1, 2])
def test_fiber_shear_action_and_symplectic(m, kw):
    mp = FiberShear(m=m, amplitude=0.02, radius=0.45, **kw)
    pts, h = _pts(m)
    assert _action_defect(mp, pts, h) <= 1e-8
    assert mp.symplectic_defect(pts, h) <= 1e-8


def test_pure_fiber_shear_closed_form():
    s = 0.01
    mp = FiberShear(m=1, amplitude=s, radius=0.4)
    q = np.linspace(-0.6, 0.6, 25)
    p = np.full_like(q, 0.3)
    img = mp(np.stack([q, p], axis=-1), 0.0)
    np.testing.assert_array_equal(img[:, 0], q)
    np.testing.assert_allclose(img[:, 1], 0.3 + s * compact_bump(q / 0.4, 1) / 0.4, atol=1e-16)
    np.testing.assert_allclose(mp.action(np.stack([q, p], axis=-1), 0.0), s * compact_bump(q / 0.4),
                               atol=1e-17)


def test_fiber_shear_support():
    mp = FiberShear(m=1, amplitude=0.05, radius=0.4, momentum_radius=0.3, energy_radius=0.3)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, (500, 2))
    h = rng.uniform(-0.5, 0.5, 500)
    lo, hi = mp.support
    out = np.any((np.column_stack([pts, h]) < lo) | (np.column_stack([pts, h]) > hi), axis=1)
    img, S = mp.evaluate(pts[out], h[out])
    assert np.array_equal(img, pts[out])
    assert np.all(S == 0.0)


def test_with_c1_size():
    mp = FiberShear.with_c1_size(0.03, m=1, radius=0.4, momentum_radius=0.4, energy_radius=0.4)
    pts, hs = mp.probe_grid(41)
    assert mp.c1_size(pts, hs) == pytest.approx(0.03, rel=1e-3)


def test_shear_map_and_inverse():
    f = lambda p, h: 1 - np.sqrt(1 - p[:, 0] ** 2 + 2 * h)
    g = lambda p, h: (p[:, 0] / np.sqrt(1 - p[:, 0] ** 2 + 2 * h))[:, None]
    G = ShearMap(1, g, f)
    Gi = InverseShearMap(1, g, f)
    pts, h = _pts(1, scale=0.3)
    assert _action_defect(G, pts, h) <= 1e-8
    assert _action_defect(Gi, pts, h) <= 1e-8
    both, S = ChainMap([G, Gi]).evaluate(pts, h)
    np.testing.assert_allclose(both, pts, atol=1e-15)
    np.testing.assert_allclose(S, 0.0, atol=1e-15)


def test_flow_map_discrete_action():
    # pendulum-like slice Hamiltonian with energy dependence
    val = lambda X, h: 0.5 * X[:, 1] ** 2 * (1 + h) - 0.3 * np.cos(X[:, 0])
    grad = lambda X, h: np.stack([0.3 * np.sin(X[:, 0]), X[:, 1] * (1 + h)], axis=-1)
    mp = FlowMap(1, val, grad, T=1.0, dt=0.05)
    pts, h = _pts(1)
    assert _action_defect(mp, pts, h) <= 1e-8
    assert mp.symplectic_defect(pts, h) <= 1e-8


def test_identity_map():
    pts, h = _pts(2)
    img, S = IdentityMap(2).evaluate(pts, h)
    assert np.array_equal(img, pts) and np.all(S == 0)
