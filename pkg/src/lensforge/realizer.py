"""Realise a prescribed section map as the return map of a Hamiltonian flow.

Setting: the canonical model R^{2n} with H = p_n, sections
Sigma_0 = {q_n = -1} and Sigma_1 = {q_n = 1}, and a perturbation cube
U = (-eps, eps)^{2n}. Given a level-preserving slice map R (see
:mod:`lensforge.maps`), each leaf label ``phat = (pbar_hat, h)`` defines the
closed one-form

    alpha(q) = d[ mu(q_n/eps) f + (1 - mu(q_n/eps)) g ],

with f the unperturbed primitive and g the primitive whose graph over
Sigma_1 is the image R(A_phat) of the affine fibre. Writing ``g - f = D(qbar)``
and parametrising the leaf by the Sigma_0 preimage u of qbar gives

    qbar = X(u),  pbar = pbar_hat + (1 - mu) (Y(u) - pbar_hat),
    p_n  = h - mu'(q_n/eps)/eps * D,

where ``(X, Y) = R(u, pbar_hat; h)`` and ``D = pbar_hat.(u - X) + S(u) - S(base)``
comes from the map's exact action S. The realised Hamiltonian is the leaf
label h, found by Newton on ``(u, pbar_hat, h)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import (
    DimensionError,
    HypothesisError,
    InversionError,
    LocalizationError,
    ParameterError,
    PerturbationTooLargeError,
    SupportError,
)
from .flow import HamiltonianField, TrajectorySpec
from .geometry import bump_mu
from .leaves import invert_parametrisation
from .maps import SliceMap, map_from_spec, map_to_spec
from .sections import HyperplaneSection, poincare_map

__all__ = [
    "CanonicalChart",
    "canonical_rescale",
    "LensRealizer",
    "RealizedHamiltonian",
    "FoliationMap",
    "invert_foliation",
    "verify_realization",
    "VerificationReport",
    "ReturnSliceMap",
    "fiber_uniqueness_check",
    "UniquenessReport",
    "to_descriptor",
    "from_descriptor",
]


class CanonicalChart:
    """Symplectic rescaling ``(q, p) -> ((q - c_q)/eps0, eps0 (p - c_p))``.

    Parameters
    ----------
    n : int
    epsilon0 : float
        Half-width of the localisation cube in the original coordinates.
    center : array_like, optional
        Base point x0 (default origin).
    epsilon : float
        Half-width of the perturbation cube U in chart coordinates.
    """

    def __init__(self, n: int, epsilon0: float = 1.0, center=None, epsilon: float = 0.6):
        if not epsilon0 > 0:
            raise ParameterError("epsilon0 must be positive")
        if not 0 < epsilon < 1:
            raise ParameterError("epsilon must lie in (0, 1) so that U avoids both sections")
        self.n = int(n)
        self.epsilon0 = float(epsilon0)
        self.epsilon = float(epsilon)
        self.center = np.zeros(2 * n) if center is None else np.asarray(center, dtype=float)
        self._scale = np.concatenate([np.full(n, 1.0 / epsilon0), np.full(n, epsilon0)])

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.center) * self._scale

    def inverse(self, y):
        return np.asarray(y, dtype=float) / self._scale + self.center

    def jacobian(self) -> np.ndarray:
        return np.diag(self._scale)

    def to_dict(self):
        return dict(n=self.n, epsilon0=self.epsilon0, epsilon=self.epsilon,
                    center=self.center.tolist())


def canonical_rescale(H: Optional[HamiltonianField], x0, epsilon0: float, epsilon: float = 0.6,
                      samples: int = 64, tol: float = 1e-9, seed: int = 0) -> CanonicalChart:
    """Build the localisation chart around x0.

    When H is given, it is checked on random points of the cube
    ``x0 + [-eps0, eps0]^{2n}`` that H differs from the last momentum by a
    constant, which is what the chart assumes.

    Raises
    ------
    LocalizationError
        If that check fails anywhere in the cube.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim != 1 or x0.size % 2:
        raise DimensionError("x0 must be a phase point")
    n = x0.size // 2
    chart = CanonicalChart(n, epsilon0, x0, epsilon)
    if H is not None:
        rng = np.random.default_rng(seed)
        pts = x0 + epsilon0 * rng.uniform(-1, 1, (samples, 2 * n))
        dev = (H.value(pts) - H.value(x0)) - (pts[:, -1] - x0[-1])
        if np.max(np.abs(dev)) > tol:
            raise LocalizationError(
                f"H differs from p_n by up to {np.max(np.abs(dev)):.3g} inside the localisation cube")
    return chart


class FoliationMap:
    """``F(q, phat) = (q, alpha_phat(q))`` for a family of leaf one-forms.

    Parameters
    ----------
    n : int
    alpha : callable
        ``alpha(q, phat)`` with batched (B, n) arguments returns (B, n).
    c1_bound : float, optional
        Measured ``sup |DF - I|``.
    """

    def __init__(self, n: int, alpha, c1_bound: Optional[float] = None, fd_step: float = 1e-6):
        self.n = int(n)
        self.alpha = alpha
        self.c1_bound = c1_bound
        self.fd_step = fd_step

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = self.n
        return np.concatenate([x[:, :n], self.alpha(x[:, :n], x[:, n:])], axis=-1)

    def measure_c1(self, points) -> float:
        """Operator norm of ``DF - I`` maximised over sample points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = 2 * self.n
        h = self.fd_step
        E = np.eye(d) * h
        stacked = np.concatenate([pts[:, None, :] + E, pts[:, None, :] - E], axis=1).reshape(-1, d)
        img = self(stacked).reshape(pts.shape[0], 2, d, d)
        J = np.swapaxes((img[:, 0] - img[:, 1]) / (2 * h), -1, -2)
        return float(np.max(np.linalg.norm(J - np.eye(d), ord=2, axis=(-2, -1))))

    def invert(self, x, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
        """Leaf label phat with ``F(q, phat) = x`` by Newton on phat."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = self.n
        q, p = x[:, :n], x[:, n:]
        ph = p.copy()
        h = self.fd_step
        active = np.arange(x.shape[0])
        for _ in range(max_iter):
            r = self.alpha(q[active], ph[active]) - p[active]
            ok = np.max(np.abs(r), axis=-1) <= tol
            active, r = active[~ok], r[~ok]
            if active.size == 0:
                return ph
            qa, pa = q[active], ph[active]
            J = np.empty((active.size, n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                J[:, :, j] = (self.alpha(qa, pa + e) - self.alpha(qa, pa - e)) / (2 * h)
            ph[active] = pa - np.linalg.solve(J, r[..., None])[..., 0]
        raise InversionError("foliation inversion did not converge")


def invert_foliation(F: FoliationMap, x, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
    """Unique leaf label through x (see :meth:`FoliationMap.invert`)."""
    out = F.invert(x, tol, max_iter)
    return out[0] if np.asarray(x).ndim == 1 else out


class LensRealizer(TransformerMixin, BaseEstimator):
    """Build a Hamiltonian whose return map between ``q_n = -1`` and ``q_n = 1``
    is a prescribed slice map.

    ``fit`` takes the slice map; ``predict`` evaluates the realised
    Hamiltonian; ``transform`` returns leaf labels.

    Parameters
    ----------
    epsilon : float
        Half-width of the perturbation cube U.
    newton_tol : float
        Residual tolerance of the leaf-label solve.
    newton_max_iter : int
    fd_step : float
        Central-difference step for Jacobians of the leaf equations.
    hypothesis_tol : float
        Largest symplecticity defect accepted in the input map.
    c1_samples : int
        Number of random points used to measure the C^1 bound.
    random_state : int
    """

    def __init__(self, epsilon: float = 0.6, newton_tol: float = 1e-12, newton_max_iter: int = 30,
                 fd_step: float = 1e-6, hypothesis_tol: float = 1e-8, c1_samples: int = 4096,
                 random_state: int = 0):
        self.epsilon = epsilon
        self.newton_tol = newton_tol
        self.newton_max_iter = newton_max_iter
        self.fd_step = fd_step
        self.hypothesis_tol = hypothesis_tol
        self.c1_samples = c1_samples
        self.random_state = random_state

    # -- fitting ---------------------------------------------------------------
    def fit(self, X, y=None):
        """Check the slice map against the construction's hypotheses.

        Parameters
        ----------
        X : SliceMap
            The prescribed map on level slices of ``Sigma_0``.

        Raises
        ------
        SupportError
            If the declared support is not inside U.
        HypothesisError
            If the map is not symplectic on slices, or moves points outside
            its declared support.
        PerturbationTooLargeError
            If the leaf map has C^1 distance at least 1/2 from the identity.
        """
        if not isinstance(X, SliceMap):
            raise ParameterError("fit expects a SliceMap")
        if not 0 < self.epsilon < 1:
            raise ParameterError("epsilon must lie in (0, 1)")
        eps = float(self.epsilon)
        self.section_map_ = X
        self.m_ = X.m
        self.n_features_in_ = 2 * (X.m + 1)
        sup = X.support
        if sup is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in sup)
            if np.any(lo <= -eps) or np.any(hi >= eps):
                raise SupportError("declared support of the section map is not inside U")
        rng = np.random.default_rng(self.random_state)
        self._check_hypotheses(rng)
        self.c1_bound_ = self._measure_c1(rng)
        if self.c1_bound_ >= 0.5:
            raise PerturbationTooLargeError(
                f"leaf map C^1 distance {self.c1_bound_:.3g} >= 1/2; shrink the perturbation")
        return self

    def _check_hypotheses(self, rng):
        mp = self.section_map_
        m = self.m_
        eps = float(self.epsilon)
        z = rng.uniform(-eps, eps, (64, 2 * m))
        h = rng.uniform(-eps, eps, 64)
        defect = mp.symplectic_defect(z, h)
        if defect > self.hypothesis_tol:
            raise HypothesisError(f"section map is not symplectic on slices (defect {defect:.3g})")
        if mp.support is not None:
            w = rng.uniform(-1, 1, (256, 2 * m + 1))
            lo, hi = mp.support
            out = np.any((w < lo) | (w > hi), axis=1)
            img, S = mp.evaluate(w[out, :-1], w[out, -1])
            if np.max(np.abs(img - w[out, :-1]), initial=0.0) > 1e-14 or \
                    np.max(np.abs(S), initial=0.0) > 1e-14:
                raise HypothesisError("section map is not the identity outside its declared support")

    def _measure_c1(self, rng) -> float:
        n = self.m_ + 1
        k = max(2, self.c1_samples // 2)
        pts = np.concatenate([rng.uniform(-1, 1, (k, 2 * n)),
                              rng.uniform(-self.epsilon, self.epsilon, (k, 2 * n))])
        return self.foliation_map(check=False).measure_c1(pts)

    # -- leaf equations ----------------------------------------------------------
    def _base_action(self, pb, h):
        mp = self.section_map_
        if mp.support is not None:
            return np.zeros(pb.shape[0])
        base = np.concatenate([-np.ones_like(pb), pb], axis=-1)
        return mp.evaluate(base, h)[1]

    def _leaf(self, y, qn):
        """Explicit leaf equations ``T(y; q_n)``; also returns Y and D."""
        m = self.m_
        eps = float(self.epsilon)
        u, pb, h = y[:, :m], y[:, m:2 * m], y[:, 2 * m]
        img, S = self.section_map_.evaluate(y[:, :2 * m], h)
        X, Y = img[:, :m], img[:, m:]
        D = np.sum(pb * (u - X), axis=-1) + S - self._base_action(pb, h)
        t = qn / eps
        mu = bump_mu(t)[:, None]
        dmu = bump_mu(t, 1) / eps
        T = np.concatenate([X, mu * pb + (1 - mu) * Y, (h - dmu * D)[:, None]], axis=-1)
        return T, Y, D

    def _leaf_with_jacobian(self, y, qn):
        d = y.shape[1]
        B = y.shape[0]
        step = self.fd_step
        E = np.eye(d) * step
        stacked = np.concatenate([y[:, None, :], y[:, None, :] + E, y[:, None, :] - E], axis=1)
        T, Y, D = self._leaf(stacked.reshape(-1, d), np.repeat(qn, 2 * d + 1))
        T = T.reshape(B, 2 * d + 1, d)
        J = np.swapaxes((T[:, 1:d + 1] - T[:, d + 1:]) / (2 * step), -1, -2)
        idx = np.arange(B) * (2 * d + 1)
        return T[:, 0], J, Y[idx], D[idx]

    def _solve(self, X):
        """Newton solve of the leaf equations for phase points X (B, 2n)."""
        m = self.m_
        n = m + 1
        d = 2 * m + 1
        qn = X[:, m]
        target = np.concatenate([X[:, :m], X[:, n:]], axis=-1)
        y = target.copy()
        B = X.shape[0]
        J = np.empty((B, d, d))
        Yout = np.empty((B, m))
        Dout = np.empty(B)
        active = np.arange(B)
        for _ in range(self.newton_max_iter + 1):
            T, Jv, Yv, Dv = self._leaf_with_jacobian(y[active], qn[active])
            r = T - target[active]
            ok = np.max(np.abs(r), axis=-1) <= self.newton_tol
            done = active[ok]
            J[done], Yout[done], Dout[done] = Jv[ok], Yv[ok], Dv[ok]
            active = active[~ok]
            if active.size == 0:
                return y, J, Yout, Dout
            y[active] -= np.linalg.solve(Jv[~ok], r[~ok][..., None])[..., 0]
        raise InversionError(f"leaf-label Newton solve failed for {active.size} points")

    # -- masks -------------------------------------------------------------------
    def _outside_box(self, X):
        m = self.m_
        eps = float(self.epsilon)
        if self.section_map_.support is None:
            return np.zeros(X.shape[0], dtype=bool)
        rest = np.concatenate([X[:, :m], X[:, m + 1:]], axis=-1)
        return np.any(np.abs(rest) >= eps, axis=-1)

    def _label_is_momentum(self, X):
        return (X[:, self.m_] <= -0.5 * self.epsilon) | self._outside_box(X)

    def _value_is_momentum(self, X):
        return self._label_is_momentum(X) | (X[:, self.m_] >= 0.5 * self.epsilon)

    def _check_X(self, X):
        check_is_fitted(self, "section_map_")
        X = check_array(np.atleast_2d(np.asarray(X, dtype=float)), ensure_min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected phase points of dimension {self.n_features_in_}")
        return X

    # -- public evaluation ---------------------------------------------------------
    def predict(self, X):
        """Realised Hamiltonian values (leaf labels h), shape (B,)."""
        X = self._check_X(X)
        out = X[:, -1].copy()
        rows = ~self._value_is_momentum(X)
        if np.any(rows):
            y = self._solve(X[rows])[0]
            out[rows] = y[:, -1]
        return out

    def transform(self, X):
        """Leaf labels ``phat = (pbar_hat, h)``, shape (B, n)."""
        X = self._check_X(X)
        n = self.m_ + 1
        out = X[:, n:].copy()
        rows = ~self._label_is_momentum(X)
        if np.any(rows):
            y = self._solve(X[rows])[0]
            out[rows] = y[:, self.m_:]
        return out

    def gradient(self, X):
        """Gradient of the realised Hamiltonian by implicit differentiation."""
        X = self._check_X(X)
        m = self.m_
        n = m + 1
        d = 2 * m + 1
        eps = float(self.epsilon)
        grad = np.zeros_like(X)
        grad[:, -1] = 1.0
        rows = ~self._value_is_momentum(X)
        if not np.any(rows):
            return grad
        Xr = X[rows]
        y, J, Y, D = self._solve(Xr)
        e = np.zeros((Xr.shape[0], d))
        e[:, -1] = 1.0
        r = np.linalg.solve(np.swapaxes(J, -1, -2), e[..., None])[..., 0]
        t = Xr[:, m] / eps
        dmu = bump_mu(t, 1) / eps
        d2mu = bump_mu(t, 2) / eps**2
        dT = np.concatenate([np.zeros((Xr.shape[0], m)), dmu[:, None] * (y[:, m:2 * m] - Y),
                             (-d2mu * D)[:, None]], axis=-1)
        g = np.empty_like(Xr)
        g[:, :m] = r[:, :m]
        g[:, m] = -np.sum(r * dT, axis=-1)
        g[:, n:n + m] = r[:, m:2 * m]
        g[:, -1] = r[:, -1]
        grad[rows] = g
        return grad

    # -- leaves ---------------------------------------------------------------------
    def leaf_parameter(self, qbar, phat):
        """Sigma_0 parameter u of the leaf point above qbar (solves X(u) = qbar)."""
        phat = np.atleast_2d(np.asarray(phat, dtype=float))
        m = self.m_
        return invert_parametrisation(self.section_map_, qbar, phat[:, :m], phat[:, m],
                                      tol=self.newton_tol, max_iter=self.newton_max_iter,
                                      step=self.fd_step)

    def leaf_alpha(self, q, phat):
        """Momentum of the leaf ``phat`` above configuration q: ``alpha_phat(q)``."""
        check_is_fitted(self, "section_map_")
        m = self.m_
        q = np.atleast_2d(np.asarray(q, dtype=float))
        phat = np.atleast_2d(np.asarray(phat, dtype=float))
        u = self.leaf_parameter(q[:, :m], phat)
        y = np.concatenate([u, phat], axis=-1)
        T = self._leaf(y, q[:, m])[0]
        return T[:, m:]

    def leaf_primitive_difference(self, qbar, phat):
        """``D = g - f`` on the leaf phat, from the map's action."""
        m = self.m_
        u = self.leaf_parameter(qbar, phat)
        y = np.concatenate([u, np.atleast_2d(phat)], axis=-1)
        return self._leaf(y, np.full(y.shape[0], -1.0))[2]

    def foliation_map(self, check: bool = True) -> FoliationMap:
        """The leaf map ``F(q, phat) = (q, alpha_phat(q))``."""
        check_is_fitted(self, "section_map_")
        F = FoliationMap(self.m_ + 1, self.leaf_alpha, getattr(self, "c1_bound_", None), self.fd_step)
        if check and F.c1_bound is not None and F.c1_bound >= 0.5:
            raise PerturbationTooLargeError("C^1 bound at least 1/2")
        return F

    def hamiltonian(self) -> "RealizedHamiltonian":
        check_is_fitted(self, "section_map_")
        return RealizedHamiltonian(self)


class RealizedHamiltonian(HamiltonianField):
    """HamiltonianField view of a fitted :class:`LensRealizer`."""

    def __init__(self, realizer: LensRealizer, fd_step: float = 1e-5):
        self.realizer = realizer
        super().__init__(realizer.m_ + 1, self._value, grad=self._grad, fd_step=fd_step)

    def _value(self, X):
        X = np.asarray(X, dtype=float)
        return self.realizer.predict(X.reshape(-1, self.dim)).reshape(X.shape[:-1])

    def _grad(self, X):
        X = np.asarray(X, dtype=float)
        return self.realizer.gradient(X.reshape(-1, self.dim)).reshape(X.shape)


class ReturnSliceMap(SliceMap):
    """Return map of a Hamiltonian between ``q_n = -1`` and ``q_n = 1``, as a slice map.

    Only the image is available; the action is NaN.
    """

    def __init__(self, H: HamiltonianField, spec: TrajectorySpec):
        self.H = H
        self.m = H.n - 1
        self.spec = spec
        self.support = None
        self._s0 = HyperplaneSection(H.n, -1.0)
        self._s1 = HyperplaneSection(H.n, 1.0)

    def evaluate(self, z, h):
        w = np.concatenate([z, h[:, None]], axis=-1)
        res = poincare_map(self.H, self._s0, self._s1, self._s0.embed(w), self.spec)
        img = self._s1.project(res.points)[:, :-1]
        return img, np.full(z.shape[0], np.nan)


@dataclass
class VerificationReport:
    """Outcome of transporting a Sigma_0 grid with the realised flow."""

    max_defect: float
    defects: np.ndarray
    undefined: int
    level_defect: float


def verify_realization(H: HamiltonianField, R: SliceMap, grid, spec: TrajectorySpec) -> VerificationReport:
    """Flow each grid point of ``Sigma_0`` to ``Sigma_1`` and compare with R.

    Parameters
    ----------
    grid : array_like, shape (B, 2n - 1)
        Section coordinates ``(qbar, pbar, h)`` with h the last momentum.
    """
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    n = H.n
    s0, s1 = HyperplaneSection(n, -1.0), HyperplaneSection(n, 1.0)
    res = poincare_map(H, s0, s1, s0.embed(grid), spec)
    expected = s1.embed(R.on_section(grid))
    defects = np.linalg.norm(res.points - expected, axis=-1)
    defects[~res.defined] = np.inf
    level = np.abs(res.points[:, -1] - grid[:, -1])
    level_defect = float(np.max(level[res.defined])) if np.any(res.defined) else float("nan")
    finite = defects[res.defined]
    return VerificationReport(float(np.max(finite)) if finite.size else float("nan"), defects,
                              int(np.sum(~res.defined)), level_defect)


@dataclass
class UniquenessReport:
    """Outcome of :func:`fiber_uniqueness_check`.

    ``antecedent`` records whether every sampled fibre image agreed within
    ``fiber_tol``; the check passes when the hypothesis holds and either the
    antecedent fails or the maps agree pointwise within ``point_tol``.
    """

    hypothesis_ok: bool
    outside_distance: float
    fiber_distance: float
    pointwise_distance: float
    antecedent: bool
    passed: bool
    message: str = ""


def _fibre_graph_values(R: SliceMap, phat, qbar, tol):
    m = R.m
    B = qbar.shape[0]
    pb = np.broadcast_to(phat[:m], (B, m))
    h = np.full(B, phat[m])
    u = invert_parametrisation(R, qbar, pb, h, tol=tol)
    return R.evaluate(np.concatenate([u, pb], axis=-1), h)[0][:, m:]


def fiber_uniqueness_check(R1: SliceMap, R2: SliceMap, phat_grid, point_grid, compact_box=None,
                           fiber_tol: float = 1e-10, point_tol: float = 1e-8,
                           outside_tol: float = 1e-8, qbar_samples: int = 9,
                           outside_samples: int = 64, newton_tol: float = 1e-12,
                           seed: int = 0) -> UniquenessReport:
    """Check that two slice maps with equal fibre images agree pointwise.

    The distance between fibre images is measured as the largest vertical
    distance between the two graphs over a grid of qbar, which bounds the
    Hausdorff distance of the graphs.

    Parameters
    ----------
    phat_grid : array_like, shape (K, m + 1)
        Fibre labels ``(pbar_hat, h)``.
    point_grid : array_like, shape (B, 2m + 1)
        Section points ``(qbar, pbar, h)`` for the pointwise comparison.
    compact_box : (lo, hi), optional
        Box outside which the maps must coincide. Defaults to the union of
        declared supports, or ``[-0.6, 0.6]^{2m+1}`` if neither map has one.
    """
    m = R1.m
    d = 2 * m + 1
    if compact_box is None:
        sups = [s for s in (R1.support, R2.support) if s is not None]
        if sups:
            lo = np.min([s[0] for s in sups], axis=0)
            hi = np.max([s[1] for s in sups], axis=0)
        else:
            lo, hi = np.full(d, -0.6), np.full(d, 0.6)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in compact_box)
    rng = np.random.default_rng(seed)
    w = rng.uniform(-1, 1, (outside_samples * 4, d))
    w = w[np.any((w < lo) | (w > hi), axis=1)][:outside_samples]
    outside = float(np.max(np.linalg.norm(R1.on_section(w) - R2.on_section(w), axis=-1), initial=0.0))
    hypothesis_ok = outside <= outside_tol

    axes = [np.linspace(-0.9, 0.9, qbar_samples)] * m
    qbar = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    fiber = 0.0
    for phat in np.atleast_2d(np.asarray(phat_grid, dtype=float)):
        b1 = _fibre_graph_values(R1, phat, qbar, newton_tol)
        b2 = _fibre_graph_values(R2, phat, qbar, newton_tol)
        fiber = max(fiber, float(np.max(np.abs(b1 - b2))))
    pts = np.atleast_2d(np.asarray(point_grid, dtype=float))
    pointwise = float(np.max(np.linalg.norm(R1.on_section(pts) - R2.on_section(pts), axis=-1)))
    antecedent = fiber <= fiber_tol
    if not hypothesis_ok:
        msg = f"maps differ by {outside:.3g} outside the compact box"
        passed = False
    elif antecedent:
        passed = pointwise <= point_tol
        msg = "fibre images agree; pointwise " + ("agreement" if passed else "disagreement")
    else:
        passed = True
        msg = f"fibre images differ by {fiber:.3g}; nothing to conclude"
    return UniquenessReport(hypothesis_ok, outside, fiber, pointwise, antecedent, passed, msg)


DESCRIPTOR_VERSION = 1


def _beta_table(realizer: LensRealizer, phat_grid, qbar_grid):
    m = realizer.m_
    mp = realizer.section_map_
    out = []
    for phat in phat_grid:
        out.append(_fibre_graph_values(mp, np.asarray(phat, dtype=float), qbar_grid,
                                       realizer.newton_tol))
    return np.asarray(out)


def to_descriptor(realizer: LensRealizer, phat_grid=None, qbar_grid=None,
                  chart: Optional[CanonicalChart] = None) -> dict:
    """JSON-ready description of a fitted realizer.

    Holds the estimator parameters, the section map, and tables of the
    transported-fibre coefficients on a grid; :func:`from_descriptor`
    recomputes the tables and refuses a descriptor that does not reproduce
    them.
    """
    check_is_fitted(realizer, "section_map_")
    m = realizer.m_
    if phat_grid is None:
        ax = np.linspace(-0.5, 0.5, 3)
        phat_grid = np.stack(np.meshgrid(*([ax] * (m + 1)), indexing="ij"), axis=-1).reshape(-1, m + 1)
    if qbar_grid is None:
        ax = np.linspace(-0.9, 0.9, 7)
        qbar_grid = np.stack(np.meshgrid(*([ax] * m), indexing="ij"), axis=-1).reshape(-1, m)
    phat_grid = np.atleast_2d(np.asarray(phat_grid, dtype=float))
    qbar_grid = np.atleast_2d(np.asarray(qbar_grid, dtype=float))
    return {
        "descriptor_version": DESCRIPTOR_VERSION,
        "params": realizer.get_params(),
        "chart": None if chart is None else chart.to_dict(),
        "section_map": map_to_spec(realizer.section_map_),
        "c1_bound": realizer.c1_bound_,
        "phat_grid": phat_grid.tolist(),
        "qbar_grid": qbar_grid.tolist(),
        "beta_table": _beta_table(realizer, phat_grid, qbar_grid).tolist(),
    }


def from_descriptor(desc: dict, check_tol: float = 1e-10):
    """Rebuild a fitted realizer (and chart) from :func:`to_descriptor` output.

    Raises
    ------
    ConfigError
        If the version is unknown or the stored tables are not reproduced.
    """
    from .exceptions import ConfigError

    if desc.get("descriptor_version") != DESCRIPTOR_VERSION:
        raise ConfigError("unsupported descriptor version")
    realizer = LensRealizer(**desc["params"]).fit(map_from_spec(desc["section_map"]))
    table = _beta_table(realizer, np.asarray(desc["phat_grid"]), np.asarray(desc["qbar_grid"]))
    diff = float(np.max(np.abs(table - np.asarray(desc["beta_table"]))))
    if diff > check_tol:
        raise ConfigError(f"descriptor tables differ from the rebuilt realizer by {diff:.3g}")
    chart = None
    if desc.get("chart") is not None:
        c = desc["chart"]
        chart = CanonicalChart(c["n"], c["epsilon0"], c["center"], c["epsilon"])
    return realizer, chart
