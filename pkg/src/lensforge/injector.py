"""Chaos injection into the return map near a periodic torus.

Pipeline, in the Morse chart (Q, P) of f_h around its critical point:

* ``F = f_c + sum_i s_i P_i^2`` generates the unperturbed return map (a shear).
* ``F_eps = F + eps xi(|P|^2) xi(|Q|^2) sum_i s_i Q_i^2`` is linear on the inner
  region, where its time-1 map is a rotation by ``2 sqrt(eps)`` in each plane
  (period N when ``eps = pi^2 / N^2``). It conserves ``K = sum(P_i^2 + eps Q_i^2)``,
  so ``{K < eps delta / 2}`` is exactly invariant.
* A disc kick theta, supported on discs whose N rotation images are disjoint,
  is composed in front: ``G~ = G_eps o theta``. On a kicked disc ``G~^N = theta``.

Away from the chart the map is the shear ``(qbar + grad f_h, pbar)`` evaluated
directly. Both eps and the kick amplitude are ramped in the energy so that the
map equals the unperturbed one for ``|h| >= 2 h0 / 3``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .action import IntegrableActionHamiltonian, grad_f_h, hess_f_h, solve_f_h, validate_torus
from .exceptions import DomainError, ParameterError
from .geometry import bump_mu, cutoff_xi
from .kick import DiscKick, disc_layout
from .maps import FlowMap, SliceMap
from .morse import MorseChart

__all__ = [
    "InjectionParams",
    "energy_ramp",
    "inner_time1_map",
    "inner_jacobian",
    "PerturbedShearFlow",
    "perturbed_time1_map",
    "build_disc_kick",
    "InjectedSectionMap",
    "assemble_section_map",
    "compose_injected_map",
    "ChartDynamics",
    "ShearDynamics",
    "EntropyInjector",
]


@dataclass
class InjectionParams:
    """Parameters of the injection.

    ``N = 0`` switches the rotation off (eps = 0). ``disc`` overrides the
    automatic placement with ``{"center": [X, Y], "radius": r}`` in normalised
    rotation coordinates. ``nested`` is the number of discs (radii shrinking by 4).
    """

    h0: float = 0.05
    delta: float = 0.04
    N: int = 8
    amplitude: float = 4.0 / (3.0 * np.pi) ** 2
    kick_wavenumber: float = 3.0 * np.pi
    plateau: float = 0.5
    kick_steps: int = 10
    disc: Optional[dict] = None
    nested: int = 1
    chart_radius: float = 0.45
    collar_dt: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.h0 <= 0:
            raise ParameterError("h0 must be positive")
        if not 0 < self.delta < 1:
            raise ParameterError("delta must lie in (0, 1)")
        if self.N != 0 and self.N < 2:
            raise ParameterError("N must be 0 (no rotation) or an integer >= 2")
        if self.amplitude < 0:
            raise ParameterError("amplitude must be non-negative")
        if self.nested < 1:
            raise ParameterError("nested must be at least 1")

    @property
    def epsilon(self) -> float:
        return 0.0 if self.N == 0 else float(np.pi**2 / self.N**2)

    @property
    def rho0(self) -> float:
        """Radius of the invariant region in normalised coordinates."""
        return float(np.sqrt(np.sqrt(self.epsilon) * self.delta / 2))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "InjectionParams":
        return cls(**d)


def energy_ramp(h, h0: float, deriv: int = 0):
    """1 for ``|h| <= h0/3``, 0 for ``|h| >= 2 h0/3``, smooth in between."""
    t = np.abs(np.asarray(h, dtype=float)) / h0
    return bump_mu(3.0 * (t - 0.5), deriv)


# --- inner rotation -----------------------------------------------------------

def _rot_coeffs(eps):
    eps = np.asarray(eps, dtype=float)
    r = np.sqrt(eps)
    th = 2.0 * r
    return np.cos(th), 2.0 * np.sinc(th / np.pi), r * np.sin(th)


def inner_time1_map(w, eps, signs):
    """Closed-form time-1 map on the inner region, with action.

    For ``s_i = +1``: ``Q' = Q cos 2r + P sin(2r)/r``, ``P' = -r Q sin 2r + P cos 2r``
    with ``r = sqrt(eps)``; ``s_i = -1`` reverses the sense. At eps = 0 this is the
    shear ``(Q + 2 s P, P)``. The action of a homogeneous quadratic flow is
    ``(P'.Q' - P.Q) / 2``.
    """
    w = np.atleast_2d(np.asarray(w, dtype=float))
    m = w.shape[-1] // 2
    signs = np.asarray(signs, dtype=float)
    c, sn, rs = (x[:, None] for x in np.broadcast_arrays(*_rot_coeffs(eps), np.zeros(w.shape[0]))[:3])
    Q, P = w[:, :m], w[:, m:]
    Q1 = c * Q + signs * sn * P
    P1 = -signs * rs * Q + c * P
    S = 0.5 * (np.sum(P1 * Q1, axis=-1) - np.sum(P * Q, axis=-1))
    return np.concatenate([Q1, P1], axis=-1), S


def inner_jacobian(eps, signs, batch: int = 1):
    """Jacobian of :func:`inner_time1_map` (independent of the point)."""
    signs = np.asarray(signs, dtype=float)
    m = signs.size
    c, sn, rs = (np.broadcast_to(x, (batch,)) for x in _rot_coeffs(eps))
    J = np.zeros((batch, 2 * m, 2 * m))
    i = np.arange(m)
    J[:, i, i] = c[:, None]
    J[:, i, m + i] = signs * sn[:, None]
    J[:, m + i, i] = -signs * rs[:, None]
    J[:, m + i, m + i] = c[:, None]
    return J


# --- perturbed generator ------------------------------------------------------

class PerturbedShearFlow:
    """Time-1 map G_eps of ``F_eps - f_c`` in chart coordinates, per-row eps.

    Routes: closed-form rotation where ``K < eps delta / 2``; exact free motion
    where the perturbation cannot be felt (``|P|^2 >= delta``, or the straight
    segment ``Q + 2 s P t`` stays in ``|Q|^2 >= delta``); implicit midpoint in
    the collar.
    """

    def __init__(self, signs, delta: float, dt: float = 1e-3):
        self.signs = np.asarray(signs, dtype=float)
        self.m = self.signs.size
        self.delta = float(delta)
        self.dt = float(dt)
        self._flow = FlowMap(self.m, self._value, self._grad, T=1.0, dt=self.dt)

    def _value(self, w, eps):
        m, s, d = self.m, self.signs, self.delta
        Q, P = w[:, :m], w[:, m:]
        xp, xq = cutoff_xi(np.sum(P * P, -1), d), cutoff_xi(np.sum(Q * Q, -1), d)
        return np.sum(s * P * P, -1) + eps * xp * xq * np.sum(s * Q * Q, -1)

    def _grad(self, w, eps):
        m, s, d = self.m, self.signs, self.delta
        Q, P = w[:, :m], w[:, m:]
        p2, q2 = np.sum(P * P, -1), np.sum(Q * Q, -1)
        xp, xq = cutoff_xi(p2, d), cutoff_xi(q2, d)
        dxp, dxq = cutoff_xi(p2, d, 1), cutoff_xi(q2, d, 1)
        sq = np.sum(s * Q * Q, -1)
        gQ = (eps * xp)[:, None] * (2 * dxq * sq)[:, None] * Q + (eps * xp * xq)[:, None] * 2 * s * Q
        gP = 2 * s * P + (eps * dxp * xq * sq)[:, None] * 2 * P
        return np.concatenate([gQ, gP], axis=-1)

    def conserved(self, w, eps):
        """``K = sum(P_i^2 + eps Q_i^2)``."""
        m = self.m
        return np.sum(w[:, m:] ** 2, -1) + eps * np.sum(w[:, :m] ** 2, -1)

    def classify(self, w, eps):
        """Route per row: 0 free, 1 inner rotation, 2 collar."""
        w = np.atleast_2d(w)
        m, d = self.m, self.delta
        eps = np.broadcast_to(np.asarray(eps, dtype=float).reshape(-1), w.shape[:1])
        Q, P = w[:, :m], w[:, m:]
        v = 2 * self.signs * P
        vv = np.sum(v * v, -1)
        t = np.clip(-np.sum(Q * v, -1) / np.where(vv > 0, vv, 1.0), 0.0, 1.0)
        closest = np.sum((Q + t[:, None] * v) ** 2, -1)
        free = (eps == 0) | (np.sum(P * P, -1) >= d) | (closest >= d)
        inner = (eps > 0) & (self.conserved(w, eps) < eps * d / 2)
        return np.where(inner, 1, np.where(free, 0, 2))

    def evaluate(self, w, eps, route=None):
        """Image and action (``f_c`` excluded). ``route`` forces one evaluator."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        eps = np.broadcast_to(np.asarray(eps, dtype=float).reshape(-1), w.shape[:1]).copy()
        r = self.classify(w, eps) if route is None else np.full(w.shape[0], route)
        img = w.copy()
        S = np.zeros(w.shape[0])
        for k, sel in ((0, r == 0), (1, r == 1), (2, r == 2)):
            if not np.any(sel):
                continue
            if k == 0:
                img[sel], S[sel] = inner_time1_map(w[sel], 0.0, self.signs)
            elif k == 1:
                img[sel], S[sel] = inner_time1_map(w[sel], eps[sel], self.signs)
            else:
                img[sel], S[sel] = self._flow.evaluate(w[sel], eps[sel])
        return img, S


def perturbed_time1_map(chart: MorseChart, params: InjectionParams) -> PerturbedShearFlow:
    """G_eps for the chart's sign pattern."""
    return PerturbedShearFlow(chart.signs, params.delta, params.collar_dt)


def build_disc_kick(params: InjectionParams, m: int = 1) -> DiscKick:
    """Disc kick placed on the invariant region of the rotation (checked disjoint)."""
    eps = params.epsilon
    if params.disc is not None:
        discs = [(np.asarray(params.disc["center"], dtype=float), float(params.disc["radius"]))]
    elif eps > 0:
        discs = disc_layout(params.rho0, params.N, params.nested)
    else:
        discs = []
    kick = DiscKick(m, params.amplitude, params.kick_wavenumber, discs, eps if eps > 0 else 1.0,
                    params.plateau, params.kick_steps)
    if eps > 0 and params.amplitude > 0:
        check_disc_disjointness(kick, params)
    return kick


def _rotate_plane(c, angle):
    ca, sa = np.cos(angle), np.sin(angle)
    return np.array([ca * c[0] + sa * c[1], -sa * c[0] + ca * c[1]])


def check_disc_disjointness(kick: DiscKick, params: InjectionParams):
    """Discs lie in the invariant region and all their rotation images are pairwise disjoint.

    Raises
    ------
    ParameterError
    """
    rho0 = params.rho0
    balls = []
    for i, (c, r) in enumerate(kick.discs):
        if np.linalg.norm(c) + r >= rho0:
            raise ParameterError(f"disc {i} is not inside the invariant region")
        for k in range(params.N):
            balls.append((_rotate_plane(c, 2 * np.pi * k / params.N), r))
    for a in range(len(balls)):
        for b in range(a + 1, len(balls)):
            if np.linalg.norm(balls[a][0] - balls[b][0]) <= balls[a][1] + balls[b][1]:
                raise ParameterError("disc images under the rotation are not pairwise disjoint")


# --- assembled section map ---------------------------------------------------------

class InjectedSectionMap(SliceMap):
    """The perturbed return map R~ on level slices, coordinates (qbar, pbar; h).

    Parameters
    ----------
    H : IntegrableActionHamiltonian
    params : InjectionParams
    """

    def __init__(self, H: IntegrableActionHamiltonian, params: InjectionParams,
                 chart: Optional[MorseChart] = None):
        validate_torus(H)
        self.H = H
        self.params = params
        self.m = H.n - 1
        self.chart = chart if chart is not None else MorseChart(H, radius=params.chart_radius)
        self.flow = perturbed_time1_map(self.chart, params)
        self.kick = build_disc_kick(params, self.m)
        self.support = None
        self._check_chart_covers()

    def _check_chart_covers(self, samples: int = 64):
        """The chart boundary must lie outside ``|P|^2 < 2 delta`` for all energies."""
        m = self.m
        rng = np.random.default_rng(self.params.seed)
        dirs = rng.normal(size=(samples, m))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        for h in np.linspace(-2 * self.params.h0 / 3, 2 * self.params.h0 / 3, 5):
            c = self.chart.base(np.array([h]))[0]
            u = c + self.chart.radius * 0.999 * dirs
            P = self.chart.P(u, np.full(samples, h))
            if np.min(np.sum(P * P, -1)) < 2 * self.params.delta:
                raise ParameterError("Morse chart too small for delta; raise chart_radius or lower delta")

    @property
    def epsilon0(self) -> float:
        return self.params.epsilon

    def ramp(self, h):
        return energy_ramp(h, self.params.h0)

    def shear(self, z, h):
        """Unperturbed return map ``(qbar + grad f_h, pbar)`` with action ``p.grad f - f``."""
        m = self.m
        q, p = z[:, :m], z[:, m:]
        f = solve_f_h(self.H, h, p)
        g = grad_f_h(self.H, h, p, f)
        return np.concatenate([q + g, p], axis=-1), np.sum(p * g, -1) - f

    def chart_route(self, w, h, s):
        """``G_eps o theta`` on chart points with ramp values s; returns image and action."""
        w1, S1 = self.kick.evaluate(w, s)
        w2, S2 = self.flow.evaluate(w1, self.epsilon0 * s)
        return w2, S1 + S2

    def evaluate(self, z, h):
        m = self.m
        s = self.ramp(h)
        img, S = self.shear(z, h)
        active = np.flatnonzero(s > 0)
        if active.size == 0 or (self.epsilon0 == 0 and self.params.amplitude == 0):
            return img, S
        za, ha, sa = z[active], h[active], s[active]
        base = self.chart.base(ha)
        inside = np.linalg.norm(za[:, m:] - base[0], axis=-1) <= self.chart.radius
        idx = active[inside]
        if idx.size == 0:
            return img, S
        zc, hc, sc = z[idx], h[idx], s[idx]
        w = self.chart.forward(zc, hc)
        kicked = (self.kick.disc_index(w) >= 0) & (self.params.amplitude > 0)
        route = self.flow.classify(w, self.epsilon0 * sc)
        use = kicked | (route != 0)
        if not np.any(use):
            return img, S
        zc, hc, sc, w, idx = zc[use], hc[use], sc[use], w[use], idx[use]
        w2, Sg = self.chart_route(w, hc, sc)
        z2 = self.chart.inverse(w2, hc)
        fc = self.chart.critical_value(hc)
        img[idx] = z2
        S[idx] = MorseChart.action(zc, w) + Sg - fc - MorseChart.action(z2, w2)
        return img, S

    def level_defect(self, z, h) -> float:
        """``max |H(pbar', -f_h(pbar')) - h|`` over the images."""
        z, h = self._prep(z, h)
        img = self.evaluate(z, h)[0]
        pb = img[:, self.m:]
        pn = -solve_f_h(self.H, h, pb)
        return float(np.max(np.abs(self.H(np.concatenate([pb, pn[:, None]], -1)) - h)))

    def invariant_region(self, w, eps=None):
        """Chart points with ``K < eps delta / 2``."""
        eps = self.epsilon0 if eps is None else eps
        return self.flow.conserved(np.atleast_2d(w), eps) < eps * self.params.delta / 2

    def sample_invariant_region(self, count: int, seed: int = 0, shrink: float = 0.999):
        """Uniform samples of ``{K < eps delta/2}`` in chart coordinates (Q, P)."""
        m = self.m
        eps = self.epsilon0
        if eps == 0:
            raise ParameterError("no invariant region without rotation (N = 0)")
        rng = np.random.default_rng(seed)
        g = rng.normal(size=(count, 2 * m))
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        rad = shrink * self.params.rho0 * rng.uniform(size=count) ** (1.0 / (2 * m))
        x = g * rad[:, None]
        return self.kick.from_normal(x) if self.kick.eps == eps else \
            np.concatenate([x[:, :m] / eps**0.25, x[:, m:] * eps**0.25], -1)

    def chart_dynamics(self, h: float = 0.0) -> "ChartDynamics":
        return ChartDynamics(self, h)


def compose_injected_map(G: PerturbedShearFlow, theta: DiscKick):
    """``G~ = G_eps o theta`` in chart coordinates, as a callable ``(w, eps) -> (image, action)``."""

    def G_tilde(w, eps, scale=1.0):
        w1, S1 = theta.evaluate(w, scale)
        w2, S2 = G.evaluate(w1, eps)
        return w2, S1 + S2

    return G_tilde


def assemble_section_map(H: IntegrableActionHamiltonian, params: Optional[InjectionParams] = None
                         ) -> InjectedSectionMap:
    """R~ on level slices for the integrable system H."""
    return InjectedSectionMap(H, params if params is not None else InjectionParams())


class ChartDynamics:
    """G~ in chart coordinates at a fixed plateau energy, with exact Jacobians.

    Only defined on the invariant region, where ``G~ = rotation o theta``; the
    chart conjugates it to R~ restricted to the region, so Lyapunov exponents
    agree.
    """

    def __init__(self, R: InjectedSectionMap, h: float = 0.0):
        s = float(R.ramp(np.array([h]))[0])
        if s != 1.0:
            raise ParameterError("chart dynamics are defined on the plateau |h| <= h0/3")
        self.R = R
        self.h = float(h)
        self.eps = R.epsilon0
        self.m = R.m
        self._rot = inner_jacobian(self.eps, R.chart.signs)[0]

    def __call__(self, w):
        return self.step(w)[0]

    def step(self, w, with_jacobian: bool = True):
        """One iterate ``(w', J)``. Raises DomainError if a point leaves the region."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        if not np.all(self.R.invariant_region(w)):
            raise DomainError("chart dynamics evaluated outside the invariant region")
        kicked = self.R.kick.disc_index(w) >= 0
        w1 = w.copy()
        J = np.broadcast_to(np.eye(2 * self.m), (w.shape[0], 2 * self.m, 2 * self.m)).copy()
        if np.any(kicked):
            out = self.R.kick.evaluate(w[kicked], 1.0, with_jacobian=True)
            w1[kicked], J[kicked] = out[0], out[2]
        w2 = inner_time1_map(w1, self.eps, self.R.chart.signs)[0]
        return (w2, self._rot @ J) if with_jacobian else (w2, None)

    def jacobian(self, w):
        return self.step(w)[1]


class ShearDynamics:
    """Unperturbed return map at energy h with its exact Jacobian ``[[I, Hess f_h], [0, I]]``.

    The shear does not move pbar, so ``grad f_h`` and ``Hess f_h`` are cached for the
    last batch of momenta and reused while they are unchanged.
    """

    def __init__(self, H: IntegrableActionHamiltonian, h: float = 0.0):
        self.H = H
        self.h = float(h)
        self.m = H.n - 1
        self._key = None

    def _derivs(self, p):
        key = p.tobytes()
        if key != self._key:
            hh = np.full(p.shape[0], self.h)
            f = solve_f_h(self.H, hh, p)
            self._cache = (grad_f_h(self.H, hh, p, f), hess_f_h(self.H, hh, p, f))
            self._key = key
        return self._cache

    def __call__(self, z):
        return self.step(z, False)[0]

    def step(self, z, with_jacobian: bool = True):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        m = self.m
        p = np.ascontiguousarray(z[:, m:])
        g, Hs = self._derivs(p)
        out = np.concatenate([z[:, :m] + g, p], axis=-1)
        if not with_jacobian:
            return out, None
        J = np.broadcast_to(np.eye(2 * m), (z.shape[0], 2 * m, 2 * m)).copy()
        J[:, :m, m:] = Hs
        return out, J

    def jacobian(self, z):
        return self.step(z)[1]


class EntropyInjector(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit(H)`` assembles R~; ``transform`` applies it to (qbar, pbar, h) rows.

    Parameters mirror :class:`InjectionParams`.
    """

    def __init__(self, h0: float = 0.05, delta: float = 0.04, N: int = 8,
                 amplitude: float = 4.0 / (3.0 * np.pi) ** 2, kick_wavenumber: float = 3.0 * np.pi,
                 plateau: float = 0.5, kick_steps: int = 10, disc: Optional[dict] = None,
                 nested: int = 1, chart_radius: float = 0.45, collar_dt: float = 1e-3,
                 random_state: int = 0):
        self.h0 = h0
        self.delta = delta
        self.N = N
        self.amplitude = amplitude
        self.kick_wavenumber = kick_wavenumber
        self.plateau = plateau
        self.kick_steps = kick_steps
        self.disc = disc
        self.nested = nested
        self.chart_radius = chart_radius
        self.collar_dt = collar_dt
        self.random_state = random_state

    def params(self) -> InjectionParams:
        return InjectionParams(self.h0, self.delta, self.N, self.amplitude, self.kick_wavenumber,
                               self.plateau, self.kick_steps, self.disc, self.nested,
                               self.chart_radius, self.collar_dt, self.random_state)

    def fit(self, X, y=None):
        """X is an :class:`IntegrableActionHamiltonian` (or its JSON term list)."""
        H = X if isinstance(X, IntegrableActionHamiltonian) else IntegrableActionHamiltonian.from_json(X)
        self.torus_report_ = validate_torus(H)
        self.section_map_ = InjectedSectionMap(H, self.params())
        self.n_features_in_ = 2 * H.n - 1
        return self

    def transform(self, X):
        check_is_fitted(self, "section_map_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.section_map_.on_section(X)
