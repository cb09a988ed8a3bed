"""Families of compactly supported symplectic maps and their extension to higher dimension.

``family_from_realization`` turns a single map phi0 of D^2 into a family phi_t
with ``phi_t = phi0`` on ``[0, 1/3]`` and ``phi_t = id`` on ``[2/3, 1]``: phi0 is
realised as the return map of a Hamiltonian on R^4 between ``{q_2 = -1}`` and
``{q_2 = 1}``; the Hamiltonian is normalised to ``Hn = p_2 - rho(q_1, q_2, p_1)``
with the same zero level, and phi_t follows its flow from ``q_2 = -1`` up to
``q_2 = tau(t)``.

``extend_high_dim`` builds ``Phi(x, y) = (phi_{|y|}(x), y)`` on ``D^2 x D^{2n-2}``.
"""
from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .exceptions import ConvergenceError, DimensionError, ParameterError
from .flow import HamiltonianField, TrajectorySpec, integrate_flow
from .geometry import bump_mu, symplectic_matrix
from .kick import DiscKick
from .maps import SliceMap
from .realizer import LensRealizer

__all__ = [
    "family_ramp",
    "DiscKickFamily",
    "RealizedFamily",
    "family_from_realization",
    "ExtendedMap",
    "extend_high_dim",
]


def family_ramp(t, deriv: int = 0):
    """Profile s(t): 1 on ``[0, 1/3]``, 0 on ``[2/3, 1]``."""
    return bump_mu(3.0 * (np.asarray(t, dtype=float) - 0.5), deriv)


class DiscKickFamily:
    """``phi_t`` = disc kick on D^2 with amplitude ``a s(t)``.

    Parameters
    ----------
    amplitude, wavenumber : float
        Kick parameters (see :class:`lensforge.kick.DiscKick`).
    radius : float
        Radius of the kicked disc, centred at the origin of D^2.
    """

    def __init__(self, amplitude: float = 4.0 / (3 * np.pi) ** 2, wavenumber: float = 3 * np.pi,
                 radius: float = 0.5, plateau: float = 0.5, steps: int = 10):
        self.kick = DiscKick(1, amplitude, wavenumber, [(np.zeros(2), radius)], 1.0, plateau, steps)

    def __call__(self, t, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), x.shape[:1])
        return self.kick.evaluate(x, family_ramp(t))[0]

    def jacobian(self, t, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), x.shape[:1])
        return self.kick.evaluate(x, family_ramp(t), with_jacobian=True)[2]


class RealizedFamily:
    """Family obtained from a realised Hamiltonian (see :func:`family_from_realization`).

    Attributes
    ----------
    realizer : LensRealizer
        Fitted on the slice map ``phi0`` (one degree of freedom plus time).
    """

    def __init__(self, realizer: LensRealizer, dt: float = 1e-2, rho_tol: float = 1e-13):
        self.realizer = realizer
        self.dt = float(dt)
        self.rho_tol = float(rho_tol)
        self.field = HamiltonianField(2, self.value, self.grad)

    def rho(self, q1, q2, p1, max_iter: int = 30):
        """p_2 with ``H~(q1, q2, p1, p2) = 0`` (Newton; ``H~ = p_2`` off the support).

        Raises
        ------
        ConvergenceError
            If the zero level is not a graph over (q1, q2, p1) there.
        """
        q1, q2, p1 = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (q1, q2, p1)))
        p2 = np.zeros(q1.shape)
        for _ in range(max_iter):
            X = np.stack([q1, q2, p1, p2], axis=-1).reshape(-1, 4)
            r = self.realizer.predict(X).reshape(q1.shape)
            if np.max(np.abs(r), initial=0.0) <= self.rho_tol:
                return p2
            dp = self.realizer.gradient(X)[:, -1].reshape(q1.shape)
            if np.any(dp <= 0):
                raise ConvergenceError("realised Hamiltonian is not increasing in p_2")
            p2 = p2 - r / dp
        raise ConvergenceError("zero level of the realised Hamiltonian is not a graph")

    def value(self, X):
        X = np.atleast_2d(X)
        return X[:, 3] - self.rho(X[:, 0], X[:, 1], X[:, 2])

    def grad(self, X):
        """``grad Hn = (H~_q1, H~_q2, H~_p1) / H~_p2`` at ``p_2 = rho``, last entry 1."""
        X = np.atleast_2d(X)
        rho = self.rho(X[:, 0], X[:, 1], X[:, 2])
        Y = X.copy()
        Y[:, 3] = rho
        g = self.realizer.gradient(Y)
        out = g / g[:, 3:4]
        out[:, 3] = 1.0
        return out

    def slice_hamiltonian(self, s, x):
        """Time-dependent Hamiltonian ``H_s(q, p) = Hn(q, s, p, 0)`` on D^2, s = q_2."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        s = np.broadcast_to(np.asarray(s, dtype=float).reshape(-1), x.shape[:1])
        return self.value(np.stack([x[:, 0], s, x[:, 1], np.zeros(x.shape[0])], axis=-1))

    def tau(self, t):
        """End value of q_2: 1 on ``[0, 1/3]``, -1 on ``[2/3, 1]``."""
        return -1.0 + 2.0 * family_ramp(t)

    def __call__(self, t, x):
        """``phi_t(x)`` for x (B, 2) = (q, p); t scalar or per row."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), x.shape[:1])
        T = self.tau(t) + 1.0
        out = x.copy()
        for val in np.unique(T):
            rows = (T == val) & (val > 0)
            if not np.any(rows):
                continue
            X0 = np.stack([x[rows, 0], np.full(rows.sum(), -1.0), x[rows, 1],
                           np.zeros(rows.sum())], axis=-1)
            XT = integrate_flow(self.field, X0, TrajectorySpec(dt=min(self.dt, val), t_max=val))
            out[rows] = XT[:, [0, 2]]
        return out


def family_from_realization(phi0: SliceMap, epsilon: float = 0.6, dt: float = 1e-2,
                            **realizer_kw) -> RealizedFamily:
    """Family ``phi_t`` joining ``phi0`` (t <= 1/3) to the identity (t >= 2/3).

    Parameters
    ----------
    phi0 : SliceMap
        Map of D^2 with ``m = 1``, acting at energy 0, identity outside its support.
    """
    if phi0.m != 1:
        raise DimensionError("family_from_realization handles maps of D^2 (m = 1)")
    realizer = LensRealizer(epsilon=epsilon, **realizer_kw).fit(phi0)
    return RealizedFamily(realizer, dt=dt)


class ExtendedMap:
    """``Phi(x, y) = (phi_{|y|}(x), y)`` with ``x = (q_1, p_1)`` and y the other coordinates.

    Coordinates follow the phase order ``(q_1..q_n, p_1..p_n)``.
    """

    def __init__(self, family: Callable, n: int):
        if n < 2:
            raise DimensionError("target dimension needs n >= 2")
        self.family = family
        self.n = int(n)

    def _split(self, X):
        n = self.n
        x = X[:, [0, n]]
        y = np.concatenate([X[:, 1:n], X[:, n + 1:]], axis=-1)
        return x, y

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[-1] != 2 * self.n:
            raise DimensionError(f"expected {2 * self.n} coordinates")
        x, y = self._split(X)
        t = np.linalg.norm(y, axis=-1)
        out = X.copy()
        moved = t < 2.0 / 3.0
        if np.any(moved):
            img = self.family(t[moved], x[moved])
            out[np.flatnonzero(moved)[:, None], [0, self.n]] = img
        return out

    def _fiber_block(self, t, x, step):
        if hasattr(self.family, "jacobian"):
            return self.family.jacobian(t, x)
        cols = []
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            cols.append((self.family(t, x + e) - self.family(t, x - e)) / (2 * step))
        return np.stack(cols, axis=-1)

    def fiber_jacobian(self, X, step: float = 1e-6):
        """Jacobian of ``x -> phi_{|y|}(x)`` at fixed y, shape (B, 2, 2).

        Uses ``family.jacobian`` when the family provides one, else central differences.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        x, y = self._split(X)
        return self._fiber_block(np.linalg.norm(y, axis=-1), x, step)

    def jacobian(self, X, step: float = 1e-6):
        """Full Jacobian, shape (B, 2n, 2n).

        The y-columns are ``d/dt phi_t(x)`` (central difference in t) times ``y / |y|``;
        they vanish where t is on a plateau.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = self.n
        B = X.shape[0]
        x, y = self._split(X)
        t = np.linalg.norm(y, axis=-1)
        D = np.broadcast_to(np.eye(2 * n), (B, 2 * n, 2 * n)).copy()
        ix = [0, n]
        iy = [i for i in range(2 * n) if i not in ix]
        Fb = self._fiber_block(t, x, step)
        for a in range(2):
            for b in range(2):
                D[:, ix[a], ix[b]] = Fb[:, a, b]
        ramp = (t > 1.0 / 3.0) & (t < 2.0 / 3.0)
        if np.any(ramp):
            dphi = (self.family(t[ramp] + step, x[ramp]) - self.family(t[ramp] - step, x[ramp])) / (2 * step)
            unit = y[ramp] / t[ramp, None]
            for a in range(2):
                D[np.flatnonzero(ramp)[:, None], ix[a], np.array(iy)[None, :]] = dphi[:, a:a + 1] * unit
        return D

    def symplectic_defects(self, X, step: float = 1e-6):
        """``(fiberwise, full)`` defects ``max |D^T J D - J|`` at the points X."""
        F = self.fiber_jacobian(X, step)
        D = self.jacobian(X, step)
        J2, Jn = symplectic_matrix(1), symplectic_matrix(self.n)
        fib = np.max(np.abs(np.swapaxes(F, -1, -2) @ J2 @ F - J2), initial=0.0)
        full = np.max(np.abs(np.swapaxes(D, -1, -2) @ Jn @ D - Jn), initial=0.0)
        return float(fib), float(full)


def extend_high_dim(family: Optional[Callable] = None, n: int = 2) -> ExtendedMap:
    """Extend a family on D^2 to ``D^2 x D^{2n-2}``; the default family is :class:`DiscKickFamily`.

    Raises
    ------
    ParameterError
        If the family does not have the plateaus (``phi_t = phi_0`` for t <= 1/3,
        identity for t >= 2/3) on probe points.
    """
    family = DiscKickFamily() if family is None else family
    probe = np.random.default_rng(0).uniform(-0.7, 0.7, (8, 2))
    base = family(np.zeros(8), probe)
    if np.max(np.abs(family(np.full(8, 1.0 / 3.0), probe) - base)) > 1e-12 or \
            np.max(np.abs(family(np.full(8, 2.0 / 3.0), probe) - probe)) > 1e-12:
        raise ParameterError("family lacks the plateaus phi_t = phi_0 (t <= 1/3), id (t >= 2/3)")
    return ExtendedMap(family, n)
