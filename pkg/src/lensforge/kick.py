"""Compactly supported chaotic kicks on small discs.

The reference map ``theta0`` on the unit ball of R^{2m} is the composition of
two time-1 flows, first of ``a W`` then of ``a V``, with

    V = chi(|x|^2) cos(kappa xi_1),    W = chi(|x|^2) cos(kappa eta_1),

where ``x = (xi, eta)`` and chi is 1 on ``|x|^2 <= plateau`` and 0 outside the
unit ball. On the plateau the flows are exact kicks and theta0 is the Harper
map ``xi -= a kappa sin(kappa eta)`` then ``eta += a kappa sin(kappa xi)``.
Each flow is integrated by the implicit midpoint rule, which is exactly
symplectic, exact on the plateau and the identity outside the ball. Tangents
are propagated exactly through the midpoint equations.

A disc kick moves theta0 onto discs ``|x - c| < r`` by ``x -> c + r theta0((x - c) / r)``
in normalised coordinates ``(X, Y) = (eps^{1/4} Q, eps^{-1/4} P)`` of a rotation chart.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from .exceptions import ConvergenceError, ParameterError
from .geometry import symplectic_matrix

__all__ = ["KickPotential", "reference_kick", "DiscKick", "disc_layout"]


def _step_derivs(u):
    """Smooth step and its first two derivatives in one pass (matches smooth_step)."""
    u = np.asarray(u, dtype=float)
    S0 = (u >= 1.0).astype(float)
    S1 = np.zeros_like(u)
    S2 = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    if np.any(inside):
        ui = u[inside]
        g = 1.0 / ui - 1.0 / (1.0 - ui)
        s, sc = expit(-g), expit(g)
        w = 1.0 / ui**2 + 1.0 / (1.0 - ui) ** 2
        dw = -2.0 / ui**3 + 2.0 / (1.0 - ui) ** 3
        s1 = s * sc * w
        S0[inside] = s
        S1[inside] = s1
        S2[inside] = s1 * (sc - s) * w + s * sc * dw
    return S0, S1, S2


class KickPotential:
    """``chi(|x|^2) cos(kappa x_axis)`` with analytic gradient and Hessian."""

    def __init__(self, m: int, kappa: float, axis: int, plateau: float = 0.5):
        if not 0.0 < plateau < 1.0:
            raise ParameterError("plateau must lie in (0, 1)")
        self.m, self.kappa, self.axis, self.plateau = int(m), float(kappa), int(axis), float(plateau)
        self._w = 1.0 - self.plateau

    def _chi(self, s):
        u = (1.0 - s) / self._w
        S0, S1, S2 = _step_derivs(u)
        return S0, -S1 / self._w, S2 / self._w**2

    def value(self, x):
        chi = self._chi(np.sum(x * x, axis=-1))[0]
        return chi * np.cos(self.kappa * x[:, self.axis])

    def grad(self, x):
        chi, d1, _ = self._chi(np.sum(x * x, axis=-1))
        k, a = self.kappa, self.axis
        g = np.cos(k * x[:, a])
        out = (2.0 * d1 * g)[:, None] * x
        out[:, a] -= chi * k * np.sin(k * x[:, a])
        return out

    def hess(self, x):
        return self.grad_hess(x)[1]

    def grad_hess(self, x):
        chi, d1, d2 = self._chi(np.sum(x * x, axis=-1))
        k, a = self.kappa, self.axis
        g = np.cos(k * x[:, a])
        dg = -k * np.sin(k * x[:, a])
        d = x.shape[-1]
        grad = (2.0 * d1 * g)[:, None] * x
        grad[:, a] += chi * dg
        Hs = (4.0 * d2 * g)[:, None, None] * x[:, :, None] * x[:, None, :]
        Hs += (2.0 * d1 * g)[:, None, None] * np.eye(d)
        Hs[:, :, a] += (2.0 * d1 * dg)[:, None] * x
        Hs[:, a, :] += (2.0 * d1 * dg)[:, None] * x
        Hs[:, a, a] += -chi * k * k * g
        return grad, Hs


def _midpoint_flow(pot: KickPotential, x, amp, steps: int, J, tol: float = 1e-14,
                   max_iter: int = 30):
    """Time-1 midpoint flow of ``amp * pot`` with discrete action and exact tangent."""
    m = pot.m
    d = 2 * m
    dt = 1.0 / steps
    omega = symplectic_matrix(m)
    eye = np.eye(d)
    S = np.zeros(x.shape[0])
    for _ in range(steps):
        x0 = x
        x1 = x0 + dt * amp[:, None] * (pot.grad(x0) @ omega.T)
        active = np.arange(x.shape[0])
        for _ in range(max_iter):
            M = 0.5 * (x0[active] + x1[active])
            g, Hs = pot.grad_hess(M)
            a = amp[active]
            F = x1[active] - x0[active] - dt * a[:, None] * (g @ omega.T)
            JF = eye - 0.5 * dt * a[:, None, None] * (omega @ Hs)
            delta = np.linalg.solve(JF, F[..., None])[..., 0]
            x1[active] -= delta
            active = active[np.max(np.abs(delta), axis=-1) > tol]
            if active.size == 0:
                break
        else:
            raise ConvergenceError("kick midpoint step did not converge")
        M = 0.5 * (x0 + x1)
        g, Hs = pot.grad_hess(M)
        if J is not None:
            Hm = 0.5 * dt * amp[:, None, None] * (omega @ Hs)
            J = np.linalg.solve(eye - Hm, (eye + Hm) @ J)
        S += dt * amp * (np.sum(M[:, m:] * g[:, m:], axis=-1) - pot.value(M))
        x = x1
    return x, S, J


def reference_kick(x, amp, kappa: float, plateau: float = 0.5, steps: int = 10,
                   with_jacobian: bool = False):
    """The unit-ball map ``theta0`` for a batch x (B, 2m) and per-row amplitudes.

    Returns
    -------
    image, action[, jacobian]
        ``action`` is the primitive s0 with ``eta' . dxi' - eta . dxi = ds0``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    m = x.shape[-1] // 2
    amp = np.broadcast_to(np.asarray(amp, dtype=float).reshape(-1), x.shape[:1]).astype(float)
    V = KickPotential(m, kappa, 0, plateau)
    W = KickPotential(m, kappa, m, plateau)
    J = np.broadcast_to(np.eye(2 * m), (x.shape[0], 2 * m, 2 * m)).copy() if with_jacobian else None
    img = x.copy()
    S = np.zeros(x.shape[0])
    live = (np.sum(x * x, axis=-1) < 1.0) & (amp != 0.0)
    if np.any(live):
        Jl = None if J is None else J[live]
        y, s1, Jl = _kick_stage(W, x[live], amp[live], steps, Jl)
        y, s2, Jl = _kick_stage(V, y, amp[live], steps, Jl)
        img[live], S[live] = y, s1 + s2
        if J is not None:
            J[live] = Jl
    return (img, S, J) if with_jacobian else (img, S)


def _kick_stage(pot: KickPotential, x, amp, steps, J):
    """One flow; rows whose straight-line motion stays on the plateau use the exact kick.

    On the plateau the potential is ``cos(kappa x_axis)`` and the flow moves only the
    conjugate coordinate, linearly in time, so the midpoint solution is the
    closed-form kick whenever start and end lie on the (convex) plateau.
    """
    m, k, a = pot.m, pot.kappa, pot.axis
    conj = a + m if a < m else a - m
    sign = 1.0 if a < m else -1.0
    xa = x[:, a]
    y = x.copy()
    y[:, conj] += sign * amp * k * np.sin(k * xa)
    fast = (np.sum(x * x, -1) <= pot.plateau) & (np.sum(y * y, -1) <= pot.plateau)
    S = np.zeros(x.shape[0])
    # discrete action: sum dt (eta . H_eta - H) at midpoints
    if a < m:
        S[fast] = -amp[fast] * np.cos(k * xa[fast])
    else:
        S[fast] = amp[fast] * (-k * xa[fast] * np.sin(k * xa[fast]) - np.cos(k * xa[fast]))
    if J is not None:
        J = J.copy()
        col = sign * amp[fast] * k * k * np.cos(k * xa[fast])
        J[fast, conj, :] += col[:, None] * J[fast, a, :]
    slow = ~fast
    if np.any(slow):
        Js = None if J is None else J[slow]
        y[slow], S[slow], Js = _midpoint_flow(pot, x[slow], amp[slow], steps, Js)
        if J is not None:
            J[slow] = Js
    return y, S, J


def disc_layout(rho0: float, N: int, count: int = 1, shrink: float = 4.0, margin: float = 0.98,
                angle: float = 0.0):
    """Disc centres and radii inside the rotation-invariant disc of radius rho0.

    The outermost disc sits at radius ``rho_c = margin rho0 / (1 + sin(pi/N)/2)`` with
    radius ``r = rho_c sin(pi/N) / 2``, a quarter of the chord between consecutive
    rotation images. Further discs (nested mode) scale centre radius and disc
    radius together by ``1/shrink``.

    Returns
    -------
    list of (centre, radius)
        Centres are (X_1, Y_1) pairs in the first rotation plane.
    """
    if N < 2:
        raise ParameterError("N must be at least 2")
    rho_c = margin * rho0 / (1.0 + 0.5 * np.sin(np.pi / N))
    out = []
    for i in range(count):
        rc = rho_c / shrink**i
        r = 0.5 * rc * np.sin(np.pi / N)
        out.append((rc * np.array([np.cos(angle), np.sin(angle)]), r))
    return out


class DiscKick:
    """Kick ``theta`` supported on discs, acting on rotation-chart coordinates (Q, P).

    Parameters
    ----------
    m : int
    amplitude, wavenumber : float
        ``a`` and ``kappa`` of the reference map.
    discs : sequence of (centre, radius)
        Centres in normalised coordinates ``(X_1, Y_1)`` of the first plane.
    eps : float
        Rotation parameter fixing the normalisation ``X = eps^{1/4} Q``,
        ``Y = eps^{-1/4} P``; 1 means the coordinates are already normalised.
    plateau : float
        Squared radius (in the unit ball) on which the reference map is the Harper map.
    steps : int
        Midpoint steps per flow.
    """

    def __init__(self, m: int = 1, amplitude: float = 0.05, wavenumber: float = 3 * np.pi,
                 discs: Sequence[Tuple[np.ndarray, float]] = (), eps: float = 1.0,
                 plateau: float = 0.5, steps: int = 10):
        if amplitude < 0:
            raise ParameterError("amplitude must be non-negative")
        self.m = int(m)
        self.amplitude = float(amplitude)
        self.wavenumber = float(wavenumber)
        self.discs = [(np.asarray(c, dtype=float), float(r)) for c, r in discs]
        self.eps = float(eps)
        self.plateau = float(plateau)
        self.steps = int(steps)
        self._s = self.eps**0.25

    def _centre(self, c):
        full = np.zeros(2 * self.m)
        full[0], full[self.m] = c[0], c[1]
        return full

    def to_normal(self, w):
        m = self.m
        return np.concatenate([w[:, :m] * self._s, w[:, m:] / self._s], axis=-1)

    def from_normal(self, x):
        m = self.m
        return np.concatenate([x[:, :m] / self._s, x[:, m:] * self._s], axis=-1)

    def disc_index(self, w) -> np.ndarray:
        """Index of the disc containing each chart point, -1 if none."""
        x = self.to_normal(np.atleast_2d(w))
        idx = np.full(x.shape[0], -1)
        for i, (c, r) in enumerate(self.discs):
            idx[np.sum((x - self._centre(c)) ** 2, axis=-1) < r * r] = i
        return idx

    def evaluate(self, w, scale=1.0, with_jacobian: bool = False):
        """Apply theta to chart points w (B, 2m); ``scale`` multiplies the amplitude per row.

        Returns ``(image, action)`` or ``(image, action, jacobian)``; the action
        satisfies ``P' . dQ' - P . dQ = dS``.
        """
        w = np.atleast_2d(np.asarray(w, dtype=float))
        B, d = w.shape
        m = self.m
        scale = np.broadcast_to(np.asarray(scale, dtype=float).reshape(-1), (B,))
        x = self.to_normal(w)
        img = x.copy()
        S = np.zeros(B)
        J = np.broadcast_to(np.eye(d), (B, d, d)).copy() if with_jacobian else None
        idx = self.disc_index(w)
        for i, (c, r) in enumerate(self.discs):
            sel = (idx == i) & (scale != 0.0)
            if not np.any(sel) or self.amplitude == 0.0:
                continue
            cf = self._centre(c)
            out = reference_kick((x[sel] - cf) / r, self.amplitude * scale[sel], self.wavenumber,
                                 self.plateau, self.steps, with_jacobian)
            xi1, s0 = out[0], out[1]
            xi0 = (x[sel] - cf) / r
            img[sel] = cf + r * xi1
            S[sel] = r * r * s0 + r * np.sum(cf[m:] * (xi1 - xi0)[:, :m], axis=-1)
            if with_jacobian:
                J[sel] = out[2]
        img = self.from_normal(img)
        if with_jacobian:
            sv = np.concatenate([np.full(m, self._s), np.full(m, 1.0 / self._s)])
            J = J * sv[None, None, :] / sv[None, :, None]
            return img, S, J
        return img, S

    def __call__(self, w, scale=1.0):
        return self.evaluate(w, scale)[0]

    def to_dict(self) -> dict:
        return {"m": self.m, "amplitude": self.amplitude, "wavenumber": self.wavenumber,
                "discs": [[c.tolist(), r] for c, r in self.discs], "eps": self.eps,
                "plateau": self.plateau, "steps": self.steps}
