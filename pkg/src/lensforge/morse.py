"""Morse normal coordinates for the level functions f_h, with symplectic completion.

For ``u = pbar - cbar(h)`` the integral remainder gives
``f_h(cbar + u) = f_c + u^T A(u) u`` with ``A(u) = int_0^1 (1 - t) Hess f_h(cbar + t u) dt``.
Writing ``A(0) = V diag(lam) V^T`` and ``C(u) = sqrt(A(0)^{-1} A(u))`` (principal root,
so ``C^T A(0) C = A(u)``), the coordinates ``P = diag(sqrt|lam|) V^T C(u) u`` satisfy
``f_h = f_c + sum_i s_i P_i^2`` with ``s = sign(lam)``.

The momenta P are completed by the generating function ``G(qbar, P) = qbar . pbar(P)``:
``Q = DP^{-T} qbar``. All derivatives of P are complex-step derivatives, so the chart
is exact to rounding.
"""
from __future__ import annotations

import numpy as np

from .action import IntegrableActionHamiltonian, critical_point, hess_f_h, solve_f_h
from .exceptions import ChartError, ConvergenceError, DegenerateSpectrumError

__all__ = ["MorseChart", "morse_chart", "sqrtm_batched"]

_CSTEP = 1e-30


def sqrtm_batched(M, tol: float = 1e-15, max_iter: int = 60):
    """Principal square root of a stack of matrices (Denman-Beavers, complex-safe)."""
    M = np.asarray(M)
    if M.shape[-1] == 1:
        return np.sqrt(M)
    Y = M.copy()
    Z = np.broadcast_to(np.eye(M.shape[-1], dtype=M.dtype), M.shape).copy()
    for _ in range(max_iter):
        Yi, Zi = np.linalg.inv(Y), np.linalg.inv(Z)
        Y, Z, Y0 = 0.5 * (Y + Zi), 0.5 * (Z + Yi), Y
        if np.max(np.abs(Y - Y0), initial=0.0) <= tol * max(1.0, np.max(np.abs(Y), initial=0.0)):
            return Y
    raise ConvergenceError("matrix square root did not converge")


class MorseChart:
    """Morse chart of f_h around its critical point, batched over energies.

    Parameters
    ----------
    H : IntegrableActionHamiltonian
    radius : float
        Chart domain: ``|pbar - cbar(h)| <= radius``.
    nodes : int
        Gauss-Legendre nodes for the remainder integral A(u).
    gap_tol : float
        Minimal separation between eigenvalues of ``Hess f_h(cbar)`` and from 0.
    h_ref : float
        Energy at which the index and sign pattern are fixed.

    Attributes
    ----------
    index : int
        Number of positive squares k.
    signs : ndarray
        ``s_i = +1`` for i < k, ``-1`` otherwise.
    """

    def __init__(self, H: IntegrableActionHamiltonian, radius: float = 0.3, nodes: int = 20,
                 gap_tol: float = 1e-6, h_ref: float = 0.0):
        self.H = H
        self.m = H.n - 1
        self.radius = float(radius)
        self.nodes = int(nodes)
        self.gap_tol = float(gap_tol)
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        self._t = 0.5 * (x + 1.0)
        self._w = 0.5 * w * (1.0 - self._t)
        lam = self.base(np.array([h_ref]))[1][0]
        self.signs = np.sign(lam)
        self.index = int(np.sum(lam > 0))

    # per-energy data -------------------------------------------------------
    def base(self, h):
        """Critical point, eigenvalues (descending), eigenvectors, f_c for each energy."""
        h = np.atleast_1d(np.asarray(h, dtype=float))
        c = critical_point(self.H, h)
        A0 = 0.5 * hess_f_h(self.H, h, c)
        lam, V = np.linalg.eigh(A0)
        lam, V = lam[:, ::-1], V[:, :, ::-1]
        idx = np.argmax(np.abs(V), axis=-2)
        sgn = np.sign(np.take_along_axis(V, idx[:, None, :], axis=-2))
        V = V * sgn
        gaps = np.abs(lam)
        if self.m > 1:
            gaps = np.concatenate([gaps, -np.diff(lam, axis=-1)], axis=-1)
        if np.min(gaps) < self.gap_tol:
            raise DegenerateSpectrumError(
                f"Hessian spectrum gap {np.min(gaps):.3g} below {self.gap_tol}")
        fc = solve_f_h(self.H, h, c)
        return c, lam, V, fc

    def critical_value(self, h):
        return self.base(h)[3]

    # normal coordinates ------------------------------------------------------
    def _remainder_matrix(self, c, u, h):
        B, m = u.shape
        pts = c[:, None, :] + self._t[None, :, None] * u[:, None, :]
        Hs = hess_f_h(self.H, np.repeat(h, self.nodes), pts.reshape(-1, m)).reshape(B, self.nodes, m, m)
        return np.einsum("k,bkij->bij", self._w, Hs)

    def _P_of_u(self, u, h, base):
        c, lam, V, _ = base
        A = self._remainder_matrix(c, u, h)
        A0 = np.einsum("bij,bj,bkj->bik", V, lam, V)
        C = sqrtm_batched(np.linalg.solve(A0, A))
        Cu = np.einsum("bij,bj->bi", C, u)
        return np.sqrt(np.abs(lam)) * np.einsum("bji,bj->bi", V, Cu)

    def _prep(self, x, h):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        h = np.broadcast_to(np.asarray(h, dtype=float).reshape(-1), x.shape[:1]).copy()
        return x, h

    def _check_domain(self, u):
        if np.any(np.linalg.norm(u, axis=-1) > self.radius * (1 + 1e-12)):
            raise ChartError("point outside the Morse chart domain")

    def P(self, pbar, h, base=None):
        """Normal coordinates ``P(pbar)`` at energies h, shape (B, m)."""
        pbar, h = self._prep(pbar, h)
        base = self.base(h) if base is None else base
        u = pbar - base[0]
        self._check_domain(u)
        return self._P_of_u(u, h, base)

    def DP(self, pbar, h, base=None):
        """Jacobian ``dP / dpbar`` by complex step, shape (B, m, m)."""
        pbar, h = self._prep(pbar, h)
        base = self.base(h) if base is None else base
        u = pbar - base[0]
        self._check_domain(u)
        cols = []
        for j in range(self.m):
            uj = u.astype(complex)
            uj[:, j] += 1j * _CSTEP
            cols.append(self._P_of_u(uj, h, base).imag / _CSTEP)
        return np.stack(cols, axis=-1)

    def P_inverse(self, P, h, base=None, tol: float = 1e-14, max_iter: int = 40):
        """pbar with ``P(pbar) = P`` (Newton from the linearisation)."""
        P, h = self._prep(P, h)
        base = self.base(h) if base is None else base
        c, lam, V = base[:3]
        u = np.einsum("bij,bj->bi", V, P / np.sqrt(np.abs(lam)))
        for _ in range(max_iter):
            if np.any(np.linalg.norm(u, axis=-1) > self.radius):
                raise ChartError("inverse normal coordinates leave the chart domain")
            r = self._P_of_u(u, h, base) - P
            if np.max(np.abs(r), initial=0.0) <= tol:
                return c + u
            u = u - np.linalg.solve(self.DP(c + u, h, base), r[..., None])[..., 0]
        raise ConvergenceError("inverse Morse coordinates did not converge")

    # symplectic completion ------------------------------------------------------
    def forward(self, z, h):
        """``(qbar, pbar) -> (Q, P)`` at energies h."""
        z, h = self._prep(z, h)
        m = self.m
        base = self.base(h)
        P = self.P(z[:, m:], h, base)
        D = self.DP(z[:, m:], h, base)
        Q = np.linalg.solve(np.swapaxes(D, -1, -2), z[:, :m, None])[..., 0]
        return np.concatenate([Q, P], axis=-1)

    def inverse(self, w, h):
        """``(Q, P) -> (qbar, pbar)``."""
        w, h = self._prep(w, h)
        m = self.m
        base = self.base(h)
        pbar = self.P_inverse(w[:, m:], h, base)
        D = self.DP(pbar, h, base)
        qbar = np.einsum("bji,bj->bi", D, w[:, :m])
        return np.concatenate([qbar, pbar], axis=-1)

    @staticmethod
    def action(z, w):
        """Primitive S with ``P . dQ - pbar . dqbar = dS``: ``S = P . Q - qbar . pbar``."""
        m = z.shape[-1] // 2
        return np.sum(w[..., m:] * w[..., :m], axis=-1) - np.sum(z[..., :m] * z[..., m:], axis=-1)

    def normal_form_residual(self, pbar, h) -> float:
        """``max |f_h - f_c - sum s_i P_i^2|`` over the given points."""
        pbar, h = self._prep(pbar, h)
        base = self.base(h)
        P = self.P(pbar, h, base)
        f = solve_f_h(self.H, h, pbar)
        return float(np.max(np.abs(f - base[3] - np.sum(self.signs * P * P, axis=-1))))


def morse_chart(H: IntegrableActionHamiltonian, h: float = 0.0, **kw) -> MorseChart:
    """Morse chart of f_h with index and sign pattern fixed at energy h."""
    return MorseChart(H, h_ref=h, **kw)
