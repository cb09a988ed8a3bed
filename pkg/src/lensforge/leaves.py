"""Leaf one-forms built by quadrature of the transported fibre.

This is the direct route to the leaves: the image of the affine fibre
``A_phat`` is read off as the graph of a closed one-form beta on
``{q_n = 1}``, the primitives f (left) and g (right) are line integrals (composite
Gauss-Legendre) and
the blended form is ``d(mu f + (1 - mu) g)``. :class:`lensforge.realizer.LensRealizer`
uses the map's action instead; tests compare the two.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ClosednessError, InversionError, PerturbationTooLargeError, SupportError
from .geometry import OneFormField, bump_mu, closedness_defect
from .maps import SliceMap

__all__ = [
    "invert_parametrisation",
    "extract_beta",
    "assemble_leaf_form",
    "LeafOneForm",
    "leaf_from_map",
]


def invert_parametrisation(R: SliceMap, qbar, pbar, h, tol: float = 1e-13, max_iter: int = 30,
                           step: float = 1e-6) -> np.ndarray:
    """Solve ``X(u; pbar, h) = qbar`` for the fibre parameter u (batched Newton).

    Parameters
    ----------
    qbar, pbar : array_like, shape (B, m)
    h : array_like, shape (B,)
    """
    qbar = np.atleast_2d(np.asarray(qbar, dtype=float))
    pbar = np.broadcast_to(np.atleast_2d(np.asarray(pbar, dtype=float)), qbar.shape)
    h = np.broadcast_to(np.asarray(h, dtype=float).reshape(-1), qbar.shape[:1])
    m = R.m
    u = qbar.copy()
    eye = np.eye(m) * step
    active = np.arange(qbar.shape[0])
    for _ in range(max_iter + 1):
        ua = u[active]
        stack = np.concatenate([ua[None], ua[None] + eye[:, None], ua[None] - eye[:, None]])
        zz = np.concatenate([stack, np.broadcast_to(pbar[active], stack.shape)], axis=-1)
        img = R.evaluate(zz.reshape(-1, 2 * m), np.tile(h[active], 2 * m + 1))[0][:, :m]
        img = img.reshape(2 * m + 1, active.size, m)
        r = img[0] - qbar[active]
        ok = np.max(np.abs(r), axis=-1) <= tol
        active, r = active[~ok], r[~ok]
        if active.size == 0:
            return u
        J = np.stack([(img[1 + j] - img[1 + m + j])[~ok] / (2 * step) for j in range(m)], axis=-1)
        u[active] = u[active] - np.linalg.solve(J, r[..., None])[..., 0]
    raise InversionError("fibre parametrisation could not be inverted")


def _param_det(R, u, pbar, h, step=1e-6):
    m = R.m
    cols = []
    for e in np.eye(m) * step:
        plus = R.evaluate(np.concatenate([u + e, pbar], axis=-1), h)[0][:, :m]
        minus = R.evaluate(np.concatenate([u - e, pbar], axis=-1), h)[0][:, :m]
        cols.append((plus - minus) / (2 * step))
    return np.linalg.det(np.stack(cols, axis=-1))


def extract_beta(R: SliceMap, phat, probe_points: int = 9, det_floor: float = 1e-3,
                 closed_tol: float = 1e-8, tol: float = 1e-13) -> OneFormField:
    """One-form beta on ``{q_n = 1}`` whose graph is ``R(A_phat)``.

    ``b(qbar) = Y(u)`` where u solves ``X(u; pbar_hat, h) = qbar``.

    Raises
    ------
    PerturbationTooLargeError
        If ``det dX/du`` falls below ``det_floor`` on the probe grid.
    ClosednessError
        If the measured closedness defect exceeds ``closed_tol``.
    """
    phat = np.asarray(phat, dtype=float).reshape(-1)
    m = R.m
    pb, h = phat[:m], phat[m]

    def coeff(qbar):
        qbar = np.asarray(qbar, dtype=float)
        flat = qbar.reshape(-1, m)
        u = invert_parametrisation(R, flat, pb, np.full(flat.shape[0], h), tol=tol)
        img = R.evaluate(np.concatenate([u, np.broadcast_to(pb, u.shape)], axis=-1),
                         np.full(flat.shape[0], h))[0]
        return img[:, m:].reshape(qbar.shape)

    beta = OneFormField(m, coeff, fd_step=1e-5)
    axes = [np.linspace(-0.95, 0.95, probe_points)] * m
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m)
    det = _param_det(R, grid, np.broadcast_to(pb, grid.shape), np.full(grid.shape[0], h))
    if np.min(det) < det_floor:
        raise PerturbationTooLargeError(
            f"transported fibre is not a graph (det {np.min(det):.3g} < {det_floor})")
    if m > 1:
        defect = max(closedness_defect(beta, g) for g in grid)
        if defect > closed_tol:
            raise ClosednessError(f"transported fibre is not Lagrangian (defect {defect:.3g})")
    return beta


@dataclass
class LeafOneForm:
    """Primitives and blended form of one leaf.

    ``f`` integrates the constant form phat from ``(0, ..., 0, -1)``. ``g``
    integrates ``beta + phat_n dq_n`` from the corner ``(-1, ..., -1, -1)``
    where it is pinned to f, so that g - f vanishes wherever the map is the
    identity.
    """

    phat: np.ndarray
    beta: OneFormField
    epsilon: float
    panel_width: float = 0.05
    nodes: int = 16

    @property
    def n(self) -> int:
        return self.phat.size

    def _corner(self):
        return -np.ones(self.n - 1)

    def f_left(self, q):
        q = np.asarray(q, dtype=float)
        return float(self.phat[:-1] @ q[:-1] + self.phat[-1] * (q[-1] + 1.0))

    def integrate_beta(self, qbar) -> float:
        """Line integral of beta from the corner to qbar along an axis-parallel path.

        Composite Gauss-Legendre on panels of at most ``panel_width``; all
        nodes go through beta in one batched call.
        """
        qbar = np.asarray(qbar, dtype=float)
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        cur = self._corner()
        pts, wts, axes = [], [], []
        for ax in range(qbar.size):
            a, b = cur[ax], qbar[ax]
            if a != b:
                k = max(1, int(np.ceil(abs(b - a) / self.panel_width)))
                edges = np.linspace(a, b, k + 1)
                half = 0.5 * np.diff(edges)
                t = (0.5 * (edges[:-1] + edges[1:]))[:, None] + half[:, None] * x
                seg = np.repeat(cur[None], t.size, axis=0)
                seg[:, ax] = t.ravel()
                pts.append(seg)
                wts.append((half[:, None] * w).ravel())
                axes.append(np.full(t.size, ax))
            cur = cur.copy()
            cur[ax] = b
        if not pts:
            return 0.0
        pts, wts, axes = np.concatenate(pts), np.concatenate(wts), np.concatenate(axes)
        vals = self.beta(pts)[np.arange(pts.shape[0]), axes]
        return float(np.sum(wts * vals))

    def g_right(self, q):
        q = np.asarray(q, dtype=float)
        base = -float(np.sum(self.phat[:-1]))
        return base + self.integrate_beta(q[:-1]) + self.phat[-1] * (q[-1] + 1.0)

    def primitive_difference(self, qbar) -> float:
        """``g - f`` at configuration qbar (independent of q_n)."""
        q = np.append(np.asarray(qbar, dtype=float), 0.0)
        return self.g_right(q) - self.f_left(q)

    def f_tilde(self, q):
        q = np.asarray(q, dtype=float)
        mu = bump_mu(q[-1] / self.epsilon)
        if mu == 1.0:
            return self.f_left(q)
        return mu * self.f_left(q) + (1 - mu) * self.g_right(q)

    def alpha(self, q):
        """Blended form ``d f_tilde`` at q."""
        q = np.asarray(q, dtype=float)
        t = q[-1] / self.epsilon
        mu = bump_mu(t)
        if mu == 1.0:
            return self.phat.copy()
        b = self.beta(q[:-1])
        out = np.append(mu * self.phat[:-1] + (1 - mu) * b, self.phat[-1])
        dmu = bump_mu(t, 1) / self.epsilon
        if dmu != 0.0:
            out[-1] -= dmu * self.primitive_difference(q[:-1])
        return out

    def as_form(self) -> OneFormField:
        return OneFormField(self.n, self.alpha, fd_step=1e-5)

    def overlap_mismatch(self, samples: int = 64, seed: int = 0) -> float:
        """Largest ``|f - g|`` on ``{|q_n| < eps}`` with qbar outside ``(-eps, eps)^{n-1}``."""
        rng = np.random.default_rng(seed)
        m = self.n - 1
        worst = 0.0
        for _ in range(samples):
            qbar = rng.uniform(-1, 1, m)
            k = rng.integers(m)
            qbar[k] = rng.choice([-1, 1]) * rng.uniform(self.epsilon, 1.0)
            worst = max(worst, abs(self.primitive_difference(qbar)))
        return worst


def assemble_leaf_form(phat, beta: OneFormField, epsilon: float, overlap_tol: float = 1e-9,
                       samples: int = 64, seed: int = 0) -> LeafOneForm:
    """Glue the left and right primitives of one leaf.

    Raises
    ------
    SupportError
        If f and g disagree on the overlap (the map is not the identity
        away from its support).
    """
    leaf = LeafOneForm(np.asarray(phat, dtype=float).reshape(-1), beta, float(epsilon))
    mismatch = leaf.overlap_mismatch(samples, seed)
    if mismatch > overlap_tol:
        raise SupportError(f"left and right primitives differ by {mismatch:.3g} on the overlap")
    return leaf


def leaf_from_map(R: SliceMap, phat, epsilon: float, **kw) -> LeafOneForm:
    """Convenience: :func:`extract_beta` followed by :func:`assemble_leaf_form`."""
    return assemble_leaf_form(phat, extract_beta(R, phat), epsilon, **kw)
