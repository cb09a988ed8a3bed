"""Symplectic linear algebra, one-forms on R^n and smooth cutoff profiles.

Phase points are stored as flat arrays ``x = (q_1..q_n, p_1..p_n)``; the
standard symplectic form is ``sum dq_i ^ dp_i`` with matrix

    Omega = [[0, I], [-I, 0]].
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.special import expit

from .exceptions import DimensionError, DomainError, ParameterError

__all__ = [
    "PhasePoint",
    "symplectic_matrix",
    "symplectic_defect",
    "smooth_step",
    "bump_mu",
    "cutoff_xi",
    "OneFormField",
    "antiderivative",
    "closedness_defect",
    "loop_integral",
    "QUAD_TOL",
]

QUAD_TOL = 1e-12


@dataclass(frozen=True)
class PhasePoint:
    """A point of R^{2n} in canonical coordinates."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if q.ndim != 1 or q.shape != p.shape:
            raise DimensionError(f"q and p must be equal-length vectors, got {q.shape} and {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ParameterError("phase point coordinates must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, x) -> "PhasePoint":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.size % 2:
            raise DimensionError("phase array must be a flat vector of even length")
        n = x.size // 2
        return cls(x[:n], x[n:])


def symplectic_matrix(m: int) -> np.ndarray:
    """Standard symplectic matrix of size 2m."""
    eye = np.eye(m)
    zero = np.zeros((m, m))
    return np.block([[zero, eye], [-eye, zero]])


def symplectic_defect(J) -> float:
    """Max-abs entry of ``J^T Omega J - Omega``.

    Accepts a single matrix or a stack ``(..., 2m, 2m)``; for a stack the
    largest defect is returned.
    """
    J = np.asarray(J, dtype=float)
    if J.ndim < 2 or J.shape[-1] != J.shape[-2]:
        raise DimensionError(f"expected square matrices, got shape {J.shape}")
    d = J.shape[-1]
    if d % 2:
        raise DimensionError(f"symplectic matrices need even dimension, got {d}")
    omega = symplectic_matrix(d // 2)
    JT = np.swapaxes(J, -1, -2)
    return float(np.max(np.abs(JT @ omega @ J - omega)))


def _as_float(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def smooth_step(u, deriv: int = 0):
    """Smooth step S(u) = e^{-1/u} / (e^{-1/u} + e^{-1/(1-u)}) and its derivatives.

    S is exactly 0 for u <= 0 and exactly 1 for u >= 1.

    Parameters
    ----------
    u : array_like
    deriv : {0, 1, 2}
        Order of the derivative returned.
    """
    if deriv not in (0, 1, 2):
        raise ParameterError("deriv must be 0, 1 or 2")
    u, scalar = _as_float(u)
    u = np.atleast_1d(u)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    if deriv == 0:
        out[u >= 1.0] = 1.0
    if np.any(inside):
        ui = u[inside]
        g = 1.0 / ui - 1.0 / (1.0 - ui)
        s = expit(-g)
        sc = expit(g)  # 1 - s without cancellation
        if deriv == 0:
            out[inside] = s
        else:
            w = 1.0 / ui**2 + 1.0 / (1.0 - ui) ** 2
            s1 = s * sc * w
            if deriv == 1:
                out[inside] = s1
            else:
                dw = -2.0 / ui**3 + 2.0 / (1.0 - ui) ** 3
                out[inside] = s1 * (sc - s) * w + s * sc * dw
    return float(out[0]) if scalar else out


def bump_mu(t, deriv: int = 0):
    """Transition profile equal to 1 for t <= -1/2 and 0 for t >= 1/2.

    ``mu(t) = S(1/2 - t)``, with S the smooth step. ``deriv`` selects the
    derivative with respect to t.
    """
    t, scalar = _as_float(t)
    val = smooth_step(0.5 - t, deriv)
    if deriv == 1:
        val = -val
    return float(val) if scalar else val


def cutoff_xi(s, delta: float, deriv: int = 0):
    """Radial cutoff equal to 1 on [0, delta/2] and 0 on [delta, 1].

    Raises
    ------
    ParameterError
        If delta is not in (0, 1).
    """
    if not (0.0 < delta < 1.0):
        raise ParameterError(f"delta must lie in (0,1), got {delta}")
    s, scalar = _as_float(s)
    half = 0.5 * delta
    val = smooth_step((delta - s) / half, deriv)
    if deriv:
        val = val * (-1.0 / half) ** deriv
    return float(val) if scalar else val


@dataclass(frozen=True)
class OneFormField:
    """A one-form ``sum a_i(x) dx_i`` on a box in R^dim.

    Parameters
    ----------
    dim : int
    coeff : callable
        Maps a point of shape (dim,) to the coefficient vector a(x).
    jacobian : callable, optional
        Returns the matrix ``J[i, j] = d a_i / d x_j``. Central differences
        with ``fd_step`` are used when absent.
    fd_step : float
    domain : (lo, hi), optional
        Box on which coeff is defined.
    """

    dim: int
    coeff: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-6
    domain: Optional[tuple] = field(default=None)

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError("dim must be positive")
        if not self.fd_step > 0:
            raise ParameterError("fd_step must be positive")
        if self.domain is not None:
            lo = np.broadcast_to(np.asarray(self.domain[0], float), (self.dim,)).copy()
            hi = np.broadcast_to(np.asarray(self.domain[1], float), (self.dim,)).copy()
            if np.any(lo >= hi):
                raise ParameterError("domain box must have lo < hi")
            object.__setattr__(self, "domain", (lo, hi))

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.coeff(np.asarray(x, dtype=float)), dtype=float)

    def jac(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float)
        J = np.empty((self.dim, self.dim))
        h = self.fd_step
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = h
            J[:, j] = (self(x + e) - self(x - e)) / (2 * h)
        return J

    def contains(self, x) -> bool:
        if self.domain is None:
            return True
        lo, hi = self.domain
        return bool(np.all(x >= lo) and np.all(x <= hi))


def _segment_integral(form: OneFormField, start: np.ndarray, axis: int, end_value: float,
                      tol: float) -> float:
    a = float(start[axis])
    if a == end_value:
        return 0.0
    point = start.copy()

    def integrand(t):
        point[axis] = t
        return form(point)[axis]

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, _ = integrate.quad(integrand, a, end_value, epsabs=tol, epsrel=tol, limit=200)
    return float(val)


def antiderivative(form: OneFormField, base, target, order: Optional[Sequence[int]] = None,
                   tol: float = QUAD_TOL) -> float:
    """Integrate a one-form along an axis-parallel polyline.

    The path leaves ``base`` and moves one coordinate at a time to its
    target value, in the axis order ``order`` (default 0, 1, ...).

    Returns
    -------
    float
        Line integral; exactly 0.0 when target equals base.

    Raises
    ------
    DomainError
        If a path vertex lies outside ``form.domain``.
    """
    base = np.asarray(base, dtype=float).copy()
    target = np.asarray(target, dtype=float)
    if base.shape != (form.dim,) or target.shape != (form.dim,):
        raise DimensionError("base and target must be points of the form's dimension")
    order = list(range(form.dim)) if order is None else list(order)
    if sorted(order) != list(range(form.dim)):
        raise ParameterError("order must be a permutation of the axes")

    vertices = [base.copy()]
    cur = base.copy()
    for ax in order:
        cur[ax] = target[ax]
        vertices.append(cur.copy())
    for v in vertices:
        if not form.contains(v):
            raise DomainError(f"integration path leaves the domain at {v}")

    total = 0.0
    cur = base.copy()
    for ax in order:
        total += _segment_integral(form, cur, ax, float(target[ax]), tol)
        cur[ax] = target[ax]
    return total


def closedness_defect(form: OneFormField, x) -> float:
    """Largest ``|d_i a_j - d_j a_i|`` at x."""
    J = form.jac(np.asarray(x, dtype=float))
    if form.dim == 1:
        return 0.0
    return float(np.max(np.abs(J - J.T)))


def loop_integral(form: OneFormField, rect, axes=(0, 1), anchor=None,
                  tol: float = QUAD_TOL) -> float:
    """Counter-clockwise circulation around a rectangle boundary.

    Parameters
    ----------
    rect : ((x0, x1), (y0, y1))
        Bounds along ``axes[0]`` and ``axes[1]``.
    anchor : array_like, optional
        Values of the remaining coordinates (default zeros).
    """
    (x0, x1), (y0, y1) = rect
    i, j = axes
    if i == j:
        raise ParameterError("axes must be distinct")
    p = np.zeros(form.dim) if anchor is None else np.asarray(anchor, dtype=float).copy()
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    for cx, cy in corners:
        p[i], p[j] = cx, cy
        if not form.contains(p):
            raise DomainError("rectangle boundary leaves the domain")
    total = 0.0
    # bottom, right, top, left
    legs = [((x0, y0), i, x1), ((x1, y0), j, y1), ((x1, y1), i, x0), ((x0, y1), j, y0)]
    for (sx, sy), ax, end in legs:
        p[i], p[j] = sx, sy
        total += _segment_integral(form, p.copy(), ax, end, tol)
    return total
