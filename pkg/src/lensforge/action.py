"""Integrable systems in action-angle form and their energy-level geometry.

``H(p)`` is a polynomial in the actions. The frequencies ``A = grad H`` give
the linear flow ``q' = A(p)``. Near a periodic torus (``A_i(0) = 0`` for
``i < n``, ``A_n(0) > 0``) each energy level ``H = h`` is the graph
``p_n = -f_h(pbar)``, and the return map to ``q_n = 0`` is the shear
``qbar -> qbar + grad f_h(pbar)``.

All level-set routines accept complex input so that complex-step
derivatives can be taken through them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .exceptions import ChartError, LocalizationError, TorusValidationError, TransversalityError

__all__ = [
    "IntegrableActionHamiltonian",
    "TorusReport",
    "validate_torus",
    "solve_f_h",
    "grad_f_h",
    "hess_f_h",
    "critical_point",
    "StraighteningChart",
    "canonical_straightening",
]


def _poly_eval(terms, p):
    p = np.asarray(p)
    out = np.zeros(p.shape[:-1], dtype=np.result_type(p, float))
    for c, e in terms:
        out = out + c * np.prod(p ** np.asarray(e), axis=-1)
    return out


def _poly_diff(terms, i):
    out = []
    for c, e in terms:
        if e[i] > 0:
            e2 = list(e)
            e2[i] -= 1
            out.append((c * e[i], tuple(e2)))
    return out


class IntegrableActionHamiltonian:
    """Polynomial Hamiltonian ``H(p) = sum_k c_k prod_i p_i^{e_ki}`` of the actions.

    Parameters
    ----------
    n : int
    terms : sequence of (coeff, exponents)
        ``exponents`` is a length-n tuple of non-negative integers.
    """

    def __init__(self, n: int, terms: Sequence[Tuple[float, Sequence[int]]]):
        self.n = int(n)
        self.terms = [(float(c), tuple(int(x) for x in e)) for c, e in terms]
        for _, e in self.terms:
            if len(e) != self.n or min(e) < 0:
                raise ValueError("exponents must be non-negative with length n")
        self._grad = [_poly_diff(self.terms, i) for i in range(self.n)]
        self._hess = [[_poly_diff(g, j) for j in range(self.n)] for g in self._grad]

    def __call__(self, p):
        return _poly_eval(self.terms, p)

    value = __call__

    def frequencies(self, p):
        """``A(p) = grad H(p)``, shape (..., n)."""
        return np.stack([_poly_eval(g, p) for g in self._grad], axis=-1)

    gradient = frequencies

    def hessian(self, p):
        return np.stack([np.stack([_poly_eval(h, p) for h in row], axis=-1) for row in self._hess],
                        axis=-2)

    def to_json(self) -> list:
        return [{"coeff": c, "exponents": list(e)} for c, e in self.terms]

    @classmethod
    def from_json(cls, data: list) -> "IntegrableActionHamiltonian":
        terms = [(d["coeff"], d["exponents"]) for d in data]
        if not terms:
            raise ValueError("need at least one term")
        return cls(len(terms[0][1]), terms)

    @classmethod
    def standard(cls, n: int = 2) -> "IntegrableActionHamiltonian":
        """``H = p_n + |p|^2 / 2``: unit speed along q_n at p = 0, Hessian I."""
        terms = [(1.0, tuple(int(i == n - 1) for i in range(n)))]
        terms += [(0.5, tuple(2 * int(i == j) for i in range(n))) for j in range(n)]
        return cls(n, terms)


@dataclass
class TorusReport:
    """Outcome of :func:`validate_torus` with the margin of each requirement."""

    passed: bool
    failures: List[str] = field(default_factory=list)
    margins: dict = field(default_factory=dict)


def validate_torus(H: IntegrableActionHamiltonian, det_floor: float = 1e-8, tol: float = 1e-12,
                   raise_on_failure: bool = True) -> TorusReport:
    """Check that the torus ``p = 0`` is periodic along q_n and KAM-nondegenerate.

    Requirements: ``nonvanishing`` (``A_n(0) > 0``), ``periodic``
    (``A_i(0) = 0`` for ``i < n``) and ``kam_nondegenerate``
    (``|det Hess H(0)| >= det_floor``).

    Raises
    ------
    TorusValidationError
        Listing the failed requirements, unless ``raise_on_failure`` is False.
    """
    zero = np.zeros(H.n)
    A = H.frequencies(zero)
    det = float(np.linalg.det(H.hessian(zero)))
    margins = {
        "nonvanishing": float(A[-1]),
        "periodic": float(np.max(np.abs(A[:-1]), initial=0.0)),
        "kam_nondegenerate": abs(det),
    }
    failures = []
    if not A[-1] > tol:
        failures.append("nonvanishing")
    if margins["periodic"] > tol:
        failures.append("periodic")
    if abs(det) < det_floor:
        failures.append("kam_nondegenerate")
    report = TorusReport(not failures, failures, margins)
    if failures and raise_on_failure:
        raise TorusValidationError(failures)
    return report


def _prep(H, h, pbar):
    pbar = np.asarray(pbar)
    scalar = pbar.ndim == 1
    pbar = np.atleast_2d(pbar)
    h = np.broadcast_to(np.asarray(h, dtype=float).reshape(-1), pbar.shape[:1])
    if pbar.shape[-1] != H.n - 1:
        raise ValueError(f"pbar must have {H.n - 1} components")
    return pbar, h, scalar


def _full(pbar, pn):
    return np.concatenate([pbar, pn[:, None]], axis=-1)


def solve_f_h(H: IntegrableActionHamiltonian, h, pbar, tol: float = 1e-12, max_iter: int = 50):
    """f with ``H(pbar, -f) = h`` by Newton on p_n (batched, complex-safe).

    Raises
    ------
    ChartError
        If Newton fails or ``dH/dp_n <= 0`` is met on the way.
    """
    pbar, h, scalar = _prep(H, h, pbar)
    pn = np.zeros(pbar.shape[0], dtype=np.result_type(pbar, float))
    done = False
    for _ in range(max_iter):
        p = _full(pbar, pn)
        r = H(p) - h
        An = H.frequencies(p)[:, -1]
        if np.any(An.real <= 0):
            raise ChartError("dH/dp_n is not positive along the Newton path")
        pn = pn - r / An
        if done:
            break
        done = bool(np.all(np.abs(r) <= tol))
    else:
        raise ChartError("level-set solve did not converge; chart too large")
    f = -pn
    return f[0] if scalar else f


def grad_f_h(H: IntegrableActionHamiltonian, h, pbar, f=None):
    """``grad f_h(pbar) = A_bar / A_n`` evaluated at ``(pbar, -f_h(pbar))``.

    Raises
    ------
    TransversalityError
        If ``A_n <= 0`` there.
    """
    pbar, h, scalar = _prep(H, h, pbar)
    if f is None:
        f = solve_f_h(H, h, pbar)
    A = H.frequencies(_full(pbar, -np.atleast_1d(f)))
    if np.any(A[:, -1].real <= 0):
        raise TransversalityError("A_n <= 0 on the level set")
    g = A[:, :-1] / A[:, -1:]
    return g[0] if scalar else g


def hess_f_h(H: IntegrableActionHamiltonian, h, pbar, f=None):
    """Hessian of f_h at pbar, shape (..., n - 1, n - 1)."""
    pbar, h, scalar = _prep(H, h, pbar)
    if f is None:
        f = solve_f_h(H, h, pbar)
    p = _full(pbar, -np.atleast_1d(f))
    A = H.frequencies(p)
    Hs = H.hessian(p)
    An = A[:, -1][:, None, None]
    g = (A[:, :-1] / A[:, -1:])  # dp_n/dp_j = -g_j
    dA = Hs[:, :-1, :-1] - Hs[:, :-1, -1:] * g[:, None, :]
    dAn = Hs[:, -1:, :-1] - Hs[:, -1:, -1:] * g[:, None, :]
    out = (dA * An - A[:, :-1, None] * dAn) / An**2
    return out[0] if scalar else out


def critical_point(H: IntegrableActionHamiltonian, h, tol: float = 1e-14, max_iter: int = 50):
    """Critical point ``cbar(h)`` of f_h near the origin (Newton on grad f_h)."""
    h = np.atleast_1d(np.asarray(h, dtype=float))
    c = np.zeros((h.size, H.n - 1))
    for _ in range(max_iter):
        g = grad_f_h(H, h, c)
        step = np.linalg.solve(hess_f_h(H, h, c), g[..., None])[..., 0]
        c = c - step
        if np.max(np.abs(step), initial=0.0) <= tol:
            return c
    raise ChartError("critical point of f_h not found")


class StraighteningChart:
    """Symplectic chart in which the integrable flow is the unit drift in q'_n.

    Generated by ``S(q, p') = qbar.pbar' + q_n P_n(pbar', h')`` with
    ``P_n = -f_{h'}(pbar')``, so ``p' = (pbar, H(p))`` and
    ``q' = (qbar - q_n grad f_h(pbar), q_n / A_n(p))``. The section
    ``q_n = 0`` is fixed; ``q_n = 1`` goes to ``q'_n = 1 / A_n(p)``.
    """

    def __init__(self, H: IntegrableActionHamiltonian, h_window: float = 0.2):
        self.H = H
        self.h_window = float(h_window)

    def forward(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = self.H.n
        q, p = x[:, :n], x[:, n:]
        A = self.H.frequencies(p)
        h = self.H(p)
        if np.any(np.abs(h) > self.h_window):
            raise LocalizationError("energy outside the straightening window")
        if np.any(A[:, -1] <= 0):
            raise LocalizationError("A_n <= 0 inside the chart")
        qn = q[:, -1:]
        qbar = q[:, :-1] - qn * A[:, :-1] / A[:, -1:]
        out = np.concatenate([qbar, qn / A[:, -1:], p[:, :-1], h[:, None]], axis=-1)
        return out

    def inverse(self, y):
        y = np.atleast_2d(np.asarray(y, dtype=float))
        n = self.H.n
        qp, pp = y[:, :n], y[:, n:]
        f = solve_f_h(self.H, pp[:, -1], pp[:, :-1])
        p = np.concatenate([pp[:, :-1], -f[:, None]], axis=-1)
        A = self.H.frequencies(p)
        qn = qp[:, -1:] * A[:, -1:]
        qbar = qp[:, :-1] + qn * A[:, :-1] / A[:, -1:]
        return np.concatenate([qbar, qn, p], axis=-1)


def canonical_straightening(H: IntegrableActionHamiltonian, h_window: float = 0.2) -> StraighteningChart:
    """Chart with ``H = p'_n`` near the periodic torus (validates the torus first)."""
    validate_torus(H)
    return StraighteningChart(H, h_window)
