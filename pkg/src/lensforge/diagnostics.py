"""Finite-time Lyapunov exponents and orbit-level checks for maps.

A *system* is anything with ``step(x, with_jacobian) -> (x', J)`` acting on a
batch ``x`` of shape (B, d); plain callables ``x -> (x', J)`` are accepted too.
Exponents are reported per iterate (no time rescaling for section maps).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainError, ParameterError

__all__ = [
    "LyapunovReport",
    "CatMap",
    "RotationMap",
    "IdentitySystem",
    "lyapunov_spectrum",
    "chaotic_fraction",
    "periodicity_defect",
    "invariance_defect",
    "entropy_indicator",
]


def _stepper(system):
    if hasattr(system, "step"):
        return system.step
    if callable(system):
        return lambda x, with_jacobian=True: system(x)
    raise ParameterError("system needs a step method or must be callable")


def _apply(system, x):
    return _stepper(system)(x, False)[0] if hasattr(system, "step") else system(x)[0]


@dataclass
class LyapunovReport:
    """Finite-time Lyapunov spectra for a batch of initial conditions.

    Attributes
    ----------
    exponents : ndarray (B, d)
        Per-iterate exponents, sorted in decreasing order per row.
    escaped : ndarray (B,)
        Rows whose orbit left the region (their exponents cover the iterates
        before escape and are flagged as partial).
    convergence_trace : ndarray (T, B)
        Running lambda_max at each renormalisation in the last tenth of the run.
    """

    exponents: np.ndarray
    transient_discard: int
    iterates: int
    renorm_period: int
    seed: int
    escaped: np.ndarray
    convergence_trace: np.ndarray = field(repr=False)
    notes: str = "exponents per iterate of the map"

    @property
    def lambda_max(self) -> np.ndarray:
        return self.exponents[:, 0]

    def pairing_defect(self) -> float:
        """``max |lambda_i + lambda_{d+1-i}|`` over rows that did not escape."""
        ok = ~self.escaped
        if not np.any(ok):
            return float("nan")
        e = self.exponents[ok]
        return float(np.max(np.abs(e + e[:, ::-1])))

    def sum_defect(self) -> float:
        ok = ~self.escaped
        return float(np.max(np.abs(np.sum(self.exponents[ok], axis=-1)), initial=0.0))

    def to_dict(self) -> dict:
        return {
            "exponents": self.exponents.tolist(),
            "lambda_max": self.lambda_max.tolist(),
            "escaped": self.escaped.tolist(),
            "transient_discard": self.transient_discard,
            "iterates": self.iterates,
            "renorm_period": self.renorm_period,
            "seed": self.seed,
            "notes": self.notes,
        }


class CatMap:
    """Arnold cat map ``x -> M x mod 1`` on the 2-torus, ``M = [[2, 1], [1, 1]]``."""

    M = np.array([[2.0, 1.0], [1.0, 1.0]])

    def step(self, x, with_jacobian: bool = True):
        x = np.atleast_2d(x)
        out = np.mod(x @ self.M.T, 1.0)
        J = np.broadcast_to(self.M, (x.shape[0], 2, 2)) if with_jacobian else None
        return out, J


class RotationMap:
    """Rotation of the plane by ``angle`` (optionally about a centre)."""

    def __init__(self, angle: float, center=(0.0, 0.0)):
        c, s = np.cos(angle), np.sin(angle)
        self.M = np.array([[c, -s], [s, c]])
        self.center = np.asarray(center, dtype=float)

    def step(self, x, with_jacobian: bool = True):
        x = np.atleast_2d(x)
        out = self.center + (x - self.center) @ self.M.T
        J = np.broadcast_to(self.M, (x.shape[0], 2, 2)) if with_jacobian else None
        return out, J


class IdentitySystem:
    def step(self, x, with_jacobian: bool = True):
        x = np.atleast_2d(x)
        d = x.shape[-1]
        return x.copy(), (np.broadcast_to(np.eye(d), (x.shape[0], d, d)) if with_jacobian else None)


def lyapunov_spectrum(system, x0, iterates: int = 10_000, renorm_period: int = 10,
                      transient: int = 1000, seed: int = 0,
                      region: Optional[Callable] = None, growth_cap: float = 1e6) -> LyapunovReport:
    """QR-reorthonormalised Lyapunov spectrum for each row of x0.

    The orbit first runs ``transient`` iterates without tangents; then a
    seeded random orthonormal frame is propagated for ``iterates`` iterates and
    re-orthonormalised every ``renorm_period`` iterates, or earlier once a frame
    column grows beyond ``growth_cap`` (otherwise the contracting directions of
    strongly chaotic orbits drown in rounding). If ``region`` is given,
    rows whose orbit leaves it are frozen and flagged as escaped.
    """
    step = _stepper(system)
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    B, d = x.shape
    escaped = np.zeros(B, dtype=bool)
    done = np.zeros(B, dtype=int)

    def advance(x, with_jac):
        live = ~escaped
        xn, J = x.copy(), None
        out, Jl = step(x[live], with_jac)
        xn[live] = out
        if with_jac:
            J = np.broadcast_to(np.eye(d), (B, d, d)).copy()
            J[live] = Jl
        if region is not None:
            bad = live & ~region(xn)
            if np.any(bad):
                escaped[bad] = True
                xn[bad] = x[bad]
        return xn, J

    for _ in range(transient):
        x, _ = advance(x, False)
    rng = np.random.default_rng(seed)
    frame = np.linalg.qr(rng.normal(size=(d, d)))[0]
    frame = np.broadcast_to(frame, (B, d, d)).copy()
    logs = np.zeros((B, d))
    trace = []
    tail_start = iterates - max(1, iterates // 10)
    for k in range(1, iterates + 1):
        x, J = advance(x, True)
        live = ~escaped
        frame[live] = J[live] @ frame[live]
        done[live] += 1
        grown = np.max(np.abs(frame)) > growth_cap
        if k % renorm_period == 0 or k == iterates or grown:
            q, r = np.linalg.qr(frame)
            diag = np.diagonal(r, axis1=-2, axis2=-1)
            sgn = np.where(diag < 0, -1.0, 1.0)
            logs += np.log(np.abs(diag))
            frame = q * sgn[:, None, :]
            if k >= tail_start and k % renorm_period == 0:
                trace.append(logs[:, 0] / np.maximum(done, 1))
    exps = logs / np.maximum(done, 1)[:, None]
    exps = -np.sort(-exps, axis=-1)
    return LyapunovReport(exps, transient, iterates, renorm_period, seed, escaped,
                          np.array(trace))


def chaotic_fraction(system_or_report, x0=None, threshold: float = 0.05, iterates: int = 10_000,
                     seed: int = 0, **kw) -> float:
    """Fraction of initial conditions with lambda_max above ``threshold``.

    Accepts a precomputed :class:`LyapunovReport` or runs :func:`lyapunov_spectrum`.
    Escaped rows count as not chaotic.
    """
    if isinstance(system_or_report, LyapunovReport):
        rep = system_or_report
    else:
        if x0 is None:
            raise ParameterError("initial conditions required")
        rep = lyapunov_spectrum(system_or_report, x0, iterates, seed=seed, **kw)
    if rep.exponents.shape[0] == 0:
        return 0.0
    return float(np.mean((rep.lambda_max > threshold) & ~rep.escaped))


def periodicity_defect(system, N: int, samples) -> float:
    """``max |map^N(x) - x|`` over the sample points."""
    x0 = np.atleast_2d(np.asarray(samples, dtype=float))
    x = x0
    for _ in range(int(N)):
        x = _apply(system, x)
    return float(np.max(np.abs(x - x0), initial=0.0))


def invariance_defect(system, region: Callable, starts, iterates: int = 10_000) -> int:
    """Number of starts whose orbit leaves ``region`` within ``iterates`` iterates.

    Orbits are stopped at their first exit. Starts outside the region count as escapes.
    """
    x = np.atleast_2d(np.asarray(starts, dtype=float)).copy()
    inside = np.asarray(region(x), dtype=bool)
    for _ in range(iterates):
        if not np.any(inside):
            break
        try:
            x[inside] = _apply(system, x[inside])
        except DomainError:
            # evaluate row by row to locate the offending orbits
            for i in np.flatnonzero(inside):
                try:
                    x[i] = _apply(system, x[i:i + 1])[0]
                except DomainError:
                    inside[i] = False
        inside &= np.asarray(region(x), dtype=bool)
    return int(np.sum(~inside))


def entropy_indicator(reports, weights=None) -> float:
    """Weighted mean of the sum of positive exponents (a Pesin-style heuristic).

    Not a rigorous entropy value; reported as a heuristic indicator only.
    """
    if isinstance(reports, LyapunovReport):
        reports = [reports]
    ex = np.concatenate([r.exponents[~r.escaped] for r in reports], axis=0) if reports else np.zeros((0, 1))
    if ex.shape[0] == 0:
        return 0.0
    pos = np.sum(np.clip(ex, 0.0, None), axis=-1)
    w = np.ones(pos.size) if weights is None else np.asarray(weights, dtype=float)
    if w.size != pos.size or np.any(w < 0) or w.sum() == 0:
        raise ParameterError("weights must be non-negative, one per converged row, not all zero")
    return float(np.sum(w * pos) / np.sum(w))
