"""Hamiltonian vector fields and implicit-midpoint flows.

All routines are batched: a state array of shape ``(2n,)`` or ``(B, 2n)``
is accepted and the leading axis is carried through.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import DimensionError, DomainError, IntegrationError, ParameterError
from .geometry import symplectic_matrix

__all__ = [
    "HamiltonianField",
    "TrajectorySpec",
    "vector_field",
    "midpoint_step",
    "integrate_flow",
    "tangent_flow",
    "time1_map",
    "TimeOneMap",
]


class HamiltonianField:
    """Evaluator for a Hamiltonian H on R^{2n} with gradient access.

    Parameters
    ----------
    n : int
        Degrees of freedom.
    func : callable
        ``func(X)`` with X of shape (..., 2n) returns H of shape (...).
    grad, hess : callable, optional
        Analytic gradient (..., 2n) and Hessian (..., 2n, 2n). Central
        differences with ``fd_step`` replace missing ones.
    domain : (lo, hi), optional
        Box that trajectories must not leave.
    """

    def __init__(self, n: int, func: Callable, grad: Optional[Callable] = None,
                 hess: Optional[Callable] = None, fd_step: float = 1e-6, domain=None):
        if n < 1:
            raise DimensionError("n must be positive")
        if not fd_step > 0:
            raise ParameterError("fd_step must be positive")
        self.n = int(n)
        self._func = func
        self._grad = grad
        self._hess = hess
        self.fd_step = float(fd_step)
        if domain is not None:
            lo, hi = (np.broadcast_to(np.asarray(b, float), (2 * n,)).copy() for b in domain)
            domain = (lo, hi)
        self.domain = domain
        self._omega = symplectic_matrix(self.n)

    @property
    def dim(self) -> int:
        return 2 * self.n

    def __call__(self, X):
        return self.value(X)

    def value(self, X):
        return np.asarray(self._func(np.asarray(X, dtype=float)), dtype=float)

    def gradient(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(X), dtype=float)
        h = self.fd_step
        E = np.eye(self.dim) * h
        plus = self.value(X[..., None, :] + E)
        minus = self.value(X[..., None, :] - E)
        return (plus - minus) / (2 * h)

    def hessian(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._hess is not None:
            Hm = np.asarray(self._hess(X), dtype=float)
        else:
            h = self.fd_step if self._grad is not None else max(self.fd_step, 1e-4)
            E = np.eye(self.dim) * h
            plus = self.gradient(X[..., None, :] + E)
            minus = self.gradient(X[..., None, :] - E)
            Hm = (plus - minus) / (2 * h)
        return 0.5 * (Hm + np.swapaxes(Hm, -1, -2))

    def vector_field(self, X) -> np.ndarray:
        g = self.gradient(X)
        n = self.n
        return np.concatenate([g[..., n:], -g[..., :n]], axis=-1)

    def field_jacobian(self, X) -> np.ndarray:
        """Jacobian of the vector field, ``Omega @ Hess H``."""
        return self._omega @ self.hessian(X)

    def outside_domain(self, X) -> np.ndarray:
        X = np.asarray(X)
        if self.domain is None:
            return np.zeros(X.shape[:-1], dtype=bool)
        lo, hi = self.domain
        return np.any((X < lo) | (X > hi), axis=-1)


def vector_field(H: HamiltonianField, x) -> np.ndarray:
    """Hamiltonian vector field ``(dH/dp, -dH/dq)`` at x."""
    return H.vector_field(_check_state(H, x))


@dataclass(frozen=True)
class TrajectorySpec:
    """Integration settings.

    ``t_max`` is the horizon; the step actually used is ``t_max / ceil(t_max/dt)``
    so that the horizon is hit exactly.
    """

    dt: float = 1e-3
    t_max: float = 1.0
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    fixed_point_iter: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ParameterError("dt must be positive")
        if not self.t_max >= 0:
            raise ParameterError("t_max must be nonnegative")
        if self.t_max > 0 and self.dt > self.t_max * (1 + 1e-12):
            raise ParameterError("dt must not exceed t_max")
        if not self.newton_tol > 0 or self.newton_max_iter < 1:
            raise ParameterError("solver tolerances must be positive")

    def with_horizon(self, t_max: float) -> "TrajectorySpec":
        return replace(self, t_max=float(t_max), dt=min(self.dt, float(t_max)) if t_max > 0 else self.dt)

    def steps(self):
        if self.t_max == 0:
            return 0, 0.0
        k = max(1, math.ceil(self.t_max / self.dt - 1e-9))
        return k, self.t_max / k


def _check_state(H: HamiltonianField, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != H.dim:
        raise DimensionError(f"state has dimension {x.shape[-1]}, field expects {H.dim}")
    return x


def midpoint_step(H: HamiltonianField, X0: np.ndarray, h: float, spec: TrajectorySpec,
                  step_index: int = 0) -> np.ndarray:
    """One implicit-midpoint step ``X1 = X0 + h X_H((X0+X1)/2)`` for a batch.

    Fixed-point iteration first; rows that have not converged after
    ``spec.fixed_point_iter`` sweeps switch to Newton.
    """
    X0 = np.atleast_2d(X0)
    X1 = X0 + h * H.vector_field(X0)
    tol = spec.newton_tol
    active = np.arange(X0.shape[0])
    for _ in range(spec.fixed_point_iter):
        Xa0 = X0[active]
        new = Xa0 + h * H.vector_field(0.5 * (Xa0 + X1[active]))
        diff = np.max(np.abs(new - X1[active]), axis=-1)
        X1[active] = new
        scale = np.maximum(1.0, np.max(np.abs(new), axis=-1))
        active = active[diff > tol * scale]
        if active.size == 0:
            return X1
    eye = np.eye(H.dim)
    for _ in range(spec.newton_max_iter):
        Xa0, Xa1 = X0[active], X1[active]
        M = 0.5 * (Xa0 + Xa1)
        F = Xa1 - Xa0 - h * H.vector_field(M)
        JF = eye - 0.5 * h * H.field_jacobian(M)
        delta = np.linalg.solve(JF, F[..., None])[..., 0]
        X1[active] = Xa1 - delta
        scale = np.maximum(1.0, np.max(np.abs(X1[active]), axis=-1))
        active = active[np.max(np.abs(delta), axis=-1) > tol * scale]
        if active.size == 0:
            return X1
    raise IntegrationError(f"implicit midpoint solve did not converge at step {step_index}",
                           step=step_index)


def integrate_flow(H: HamiltonianField, x0, spec: TrajectorySpec, return_trajectory: bool = False,
                   backward: bool = False):
    """Integrate the flow of H from x0 over ``spec.t_max``.

    Parameters
    ----------
    backward : bool
        Integrate for time ``-t_max`` instead.

    Returns
    -------
    x_T : ndarray
        Final state(s), same shape as x0.
    trajectory : ndarray, optional
        Shape ``(steps + 1,) + x0.shape`` if ``return_trajectory``.
    """
    x0 = _check_state(H, x0)
    single = x0.ndim == 1
    X = np.atleast_2d(x0).copy()
    nsteps, h = spec.steps()
    if backward:
        h = -h
    traj = [X.copy()] if return_trajectory else None
    for k in range(nsteps):
        X = midpoint_step(H, X, h, spec, k)
        if np.any(H.outside_domain(X)):
            raise DomainError(f"trajectory left the domain box at step {k}")
        if return_trajectory:
            traj.append(X.copy())
    out = X[0] if single else X
    if not return_trajectory:
        return out
    T = np.stack(traj)
    return out, (T[:, 0] if single else T)


def tangent_flow(H: HamiltonianField, x0, v0, spec: TrajectorySpec, backward: bool = False):
    """Integrate the base orbit together with tangent vectors.

    The tangent update is the exact linearisation of the midpoint step,
    ``(I - h/2 A) v1 = (I + h/2 A) v0`` with ``A`` the field Jacobian at the
    midpoint. ``v0`` may be a vector ``(..., 2n)`` or a frame ``(..., 2n, k)``.

    Returns
    -------
    (x_T, v_T)
    """
    x0 = _check_state(H, x0)
    v0 = np.asarray(v0, dtype=float)
    single = x0.ndim == 1
    vec = v0.ndim == x0.ndim
    X = np.atleast_2d(x0).copy()
    V = v0[..., None] if vec else v0
    V = V.reshape((X.shape[0], H.dim, -1)).copy()
    nsteps, h = spec.steps()
    if backward:
        h = -h
    eye = np.eye(H.dim)
    for k in range(nsteps):
        X1 = midpoint_step(H, X, h, spec, k)
        if np.any(H.outside_domain(X1)):
            raise DomainError(f"trajectory left the domain box at step {k}")
        A = H.field_jacobian(0.5 * (X + X1))
        V = np.linalg.solve(eye - 0.5 * h * A, (eye + 0.5 * h * A) @ V)
        X = X1
    if vec:
        V = V[..., 0]
    if single:
        return X[0], V[0]
    return X, V


class TimeOneMap:
    """Flow map of H over ``spec.t_max`` (1 by default) as a callable."""

    def __init__(self, H: HamiltonianField, spec: TrajectorySpec):
        self.H = H
        self.spec = spec

    def __call__(self, x):
        return integrate_flow(self.H, x, self.spec)

    def jacobian(self, x) -> np.ndarray:
        x = _check_state(self.H, x)
        frame = np.broadcast_to(np.eye(self.H.dim), x.shape[:-1] + (self.H.dim, self.H.dim))
        return tangent_flow(self.H, x, frame, self.spec)[1]


def time1_map(H: HamiltonianField, spec: Optional[TrajectorySpec] = None) -> TimeOneMap:
    """Package the time-1 flow map of H."""
    spec = TrajectorySpec() if spec is None else spec
    return TimeOneMap(H, replace(spec, t_max=1.0, dt=min(spec.dt, 1.0)))
