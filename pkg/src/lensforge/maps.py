"""Level-preserving section maps with exact action primitives.

A slice map acts on reduced coordinates ``z = (qbar, pbar)`` of a level
slice, parametrised by the energy h. Every map here also returns an action
S with

    Y . dX - pbar . dqbar = dS     (on each slice, (X, Y) the image),

which lets leaf primitives be evaluated without quadrature.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import ConvergenceError, DimensionError, ParameterError
from .flow import TrajectorySpec
from .geometry import symplectic_defect, symplectic_matrix

__all__ = [
    "SliceMap",
    "IdentityMap",
    "LinearMap",
    "FiberShear",
    "ShearMap",
    "FlowMap",
    "ChainMap",
    "InverseShearMap",
    "compact_bump",
    "map_to_spec",
    "map_from_spec",
    "register_map",
]


def compact_bump(y, deriv: int = 0):
    """``exp(1 - 1/(1 - y^2))`` on (-1, 1), zero elsewhere; peak value 1 at 0."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    inside = np.abs(y) < 1.0
    yi = y[inside]
    one = 1.0 - yi * yi
    b = np.exp(1.0 - 1.0 / one)
    if deriv == 0:
        out[inside] = b
    elif deriv == 1:
        out[inside] = b * (-2.0 * yi / one**2)
    elif deriv == 2:
        d1 = -2.0 * yi / one**2
        d2 = -2.0 / one**2 - 8.0 * yi * yi / one**3
        out[inside] = b * (d1 * d1 + d2)
    else:
        raise ParameterError("deriv must be 0, 1 or 2")
    return out


class SliceMap:
    """Base class. Subclasses implement :meth:`evaluate`.

    Attributes
    ----------
    m : int
        Half-dimension of the slice (n - 1 for an n degree-of-freedom system).
    support : (lo, hi) or None
        Box in ``(qbar, pbar, h)`` outside which the map is the identity with
        zero action. None when unknown or unbounded.
    """

    m: int = 1
    support: Optional[tuple] = None

    def evaluate(self, z, h):
        """Return ``(image, action)`` for a batch ``z`` (B, 2m) at energies h (B,)."""
        raise NotImplementedError

    def _prep(self, z, h):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[-1] != 2 * self.m:
            raise DimensionError(f"slice points need {2 * self.m} coordinates, got {z.shape[-1]}")
        h = np.broadcast_to(np.asarray(h, dtype=float), z.shape[:-1]).copy()
        return z, h

    def __call__(self, z, h):
        single = np.asarray(z).ndim == 1
        out = self.evaluate(*self._prep(z, h))[0]
        return out[0] if single else out

    def action(self, z, h):
        single = np.asarray(z).ndim == 1
        out = self.evaluate(*self._prep(z, h))[1]
        return out[0] if single else out

    def jacobian(self, z, h, step: float = 1e-6) -> np.ndarray:
        """Central-difference Jacobian on the slice, shape (B, 2m, 2m)."""
        z, h = self._prep(z, h)
        d = 2 * self.m
        E = np.eye(d) * step
        zz = np.concatenate([(z[:, None, :] + E), (z[:, None, :] - E)], axis=1).reshape(-1, d)
        hh = np.repeat(h, 2 * d)
        img = self.evaluate(zz, hh)[0].reshape(z.shape[0], 2, d, d)
        return np.swapaxes((img[:, 0] - img[:, 1]) / (2 * step), -1, -2)

    def on_section(self, w):
        """Apply to section coordinates ``(qbar, pbar, h)``; h is carried through."""
        w = np.atleast_2d(np.asarray(w, dtype=float))
        img = self.evaluate(w[:, :-1], w[:, -1])[0]
        return np.concatenate([img, w[:, -1:]], axis=-1)

    def c1_size(self, points, h) -> float:
        """Largest operator norm of ``DR - I`` over the sample points."""
        J = self.jacobian(points, h)
        return float(np.max(np.linalg.norm(J - np.eye(2 * self.m), ord=2, axis=(-2, -1))))

    def symplectic_defect(self, points, h, step: float = 1e-5) -> float:
        return symplectic_defect(self.jacobian(points, h, step))


class IdentityMap(SliceMap):
    def __init__(self, m: int = 1):
        self.m = int(m)
        self.support = (np.zeros(2 * m + 1), np.zeros(2 * m + 1))

    def evaluate(self, z, h):
        return z.copy(), np.zeros(z.shape[0])


class LinearMap(SliceMap):
    """``z -> M z`` for a symplectic matrix M (independent of h).

    The action is ``S = 1/2 q.(c^T a) q + q.(c^T b) p + 1/2 p.(d^T b) p`` for
    ``M = [[a, b], [c, d]]``.
    """

    def __init__(self, M):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
            raise DimensionError("M must be square with even size")
        self.M = M
        self.m = M.shape[0] // 2
        m = self.m
        a, b, c, d = M[:m, :m], M[:m, m:], M[m:, :m], M[m:, m:]
        self._ca, self._cb, self._db = c.T @ a, c.T @ b, d.T @ b

    def evaluate(self, z, h):
        m = self.m
        q, p = z[:, :m], z[:, m:]
        S = 0.5 * np.einsum("bi,ij,bj->b", q, self._ca, q) + np.einsum("bi,ij,bj->b", q, self._cb, p) \
            + 0.5 * np.einsum("bi,ij,bj->b", p, self._db, p)
        return z @ self.M.T, S


class FiberShear(SliceMap):
    """Localised twist generated by ``S(q, P) = q.P - s chi(h) psi(q) w(P)``.

    The map is ``p = P - s chi w(P) grad psi(q)``, ``Q = q - s chi psi(q) grad w(P)``.
    ``psi`` and ``w`` are products of :func:`compact_bump` profiles; without a
    momentum window (``w = 1``) this is the pure fibre shear
    ``(q, p) -> (q, p + s grad psi(q))``.

    Parameters
    ----------
    m : int
    amplitude : float
        The shear strength s.
    center : array_like
        Centre of the configuration bump.
    radius : float
        Half-width of the configuration bump.
    momentum_radius : float, optional
        Half-width of the momentum window, centred at 0.
    energy_radius : float, optional
        Half-width of the energy window ``chi(h)``, centred at 0.
    """

    def __init__(self, m: int = 1, amplitude: float = 0.01, center=None, radius: float = 0.4,
                 momentum_radius: Optional[float] = None, energy_radius: Optional[float] = None):
        self.m = int(m)
        self.amplitude = float(amplitude)
        self.center = np.zeros(m) if center is None else np.asarray(center, dtype=float).reshape(m)
        self.radius = float(radius)
        self.momentum_radius = momentum_radius
        self.energy_radius = energy_radius
        if self.radius <= 0 or (momentum_radius is not None and momentum_radius <= 0):
            raise ParameterError("bump radii must be positive")
        if momentum_radius is not None and energy_radius is not None:
            lo = np.concatenate([self.center - radius, -np.full(m, momentum_radius), [-energy_radius]])
            hi = np.concatenate([self.center + radius, np.full(m, momentum_radius), [energy_radius]])
            self.support = (lo, hi)
        else:
            self.support = None

    def get_params(self):
        return dict(m=self.m, amplitude=self.amplitude, center=self.center.tolist(),
                    radius=self.radius, momentum_radius=self.momentum_radius,
                    energy_radius=self.energy_radius)

    def _psi(self, q):
        y = (q - self.center) / self.radius
        b = compact_bump(y)
        db = compact_bump(y, 1) / self.radius
        val = np.prod(b, axis=-1)
        grad = np.empty_like(q)
        for i in range(self.m):
            others = np.prod(np.delete(b, i, axis=-1), axis=-1)
            grad[..., i] = db[..., i] * others
        return val, grad

    def _window(self, P):
        if self.momentum_radius is None:
            return np.ones(P.shape[:-1]), np.zeros_like(P)
        y = P / self.momentum_radius
        b = compact_bump(y)
        db = compact_bump(y, 1) / self.momentum_radius
        val = np.prod(b, axis=-1)
        grad = np.empty_like(P)
        for i in range(self.m):
            grad[..., i] = db[..., i] * np.prod(np.delete(b, i, axis=-1), axis=-1)
        return val, grad

    def _chi(self, h):
        if self.energy_radius is None:
            return np.ones_like(h)
        return compact_bump(h / self.energy_radius)

    def evaluate(self, z, h):
        m = self.m
        q, p = z[:, :m], z[:, m:]
        k = self.amplitude * self._chi(h)[:, None]
        psi, dpsi = self._psi(q)
        P = p + k * dpsi  # exact when w = 1
        if self.momentum_radius is not None:
            for _ in range(500):
                w, _dw = self._window(P)
                new = p + k * w[:, None] * dpsi
                if np.max(np.abs(new - P), initial=0.0) <= 1e-15:
                    P = new
                    break
                P = new
            else:
                raise ConvergenceError("fibre shear momentum solve did not converge")
        w, dw = self._window(P)
        Q = q - k * psi[:, None] * dw
        S = k[:, 0] * psi * (w - np.sum(P * dw, axis=-1))
        return np.concatenate([Q, P], axis=-1), S

    @classmethod
    def with_c1_size(cls, target: float, m: int = 1, grid_points: int = 41, **kw) -> "FiberShear":
        """Scale the amplitude so that the measured C^1 distance to the identity is ``target``."""
        probe = cls(m=m, amplitude=1e-3, **kw)
        pts, hs = probe.probe_grid(grid_points)
        size = probe.c1_size(pts, hs)
        amp = 1e-3 * target / size
        for _ in range(3):
            trial = cls(m=m, amplitude=amp, **kw)
            size = trial.c1_size(pts, hs)
            amp *= target / size
        return cls(m=m, amplitude=amp, **kw)

    def probe_grid(self, k: int = 21):
        """Sample grid covering the bump support (used to measure C^1 size)."""
        rq = self.radius
        rp = self.momentum_radius if self.momentum_radius is not None else 1.0
        axes = [np.linspace(c - rq, c + rq, k) for c in self.center] + \
               [np.linspace(-rp, rp, max(5, k // 2))] * self.m
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * self.m)
        return mesh, np.zeros(mesh.shape[0])


class ShearMap(SliceMap):
    """Time-1 map of an integrable generator ``f(pbar, h)``: ``(q + grad f, p)``.

    Parameters
    ----------
    grad : callable
        ``grad(p, h)`` -> (B, m).
    value : callable
        ``value(p, h)`` -> (B,). Needed for the action ``p . grad f - f``.
    """

    def __init__(self, m: int, grad: Callable, value: Callable):
        self.m = int(m)
        self._grad = grad
        self._value = value
        self.support = None

    def evaluate(self, z, h):
        m = self.m
        q, p = z[:, :m], z[:, m:]
        g = self._grad(p, h)
        S = np.sum(p * g, axis=-1) - self._value(p, h)
        return np.concatenate([q + g, p], axis=-1), S


class InverseShearMap(ShearMap):
    """Inverse of :class:`ShearMap`: ``(q - grad f, p)`` with action ``-(p . grad f - f)``."""

    def evaluate(self, z, h):
        img, S = super().evaluate(z, h)
        m = self.m
        img[:, :m] = 2 * z[:, :m] - img[:, :m]
        return img, -S


class FlowMap(SliceMap):
    """Implicit-midpoint flow of a slice Hamiltonian ``K(z, h)`` over time T.

    The discrete action ``sum dt (p_mid . K_p(mid) - K(mid))`` is an exact
    primitive of the discrete map.

    Parameters
    ----------
    value, grad, hess : callable
        ``K(X, h)``, its gradient and (optionally) Hessian, batched over rows
        with one energy per row.
    """

    def __init__(self, m: int, value: Callable, grad: Callable, hess: Optional[Callable] = None,
                 T: float = 1.0, dt: float = 1e-3, newton_tol: float = 1e-13):
        self.m = int(m)
        self._value, self._grad, self._hess = value, grad, hess
        self.T = float(T)
        self.spec = TrajectorySpec(dt=min(dt, T), t_max=T, newton_tol=newton_tol)
        self.support = None

    def _vf(self, X, h):
        g = self._grad(X, h)
        m = self.m
        return np.concatenate([g[:, m:], -g[:, :m]], axis=-1)

    def _step(self, X0, dt, h, k):
        X1 = X0 + dt * self._vf(X0, h)
        tol = self.spec.newton_tol
        for _ in range(self.spec.fixed_point_iter):
            new = X0 + dt * self._vf(0.5 * (X0 + X1), h)
            diff = np.max(np.abs(new - X1), initial=0.0)
            X1 = new
            if diff <= tol:
                return X1
        if self._hess is None:
            raise ConvergenceError(f"flow map step {k} did not converge by fixed-point iteration")
        d = 2 * self.m
        omega = symplectic_matrix(self.m)
        for _ in range(self.spec.newton_max_iter):
            M = 0.5 * (X0 + X1)
            F = X1 - X0 - dt * self._vf(M, h)
            JF = np.eye(d) - 0.5 * dt * omega @ self._hess(M, h)
            delta = np.linalg.solve(JF, F[..., None])[..., 0]
            X1 = X1 - delta
            if np.max(np.abs(delta), initial=0.0) <= tol:
                return X1
        raise ConvergenceError(f"flow map step {k} did not converge")

    def evaluate(self, z, h):
        m = self.m
        nsteps, dt = self.spec.steps()
        X = z.copy()
        S = np.zeros(z.shape[0])
        for k in range(nsteps):
            X1 = self._step(X, dt, h, k)
            M = 0.5 * (X + X1)
            g = self._grad(M, h)
            S += dt * (np.sum(M[:, m:] * g[:, m:], axis=-1) - self._value(M, h))
            X = X1
        return X, S


class ChainMap(SliceMap):
    """Composition applying ``maps[0]`` first. Actions add along the orbit."""

    def __init__(self, maps: Sequence[SliceMap], support=None):
        if not maps:
            raise ParameterError("need at least one map")
        ms = {mp.m for mp in maps}
        if len(ms) != 1:
            raise DimensionError("all maps in a chain must share the slice dimension")
        self.maps = list(maps)
        self.m = maps[0].m
        self.support = support

    def evaluate(self, z, h):
        S = np.zeros(z.shape[0])
        for mp in self.maps:
            z, s = mp.evaluate(z, h)
            S = S + s
        return z, S


_REGISTRY = {}


def register_map(name: str, to_params: Callable, from_params: Callable, cls: type):
    """Make a map class serialisable by :func:`map_to_spec`."""
    _REGISTRY[name] = (cls, to_params, from_params)


def map_to_spec(mp: SliceMap) -> dict:
    """JSON-ready description of a registered map."""
    for name, (cls, to_params, _) in _REGISTRY.items():
        if type(mp) is cls:
            return {"type": name, "params": to_params(mp)}
    raise ParameterError(f"{type(mp).__name__} is not serialisable")


def map_from_spec(spec: dict) -> SliceMap:
    try:
        _, _, from_params = _REGISTRY[spec["type"]]
    except KeyError:
        raise ParameterError(f"unknown map type {spec.get('type')!r}") from None
    return from_params(spec["params"])


def _support_list(sup):
    return None if sup is None else [np.asarray(b).tolist() for b in sup]


register_map("identity", lambda mp: {"m": mp.m}, lambda p: IdentityMap(p["m"]), IdentityMap)
register_map("linear", lambda mp: {"M": mp.M.tolist()}, lambda p: LinearMap(p["M"]), LinearMap)
register_map("fiber_shear", lambda mp: mp.get_params(), lambda p: FiberShear(**p), FiberShear)
register_map(
    "chain",
    lambda mp: {"maps": [map_to_spec(x) for x in mp.maps], "support": _support_list(mp.support)},
    lambda p: ChainMap([map_from_spec(x) for x in p["maps"]],
                       None if p["support"] is None else tuple(np.asarray(b) for b in p["support"])),
    ChainMap,
)
