"""Coordinate-hyperplane sections, Poincare maps and level slices.

Section coordinates on ``{q_n = c}`` are ``z = (q_1..q_{n-1}, p_1..p_n)``.
On a level slice with ``p_n = h`` the reduced coordinates are
``zbar = (q_1..q_{n-1}, p_1..p_{n-1})``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import DimensionError, ParameterError, TransversalityError
from .flow import HamiltonianField, TrajectorySpec, midpoint_step
from .geometry import symplectic_defect

__all__ = [
    "HyperplaneSection",
    "LevelSlice",
    "PoincareResult",
    "poincare_map",
    "detect_crossing",
    "CrossingResult",
    "level_restrict",
    "LevelRestriction",
    "VolumeEstimate",
    "induced_volume_estimate",
    "slicing_volume_estimate",
    "action_angle_return_map",
    "fd_jacobian",
]

TRANSVERSALITY_FLOOR = 1e-4


@dataclass(frozen=True)
class HyperplaneSection:
    """The section ``{q_n = axis_value}`` in R^{2n}."""

    n: int
    axis_value: float
    domain_box: Optional[tuple] = None
    crossing_tol: float = 1e-10
    transversality_floor: float = TRANSVERSALITY_FLOOR

    def __post_init__(self):
        if self.n < 1:
            raise DimensionError("n must be positive")
        if not (self.crossing_tol > 0 and self.transversality_floor > 0):
            raise ParameterError("tolerances must be positive")

    def embed(self, z) -> np.ndarray:
        """Section coordinates -> phase points."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != 2 * self.n - 1:
            raise DimensionError(f"section coordinates need {2 * self.n - 1} entries")
        m = self.n - 1
        c = np.full(z.shape[:-1] + (1,), float(self.axis_value))
        return np.concatenate([z[..., :m], c, z[..., m:]], axis=-1)

    def project(self, x) -> np.ndarray:
        """Phase points -> section coordinates (drops q_n)."""
        x = np.asarray(x, dtype=float)
        m = self.n - 1
        return np.concatenate([x[..., :m], x[..., m + 1:]], axis=-1)


@dataclass(frozen=True)
class LevelSlice:
    section: HyperplaneSection
    h: float


@dataclass
class PoincareResult:
    """Batch of first-return results; rows with ``defined == False`` carry NaN."""

    points: np.ndarray
    times: np.ndarray
    defined: np.ndarray


def _qn_index(n):
    return n - 1


def poincare_map(H: HamiltonianField, sec0: HyperplaneSection, sec1: HyperplaneSection, x,
                 spec: TrajectorySpec) -> PoincareResult:
    """Transport points of ``sec0`` to their first crossing with ``sec1``.

    The horizon is ``spec.t_max``. Points without a crossing before the
    horizon are reported as undefined rather than raising.

    Raises
    ------
    TransversalityError
        If the flow meets ``sec1`` with ``|dH/dp_n|`` below the floor.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x).copy()
    n = H.n
    k_qn = _qn_index(n)
    c = float(sec1.axis_value)
    B = X.shape[0]
    out = np.full_like(X, np.nan)
    times = np.full(B, np.nan)
    active = np.arange(B)
    nsteps, h = spec.steps()
    for k in range(nsteps):
        Xa = X[active]
        X1 = midpoint_step(H, Xa, h, spec, k)
        g0 = Xa[:, k_qn] - c
        g1 = X1[:, k_qn] - c
        hit = (g1 == 0) | (np.sign(g0) * np.sign(g1) < 0)
        if np.any(hit):
            pts, tau = _refine_partial_step(H, Xa[hit], h, c, sec1, spec, k)
            out[active[hit]] = pts
            times[active[hit]] = k * h + tau
        X[active] = X1
        active = active[~hit]
        if active.size == 0:
            break
    defined = ~np.isnan(times)
    if single:
        return PoincareResult(out[0], times[0], defined[0])
    return PoincareResult(out, times, defined)


def _refine_partial_step(H, X0, h, c, sec, spec, k):
    """Find tau in (0, h] with q_n(step(X0, tau)) = c by safeguarded Newton."""
    k_qn = _qn_index(H.n)
    lo = np.zeros(X0.shape[0])
    hi = np.full(X0.shape[0], h)
    s0 = np.sign(X0[:, k_qn] - c)
    # initial guess from linear interpolation of the full step
    v0 = H.vector_field(X0)[:, k_qn]
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = np.where(v0 != 0, (c - X0[:, k_qn]) / v0, 0.5 * h)
    tau = np.clip(tau, 0.0, h)
    for _ in range(60):
        Xt = _partial(H, X0, tau, spec)
        g = Xt[:, k_qn] - c
        vel = H.vector_field(Xt)[:, k_qn]
        if np.all(np.abs(g) <= sec.crossing_tol):
            if np.any(np.abs(vel) < sec.transversality_floor):
                raise TransversalityError("tangential crossing of the target section")
            return Xt, tau
        same = np.sign(g) == s0
        lo = np.where(same, tau, lo)
        hi = np.where(same, hi, tau)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = tau - g / vel
        ok = np.isfinite(newton) & (newton > lo) & (newton < hi)
        tau = np.where(np.abs(g) <= sec.crossing_tol, tau, np.where(ok, newton, 0.5 * (lo + hi)))
    raise TransversalityError("crossing refinement failed; flow nearly tangent to the section")


def _partial(H, X0, tau, spec):
    # midpoint step with a per-row step size
    tau = tau[:, None]
    X1 = X0 + tau * H.vector_field(X0)
    for _ in range(spec.fixed_point_iter + spec.newton_max_iter):
        new = X0 + tau * H.vector_field(0.5 * (X0 + X1))
        done = np.max(np.abs(new - X1)) <= spec.newton_tol
        X1 = new
        if done:
            return X1
    return X1


@dataclass
class CrossingResult:
    time: float
    index: int


def detect_crossing(times, values, c: float, velocities=None, crossing_tol: float = 1e-10,
                    floor: float = TRANSVERSALITY_FLOOR) -> Optional[CrossingResult]:
    """Locate the first crossing of ``values(t) = c`` in sampled data.

    With ``velocities`` the samples are joined by cubic Hermite pieces and
    the root is polished by Newton with a bisection fallback; otherwise
    linear interpolation is used.

    Returns
    -------
    CrossingResult or None
        None signals that the samples never cross c.
    """
    t = np.asarray(times, dtype=float)
    g = np.asarray(values, dtype=float) - c
    if t.shape != g.shape or t.ndim != 1:
        raise DimensionError("times and values must be 1-D arrays of equal length")
    idx = np.nonzero((g[1:] == 0) | (np.sign(g[:-1]) * np.sign(g[1:]) < 0))[0]
    if g[0] == 0:
        return CrossingResult(float(t[0]), 0)
    if idx.size == 0:
        return None
    k = int(idx[0])
    t0, t1 = t[k], t[k + 1]
    dt = t1 - t0
    if velocities is None:
        root = t0 - g[k] * dt / (g[k + 1] - g[k])
        return CrossingResult(float(root), k)
    v = np.asarray(velocities, dtype=float)
    g0, g1, d0, d1 = g[k], g[k + 1], v[k] * dt, v[k + 1] * dt

    def herm(s):
        s2, s3 = s * s, s * s * s
        val = (2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + s) * d0 + (-2 * s3 + 3 * s2) * g1 \
            + (s3 - s2) * d1
        der = (6 * s2 - 6 * s) * g0 + (3 * s2 - 4 * s + 1) * d0 + (-6 * s2 + 6 * s) * g1 \
            + (3 * s2 - 2 * s) * d1
        return val, der / dt

    lo, hi = 0.0, 1.0
    s = -g0 / (g1 - g0) if g1 != g0 else 0.5
    for _ in range(100):
        val, der = herm(s)
        if abs(val) <= crossing_tol:
            break
        if np.sign(val) == np.sign(g0):
            lo = s
        else:
            hi = s
        cand = s - val / (der * dt) if der != 0 else np.nan
        s = cand if np.isfinite(cand) and lo < cand < hi else 0.5 * (lo + hi)
    val, der = herm(s)
    if abs(der) < floor:
        raise TransversalityError("tangential crossing in sampled trajectory")
    return CrossingResult(float(t0 + s * dt), k)


def fd_jacobian(f: Callable, z, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of a batched map, shape (..., out, in)."""
    z = np.asarray(z, dtype=float)
    d = z.shape[-1]
    E = np.eye(d) * step
    plus = f((z[..., None, :] + E).reshape(-1, d))
    minus = f((z[..., None, :] - E).reshape(-1, d))
    diff = (np.asarray(plus) - np.asarray(minus)) / (2 * step)
    diff = diff.reshape(z.shape[:-1] + (d, -1))
    return np.swapaxes(diff, -1, -2)


class LevelRestriction:
    """A section map restricted to the level slice ``H = h``.

    Attributes
    ----------
    defect : float
        ``max |E(R(z)) - h|`` over the sample grid; a diagnostic, never raised.
    """

    def __init__(self, R, h, samples, energy=None, chart=None, proj=None):
        self.R = R
        self.h = float(h)
        self.energy = energy if energy is not None else (lambda z: z[..., -1])
        self.chart = chart if chart is not None else (
            lambda zb, hh: np.concatenate([zb, np.full(zb.shape[:-1] + (1,), hh)], axis=-1))
        self.proj = proj if proj is not None else (lambda z: z[..., :-1])
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        images = R(self.chart(samples, self.h))
        self.defect = float(np.max(np.abs(self.energy(images) - self.h)))

    def __call__(self, zbar):
        zbar = np.asarray(zbar, dtype=float)
        return self.proj(self.R(self.chart(zbar, self.h)))

    def jacobian(self, zbar, step: float = 1e-6):
        return fd_jacobian(self, zbar, step)

    def symplectic_defect(self, points, step: float = 1e-6) -> float:
        J = self.jacobian(np.atleast_2d(points), step)
        return symplectic_defect(J)


def level_restrict(R, h: float, samples, energy=None, chart=None, proj=None) -> LevelRestriction:
    """Restrict a section map to one level and report its level defect."""
    return LevelRestriction(R, h, samples, energy, chart, proj)


@dataclass
class VolumeEstimate:
    value: float
    stderr: float

    def agrees(self, other: "VolumeEstimate", k: float = 3.0) -> bool:
        return abs(self.value - other.value) <= k * np.hypot(self.stderr, other.stderr) + 1e-15


def _box(box, d):
    lo, hi = (np.broadcast_to(np.asarray(b, dtype=float), (d,)) for b in box)
    return lo, hi


def induced_volume_estimate(H: HamiltonianField, section: HyperplaneSection, box, samples: int,
                            seed: int, region: Optional[Callable] = None) -> VolumeEstimate:
    """Monte-Carlo estimate of the flux measure ``int_A |dH/dp_n|`` of a region of a section.

    Parameters
    ----------
    box : (lo, hi)
        Bounding box in section coordinates.
    region : callable, optional
        Indicator on section coordinates; the region is ``box`` when absent.
    """
    if samples < 1:
        raise ParameterError("samples must be at least 1")
    d = 2 * H.n - 1
    lo, hi = _box(box, d)
    if np.any(hi <= lo):
        return VolumeEstimate(0.0, 0.0)
    rng = np.random.default_rng(seed)
    z = lo + (hi - lo) * rng.random((samples, d))
    vol = float(np.prod(hi - lo))
    w = np.abs(H.gradient(section.embed(z))[:, -1]) * vol
    if region is not None:
        w = w * np.asarray(region(z), dtype=float)
    stderr = float(np.std(w, ddof=1) / np.sqrt(samples)) if samples > 1 else float("inf")
    return VolumeEstimate(float(np.mean(w)), stderr)


def _solve_pn(H, section, zbar, h, pn0, tol=1e-13, max_iter=50):
    pn = pn0.copy()
    for _ in range(max_iter):
        x = section.embed(np.concatenate([zbar, pn[:, None]], axis=-1))
        r = H.value(x) - h
        d = H.gradient(x)[:, -1]
        step = r / d
        pn = pn - step
        if np.max(np.abs(step)) <= tol:
            break
    return pn


def slicing_volume_estimate(H: HamiltonianField, section: HyperplaneSection, box, samples: int,
                            seed: int) -> VolumeEstimate:
    """Independent estimate of the same measure via level slices.

    Samples ``(zbar, h)`` uniformly, solves ``H = h`` for ``p_n`` and counts
    hits in the box. Uses no gradient weights, so it cross-checks
    :func:`induced_volume_estimate` through the slicing identity.
    """
    d = 2 * H.n - 1
    lo, hi = _box(box, d)
    if np.any(hi <= lo):
        return VolumeEstimate(0.0, 0.0)
    rng = np.random.default_rng(seed)
    zb = lo[:-1] + (hi[:-1] - lo[:-1]) * rng.random((samples, d - 1))
    e_lo = H.value(section.embed(np.concatenate([zb, np.full((samples, 1), lo[-1])], axis=-1)))
    e_hi = H.value(section.embed(np.concatenate([zb, np.full((samples, 1), hi[-1])], axis=-1)))
    h_min = float(min(e_lo.min(), e_hi.min()))
    h_max = float(max(e_lo.max(), e_hi.max()))
    h = h_min + (h_max - h_min) * rng.random(samples)
    pn = _solve_pn(H, section, zb, h, np.full(samples, 0.5 * (lo[-1] + hi[-1])))
    hit = ((pn >= lo[-1]) & (pn <= hi[-1])).astype(float)
    vol = float(np.prod(hi[:-1] - lo[:-1])) * (h_max - h_min)
    w = hit * vol
    return VolumeEstimate(float(np.mean(w)), float(np.std(w, ddof=1) / np.sqrt(samples)))


def action_angle_return_map(frequencies: Callable, x, wrap: str = "unit") -> np.ndarray:
    """Closed-form return map of an integrable system on ``{q_n = 0}``.

    Parameters
    ----------
    frequencies : callable
        ``p -> grad H(p)``, shape (..., n).
    x : array_like
        Section coordinates ``(qbar, p)``.
    wrap : {"unit", "centered"}
        Angles are reduced to [0, 1) or to [-1/2, 1/2).
    """
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    n = (d + 1) // 2
    m = n - 1
    p = x[..., m:]
    A = np.asarray(frequencies(p), dtype=float)
    if np.any(A[..., -1] <= 0):
        raise TransversalityError("A_n must be positive for the return map to exist")
    q = x[..., :m] + A[..., :m] / A[..., -1:]
    if wrap == "unit":
        q = np.mod(q, 1.0)
    elif wrap == "centered":
        q = np.mod(q + 0.5, 1.0) - 0.5
    else:
        raise ParameterError("wrap must be 'unit' or 'centered'")
    return np.concatenate([q, p], axis=-1)
