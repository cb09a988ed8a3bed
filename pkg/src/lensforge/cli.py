"""Command-line front end: ``lensforge <realize|inject|lyapunov|scan|family>``.

Exit status: 0 when every check is within its configured tolerance, 1 when a
check fails or the run aborts, 2 for configuration errors. Errors are printed
as a JSON object on stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Callable, Dict

import numpy as np

from .config import ExperimentConfig, load_config
from .diagnostics import (
    CatMap,
    chaotic_fraction,
    entropy_indicator,
    invariance_defect,
    lyapunov_spectrum,
    periodicity_defect,
)
from .exceptions import ConfigError, LensforgeError, ParameterError, TorusValidationError
from .family import family_from_realization
from .flow import TrajectorySpec
from .injector import InjectedSectionMap, ShearDynamics, compose_injected_map
from .maps import FiberShear, map_from_spec
from .realizer import LensRealizer, verify_realization
from .report import emit_report

__all__ = ["main", "run", "PIPELINES"]

CAT_EXPONENT = float(np.log((3 + np.sqrt(5)) / 2))


class _Result:
    def __init__(self, summary, columns=(), rows=(), checks=None):
        self.summary = summary
        self.columns = list(columns)
        self.rows = list(rows)
        self.checks = checks or {}

    @property
    def failed(self):
        return sorted(k for k, ok in self.checks.items() if not ok)


def _section_map(cfg: ExperimentConfig, **override) -> InjectedSectionMap:
    return InjectedSectionMap(cfg.hamiltonian(), cfg.params(**override))


# --- pipelines --------------------------------------------------------------------

def run_realize(cfg: ExperimentConfig) -> _Result:
    rc = cfg.realize
    spec = rc["map"]
    if spec.get("type") == "fiber_shear" and rc.get("c1_size") is not None:
        params = {k: v for k, v in spec["params"].items() if k != "amplitude"}
        mp = FiberShear.with_c1_size(rc["c1_size"], **params)
    else:
        mp = map_from_spec(spec)
    realizer = LensRealizer(epsilon=rc["epsilon"]).fit(mp)
    nq, npp, nh = rc["grid"]
    w = rc["grid_half_width"]
    axes = [np.linspace(-w, w, nq)] * mp.m + [np.linspace(-w, w, npp)] * mp.m + [np.linspace(-w, w, nh)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 2 * mp.m + 1)
    nm = cfg.numerics
    rep = verify_realization(realizer.hamiltonian(), mp, grid,
                             TrajectorySpec(dt=nm["dt"], t_max=nm["t_max"], newton_tol=nm["newton_tol"]))
    summary = {"max_defect": rep.max_defect, "undefined": rep.undefined, "level_defect": rep.level_defect,
               "c1_bound": realizer.c1_bound_, "grid_points": grid.shape[0],
               "map": {"type": spec.get("type"), "amplitude": getattr(mp, "amplitude", None)}}
    cols = [f"x{i}" for i in range(grid.shape[1])] + ["defect"]
    rows = [list(g) + [d] for g, d in zip(grid, rep.defects)]
    checks = {"defect": rep.max_defect <= rc["tol"], "all_defined": rep.undefined == 0}
    return _Result(summary, cols, rows, checks)


def _chart_samples(R, k, seed, shrink):
    w = R.sample_invariant_region(k, seed=seed, shrink=shrink)
    return R.chart.inverse(w, np.zeros(k))


def run_inject(cfg: ExperimentConfig) -> _Result:
    ic = cfg.inject
    R = _section_map(cfg)
    p = R.params
    seed = cfg.diagnostics["seed"]
    rng = np.random.default_rng(seed)
    k = ic["samples"]
    checks, summary = {}, {"epsilon": p.epsilon, "rho0": p.rho0 if p.epsilon > 0 else 0.0}
    if p.epsilon == 0 and p.amplitude == 0:
        z = np.concatenate([rng.uniform(-1, 1, (k, R.m)), rng.uniform(-0.2, 0.2, (k, R.m))], -1)
        h = rng.uniform(-p.h0, p.h0, k)
        img = R.evaluate(z, h)[0]
        diff = float(np.max(np.abs(img - R.shear(z, h)[0])))
        summary["max_difference_from_unperturbed"] = diff
        checks["identical_to_unperturbed"] = diff == 0.0
    else:
        if p.epsilon == 0:
            raise ConfigError("a kick needs the rotation (N >= 2)")
        z = _chart_samples(R, k, seed, 1.5)
        h = rng.uniform(-p.h0 / 3, p.h0 / 3, k)
        img = R.evaluate(z, h)[0]
        lvl = R.level_defect(z, h)
        sym = R.symplectic_defect(z, h, step=cfg.numerics["fd_step"])
        inner = R.sample_invariant_region(k, seed=seed)
        per = periodicity_defect(lambda x: R.flow.evaluate(x, R.epsilon0), p.N, inner)
        G = compose_injected_map(R.flow, R.kick)
        ret = 0.0
        for c, r in R.kick.discs:
            u = rng.normal(size=(k, 2 * R.m))
            u *= (0.999 * rng.uniform(size=k) ** (1 / (2 * R.m)) / np.linalg.norm(u, axis=-1))[:, None]
            b = R.kick.from_normal(R.kick._centre(c) + r * u)
            x = b
            for _ in range(p.N):
                x = G(x, R.epsilon0)[0]
            ret = max(ret, float(np.max(np.abs(x - R.kick(b)))))
        starts = R.sample_invariant_region(ic["invariance_starts"], seed=seed + 1)
        esc = invariance_defect(R.chart_dynamics(0.0), R.invariant_region, starts, ic["invariance_iterates"])
        summary |= {"level_defect": lvl, "symplectic_defect": sym, "periodicity_defect": per,
                    "disc_return_defect": ret, "escapes": esc, "invariance_starts": ic["invariance_starts"],
                    "invariance_iterates": ic["invariance_iterates"]}
        checks |= {"level": lvl <= ic["level_tol"], "symplectic": sym <= ic["symplectic_tol"],
                   "periodicity": per <= ic["periodicity_tol"], "disc_return": ret <= ic["return_tol"],
                   "invariance": esc == 0}
    m = R.m
    cols = [f"q{i}" for i in range(m)] + [f"p{i}" for i in range(m)] + ["h"] + \
        [f"q{i}_image" for i in range(m)] + [f"p{i}_image" for i in range(m)]
    rows = [list(a) + [b] + list(c) for a, b, c in zip(z, h, img)]
    return _Result(summary, cols, rows, checks)


def _lyapunov_summary(rep, threshold):
    ok = ~rep.escaped
    return {
        "lambda_max_median": float(np.median(rep.lambda_max[ok])) if np.any(ok) else None,
        "lambda_max_max": float(np.max(rep.lambda_max[ok])) if np.any(ok) else None,
        "chaotic_fraction": chaotic_fraction(rep, threshold=threshold),
        "threshold": threshold,
        "escaped": int(np.sum(rep.escaped)),
        "pairing_defect": rep.pairing_defect(),
        "sum_defect": rep.sum_defect(),
        "entropy_indicator": entropy_indicator(rep) if np.any(ok) else 0.0,
        "entropy_indicator_note": "heuristic (mean sum of positive exponents), not a rigorous entropy",
        "exponent_units": rep.notes,
        "transient_discard": rep.transient_discard,
        "iterates": rep.iterates,
        "renorm_period": rep.renorm_period,
    }


def run_lyapunov(cfg: ExperimentConfig) -> _Result:
    dc = cfg.diagnostics
    seed, k = dc["seed"], dc["samples"]
    kw = dict(iterates=dc["iterates"], renorm_period=dc["renorm_period"], transient=dc["transient"], seed=seed)
    if dc["system"] == "cat":
        x0 = np.random.default_rng(seed).uniform(0, 1, (k, 2))
        rep = lyapunov_spectrum(CatMap(), x0, **kw)
        summary = _lyapunov_summary(rep, dc["threshold"])
        err = float(np.max(np.abs(rep.lambda_max - CAT_EXPONENT))) / CAT_EXPONENT
        summary["relative_error"] = err
        checks = {"calibration": err <= 0.01}
    else:
        R = _section_map(cfg)
        w0 = R.sample_invariant_region(k, seed=seed)
        if dc["system"] == "injected":
            rep = lyapunov_spectrum(R.chart_dynamics(0.0), w0, region=R.invariant_region, **kw)
            x0 = w0
            summary = _lyapunov_summary(rep, dc["threshold"])
            checks = {"chaotic_fraction": summary["chaotic_fraction"] >= dc["min_fraction"],
                      "invariance": summary["escaped"] == 0}
        else:
            x0 = R.chart.inverse(w0, np.zeros(k))
            rep = lyapunov_spectrum(ShearDynamics(R.H, 0.0), x0, **kw)
            summary = _lyapunov_summary(rep, dc["threshold"])
            checks = {"shear_exponents_small": float(np.max(rep.lambda_max)) <= 1e-3}
    d = x0.shape[1]
    cols = [f"x{i}" for i in range(d)] + [f"lambda{i + 1}" for i in range(d)] + ["escaped"]
    rows = [list(a) + list(e) + [int(s)] for a, e, s in zip(x0, rep.exponents, rep.escaped)]
    return _Result(summary, cols, rows, checks)


def run_scan(cfg: ExperimentConfig) -> _Result:
    sc, dc = cfg.scan, cfg.diagnostics
    rows, checks = [], {}
    for a in sc["amplitude"]:
        for N in sc["N"]:
            for h in sc["h"]:
                key = f"a={a:g},N={N},h={h:g}"
                try:
                    R = _section_map(cfg, amplitude=float(a), N=int(N))
                    w0 = R.sample_invariant_region(sc["samples"], seed=dc["seed"])
                    rep = lyapunov_spectrum(R.chart_dynamics(float(h)), w0, iterates=sc["iterates"],
                                            renorm_period=dc["renorm_period"], transient=sc["transient"],
                                            seed=dc["seed"], region=R.invariant_region)
                    frac = chaotic_fraction(rep, threshold=dc["threshold"])
                    esc = int(np.sum(rep.escaped))
                    rows.append([a, N, h, frac, float(np.median(rep.lambda_max)), esc, ""])
                    checks[key] = esc == 0
                except LensforgeError as exc:
                    rows.append([a, N, h, "", "", "", f"{type(exc).__name__}: {exc}"])
                    checks[key] = False
    cols = ["amplitude", "N", "h", "chaotic_fraction", "lambda_max_median", "escaped", "error"]
    return _Result({"combinations": len(rows)}, cols, rows, checks)


def run_family(cfg: ExperimentConfig) -> _Result:
    fc = cfg.family
    phi0 = FiberShear.with_c1_size(fc["shear_size"], m=1, radius=0.4, momentum_radius=0.4, energy_radius=0.4)
    fam = family_from_realization(phi0, dt=fc["dt"])
    x = np.random.default_rng(cfg.diagnostics["seed"]).uniform(-0.35, 0.35, (fc["samples"], 2))
    start = fam(0.0, x)
    ref = phi0(x, np.zeros(x.shape[0]))
    end = float(np.max(np.abs(start - ref)))
    low = float(np.max(np.abs(fam(0.2, x) - start)))
    high = float(np.max(np.abs(fam(0.8, x) - x)))
    summary = {"endpoint_defect": end, "plateau_low_defect": low, "plateau_high_defect": high,
               "amplitude": phi0.amplitude, "c1_size": fc["shear_size"]}
    checks = {"endpoint": end <= fc["endpoint_tol"], "plateau_low": low <= fc["plateau_tol"],
              "plateau_high": high <= fc["plateau_tol"]}
    rows = [list(a) + list(b) + list(c) for a, b, c in zip(x, start, ref)]
    return _Result(summary, ["q", "p", "q_family", "p_family", "q_direct", "p_direct"], rows, checks)


PIPELINES: Dict[str, Callable[[ExperimentConfig], _Result]] = {
    "realize": run_realize,
    "inject": run_inject,
    "lyapunov": run_lyapunov,
    "scan": run_scan,
    "family": run_family,
}


def run(subcommand: str, cfg: ExperimentConfig, out_dir=".") -> tuple:
    """Run one subcommand and write its reports.

    Returns
    -------
    (exit_code, body)
        ``body`` is the JSON object printed by :func:`main`.
    """
    res = PIPELINES[subcommand](cfg)
    res.summary["checks"] = res.checks
    res.summary["failed_checks"] = res.failed
    jp, cp = emit_report(subcommand, res.summary, cfg, out_dir, res.columns, res.rows,
                         cfg.outputs.get("json_path"), cfg.outputs.get("csv_path"))
    code = 1 if res.failed else 0
    body = {"status": "ok" if code == 0 else "check_failed", "exit_code": code,
            "failed_checks": res.failed, "json": str(jp), "csv": str(cp)}
    return code, body


def _error(code: int, exc: BaseException) -> tuple:
    return code, {"status": "error", "exit_code": code,
                  "error": {"type": type(exc).__name__, "message": str(exc)}}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lensforge", description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=sorted(PIPELINES))
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override diagnostics and injection seeds")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be a non-negative integer")
            cfg = cfg.with_seed(args.seed)
    except ConfigError as exc:
        code, body = _error(2, exc)
    else:
        try:
            code, body = run(args.subcommand, cfg, args.out)
        except (ConfigError, ParameterError, TorusValidationError) as exc:
            code, body = _error(2, exc)
        except LensforgeError as exc:
            code, body = _error(1, exc)
    print(json.dumps(body, sort_keys=True))
    return code


if __name__ == "__main__":
    sys.exit(main())
