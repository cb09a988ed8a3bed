"""Run configuration: schema, validation, canonical hashing."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from .action import IntegrableActionHamiltonian
from .exceptions import ConfigError, LensforgeError
from .injector import InjectionParams

__all__ = ["SCHEMA_VERSION", "ExperimentConfig", "load_config", "config_hash", "canonical_json"]

SCHEMA_VERSION = 1

_NUMERICS = {"dt": 1e-3, "t_max": 3.0, "newton_tol": 1e-12, "fd_step": 1e-7}
_DIAGNOSTICS = {"iterates": 10_000, "transient": 1000, "renorm_period": 10, "samples": 1000,
                "threshold": 0.05, "min_fraction": 0.10, "seed": 0, "system": "injected"}
_REALIZE = {"map": {"type": "fiber_shear", "params": {"m": 1, "radius": 0.4, "momentum_radius": 0.4,
                                                       "energy_radius": 0.4}},
            "c1_size": 0.03, "epsilon": 0.6, "grid": [20, 20, 5], "grid_half_width": 0.5, "tol": 1e-5}
_INJECT = {"samples": 100, "invariance_starts": 1000, "invariance_iterates": 10_000,
           "level_tol": 1e-9, "symplectic_tol": 1e-6, "periodicity_tol": 1e-8, "return_tol": 1e-8}
_SCAN = {"amplitude": [4.0 / (3.0 * 3.141592653589793) ** 2], "N": [8], "h": [0.0],
         "samples": 100, "iterates": 1000, "transient": 100}
_FAMILY = {"shear_size": 0.01, "samples": 8, "dt": 1e-2, "endpoint_tol": 1e-6, "plateau_tol": 1e-10}


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: "ExperimentConfig") -> str:
    """sha256 of the canonical JSON form of the configuration."""
    return hashlib.sha256(canonical_json(cfg.to_dict()).encode()).hexdigest()


def _merge(defaults: dict, given: Optional[dict], name: str) -> dict:
    given = {} if given is None else given
    if not isinstance(given, dict):
        raise ConfigError(f"section {name!r} must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


@dataclass
class ExperimentConfig:
    """Validated run configuration.

    ``system`` is the JSON term list of an :class:`IntegrableActionHamiltonian`
    (None means ``p_n + |p|^2 / 2`` with n = 2); ``injection`` holds
    :class:`InjectionParams` fields; the remaining sections configure the
    numerics and the individual subcommands.
    """

    schema_version: int = SCHEMA_VERSION
    system: Optional[list] = None
    injection: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=lambda: dict(_NUMERICS))
    diagnostics: dict = field(default_factory=lambda: dict(_DIAGNOSTICS))
    realize: dict = field(default_factory=lambda: copy.deepcopy(_REALIZE))
    inject: dict = field(default_factory=lambda: dict(_INJECT))
    scan: dict = field(default_factory=lambda: copy.deepcopy(_SCAN))
    family: dict = field(default_factory=lambda: dict(_FAMILY))
    outputs: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        if "schema_version" not in d:
            raise ConfigError("schema_version is mandatory")
        if d["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {d['schema_version']!r}")
        known = {"schema_version", "system", "injection", "numerics", "diagnostics", "realize",
                 "inject", "scan", "family", "outputs"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        inj_defaults = asdict(InjectionParams())
        cfg = cls(
            schema_version=SCHEMA_VERSION,
            system=d.get("system"),
            injection=_merge(inj_defaults, d.get("injection"), "injection"),
            numerics=_merge(_NUMERICS, d.get("numerics"), "numerics"),
            diagnostics=_merge(_DIAGNOSTICS, d.get("diagnostics"), "diagnostics"),
            realize=_merge(_REALIZE, d.get("realize"), "realize"),
            inject=_merge(_INJECT, d.get("inject"), "inject"),
            scan=_merge(_SCAN, d.get("scan"), "scan"),
            family=_merge(_FAMILY, d.get("family"), "family"),
            outputs=_merge({"json_path": None, "csv_path": None}, d.get("outputs"), "outputs"),
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self):
        """Check positivity of tolerances and that the typed sections build.

        Raises
        ------
        ConfigError
        """
        for sec, keys in (("numerics", ("dt", "t_max", "newton_tol", "fd_step")),
                          ("realize", ("tol", "epsilon", "grid_half_width")),
                          ("inject", ("level_tol", "symplectic_tol", "periodicity_tol", "return_tol")),
                          ("family", ("endpoint_tol", "plateau_tol", "dt", "shear_size"))):
            for k in keys:
                v = getattr(self, sec)[k]
                if not isinstance(v, (int, float)) or not v > 0:
                    raise ConfigError(f"{sec}.{k} must be a positive number")
        for k in ("iterates", "renorm_period", "samples"):
            v = self.diagnostics[k]
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"diagnostics.{k} must be a positive integer")
        if self.diagnostics["system"] not in ("injected", "shear", "cat"):
            raise ConfigError("diagnostics.system must be 'injected', 'shear' or 'cat'")
        try:
            self.hamiltonian()
            self.params()
        except (LensforgeError, TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid system or injection section: {exc}") from exc

    def hamiltonian(self) -> IntegrableActionHamiltonian:
        if self.system is None:
            return IntegrableActionHamiltonian.standard(2)
        return IntegrableActionHamiltonian.from_json(self.system)

    def params(self, **override) -> InjectionParams:
        return InjectionParams(**(self.injection | override))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Copy with the diagnostics and injection seeds replaced."""
        d = self.to_dict()
        d["diagnostics"]["seed"] = int(seed)
        d["injection"]["seed"] = int(seed)
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON configuration file.

    Raises
    ------
    ConfigError
        If the file is missing, not JSON, or fails validation.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)
