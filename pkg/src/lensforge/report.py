"""Schema-versioned JSON summaries and CSV tables with provenance."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .config import SCHEMA_VERSION, ExperimentConfig, config_hash
from .exceptions import ProvenanceError

__all__ = ["atomic_write", "emit_report", "load_reports", "to_jsonable"]


def to_jsonable(obj):
    """Convert numpy scalars/arrays (recursively) to plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def atomic_write(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(name: str, summary: dict, cfg: ExperimentConfig, out_dir=".",
                columns: Optional[Sequence[str]] = None, rows: Iterable = (),
                json_path=None, csv_path=None):
    """Write ``<name>.json`` (summary) and ``<name>.csv`` (rows).

    Both files carry the schema version, config hash, seed and tool version;
    nothing time-dependent is written, so reruns are byte-identical.

    Returns
    -------
    (json_path, csv_path)
    """
    out_dir = Path(out_dir)
    h = config_hash(cfg)
    seed = cfg.diagnostics["seed"]
    body = {
        "schema_version": SCHEMA_VERSION,
        "tool": "lensforge",
        "tool_version": __version__,
        "subcommand": name,
        "config_hash": h,
        "seed": seed,
        "config": cfg.to_dict(),
        "summary": to_jsonable(summary),
    }
    jp = Path(json_path) if json_path else out_dir / f"{name}.json"
    cp = Path(csv_path) if csv_path else out_dir / f"{name}.csv"
    atomic_write(jp, json.dumps(body, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schema_version", "config_hash", "seed"] + list(columns or []))
    for r in rows:
        w.writerow([SCHEMA_VERSION, h, seed] + [repr(float(v)) if isinstance(v, (float, np.floating))
                                                 else v for v in r])
    atomic_write(cp, buf.getvalue())
    return jp, cp


def load_reports(paths) -> list:
    """Load JSON summaries and CSV tables, requiring one common config hash.

    Raises
    ------
    ProvenanceError
        If the files were produced under different configurations or schema versions.
    """
    loaded, hashes = [], set()
    for p in paths:
        p = Path(p)
        if p.suffix == ".json":
            body = json.loads(p.read_text())
            hashes.add((body.get("schema_version"), body.get("config_hash")))
            loaded.append(body)
        else:
            with p.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
            hashes |= {(int(r["schema_version"]), r["config_hash"]) for r in rows}
            loaded.append(rows)
    if len(hashes) > 1:
        raise ProvenanceError(f"reports come from {len(hashes)} different configurations")
    return loaded
