"""On-disk formats shared by the CLI and the experiment scripts.

Field and observation CSVs carry a header of coordinate names followed by
"value"; field rows follow the grid's lexicographic order.  Metrics and
bound reports are versioned JSON.  All floats are written with enough
digits to round-trip bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .gp import Observations

METRICS_SCHEMA_VERSION = 1


def write_field_csv(path, points, values):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.asarray(values, dtype=float).ravel()
    names = [f"x{i}" for i in range(points.shape[1])] + ["value"]
    table = np.column_stack([points, values])
    np.savetxt(path, table, fmt="%.17g", delimiter=",",
               header=",".join(names), comments="")


def read_field_csv(path):
    table = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    return table[:, :-1], table[:, -1]


def write_observations_csv(path, obs):
    write_field_csv(path, obs.locations, obs.values)


def read_observations_csv(path):
    points, values = read_field_csv(path)
    return Observations(points, values)


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_coerce)


def _coerce(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj)}")


def config_hash(cfg):
    """Stable hash of a configuration mapping."""
    blob = json.dumps(cfg, sort_keys=True, default=_coerce).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_run_manifest(out_dir, cfg, version, extra=None):
    """Deterministic run manifest (config hash, seed, version).

    Wall-clock accounting goes to a separate cost.json so the manifest
    hash is stable across reruns of the same configuration.
    """
    payload = {
        "config": cfg,
        "config_hash": config_hash(cfg),
        "seed": cfg.get("seed"),
        "version": version,
    }
    if extra:
        payload.update(extra)
    write_json(Path(out_dir) / "run_manifest.json", payload)
    return payload


def write_cost_json(out_dir, cost):
    write_json(Path(out_dir) / "cost.json", cost)


def write_metrics(path, **fields):
    payload = {"schema_version": METRICS_SCHEMA_VERSION}
    payload.update(fields)
    write_json(path, payload)
