#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
JSON report envelopes and trajectory CSV files.
"""

import csv
import json
import logging
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _plain(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def envelope(command, report, version, meta=True):
    """{"schema": 1, "command": ..., "report": ..., "meta": ...}; meta omitted when disabled."""
    payload = {"schema": SCHEMA_VERSION, "command": command, "report": _plain(report)}
    if meta:
        payload["meta"] = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "version": version,
        }
    return payload


def dump_json(payload, pretty=False):
    return json.dumps(payload, sort_keys=True, indent=2 if pretty else None, allow_nan=True)


def write_json(payload, path, pretty=False):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as out:
        out.write(dump_json(payload, pretty))
        out.write("\n")
    logger.info(f"Report written to {path}")


def trajectory_header(vars, r):
    return (
        ["t"]
        + list(vars)
        + [f"xihat_{i + 1}" for i in range(r)]
        + ["u", "xnorm_transverse", "gamma_resid"]
    )


def write_trajectory_csv(trajectory, path, vars):
    """One row per recorded time; floats written with repr (round-trip precision)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    r = trajectory.observer.r
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(trajectory_header(vars, r))
        for k, t in enumerate(trajectory.times):
            row = [t, *trajectory.states[k], *trajectory.xihat[k], trajectory.u[k],
                   trajectory.transverse_norm[k], trajectory.gamma_residual[k]]
            writer.writerow([repr(float(v)) for v in row])
    logger.info(f"Trajectory with {len(trajectory.times)} rows written to {path}")
