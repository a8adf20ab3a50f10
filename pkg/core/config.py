#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
Configuration for the transverse feedback linearization toolkit.

Defaults live here; config.json is merged over them and a few environment
variables (optionally read from a .env file) override the result.
"""

import copy
import json
import logging
import os
from pathlib import Path

from dotenv import load_dotenv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "name": "tfl-toolkit",
    "version": "0.1.0",
    "tolerances": {
        "rank_rel": 1e-8,
        "zero": 1e-7,
        "nonzero": 1e-6,
        "on_set": 1e-7,
        "base_point": 1e-9,
        "projection": 1e-10,
        "closure_residual": 1e-6,
        "observability": 1e-7,
        "numeric_zero": 1e-5,
        "numeric_nonzero": 1e-4,
        "commuting": 1e-8,
    },
    "sampling": {
        "set_radius": 0.05,
        "set_count": 64,
        "ball_radius": 0.05,
        "ball_count": 64,
        "validate_radius": 0.1,
        "validate_count": 32,
        "grid_radius": 0.5,
        "grid_count": 24,
        "random_points": 20,
        "random_radius": 1.0,
        "seed": 20130601,
    },
    "projection": {
        "max_iterations": 50,
        "max_retries": 4,
    },
    "integrator": {
        "method": "RK45",
        "rtol": 1e-8,
        "atol": 1e-10,
        "max_steps": 1000000,
    },
    "newton": {
        "max_iterations": 50,
        "tolerance": 1e-9,
        "fd_step": 1e-6,
    },
    "charts": {
        "frame_mode": "projected",
        "validity_radius": 0.05,
        "max_halvings": 6,
        "verify_samples": 32,
        "roundtrip_samples": 8,
        "roundtrip_tolerance": 1e-7,
        "gradient_step": 1e-4,
        "parameter_bound": 10.0,
    },
    "closure": {
        "max_sweeps": None,
    },
    "observer": {
        "eps": 0.01,
        "sat": 20.0,
        "out_dt": 0.01,
        "blowup_norm": 1e6,
    },
    "logging": {
        "level": "INFO",
        "file": None,
    },
}

# Environment variable -> (section, key, type)
ENV_OVERRIDES = {
    "TFL_LOG_LEVEL": ("logging", "level", str),
    "TFL_LOG_FILE": ("logging", "file", str),
    "TFL_TOL_RANK": ("tolerances", "rank_rel", float),
    "TFL_TOL_ZERO": ("tolerances", "zero", float),
    "TFL_SAMPLES": ("sampling", "set_count", int),
    "TFL_RADIUS": ("sampling", "set_radius", float),
    "TFL_FRAME_MODE": ("charts", "frame_mode", str),
}


def _deep_merge(base, override):
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def default_config():
    """A fresh copy of the built-in defaults."""
    return copy.deepcopy(DEFAULT_CONFIG)


def load_config(path="config.json", use_env=True):
    """
    Load configuration from a JSON file and environment variables.

    Args:
        path: Path to the JSON config file; a missing file means defaults
        use_env: Whether to apply TFL_* environment overrides

    Returns:
        Configuration dictionary with every default section present
    """
    config = default_config()
    path = Path(path) if path else None

    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as config_file:
                config = _deep_merge(config, json.load(config_file))
        except FileNotFoundError:
            logger.info(f"Config file {path} not found, using defaults")
        except json.JSONDecodeError:
            logger.error(f"Config file {path} is not valid JSON. Please check the format.")
            raise

    if use_env:
        load_dotenv()
        for variable, (section, key, cast) in ENV_OVERRIDES.items():
            value = os.getenv(variable)
            if value:
                config[section][key] = cast(value)
                logger.debug(f"{variable} overrides {section}.{key} = {value}")

    return config


def apply_overrides(config, tol_rank=None, tol_zero=None, samples=None, radius=None, frame_mode=None):
    """Return a copy of config with command-line overrides applied."""
    config = copy.deepcopy(config)
    if tol_rank is not None:
        config["tolerances"]["rank_rel"] = tol_rank
    if tol_zero is not None:
        config["tolerances"]["zero"] = tol_zero
    if samples is not None:
        config["sampling"]["set_count"] = samples
        config["sampling"]["ball_count"] = samples
        config["sampling"]["validate_count"] = samples
    if radius is not None:
        config["sampling"]["set_radius"] = radius
        config["sampling"]["ball_radius"] = radius
    if frame_mode is not None:
        config["charts"]["frame_mode"] = frame_mode
    return config
