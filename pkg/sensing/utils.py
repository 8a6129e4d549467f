#!/usr/bin/env python3
"""
Shared utilities for the sensing library and scripts.

Provides common pieces used across the pipeline:
- Environment variable loading (.env file support)
- Sectioned key=value config files
- Error types shared by every module
- Seeded random streams (one substream per sample / chunk)
"""

import os

import numpy as np

VERSION = "0.4.0"

_UTILS_DIR = os.path.dirname(os.path.abspath(__file__))
PROJECT_ROOT = os.path.dirname(_UTILS_DIR)


class SensingError(Exception):
    """Base class for every error raised by the sensing library."""


class InputError(SensingError, ValueError):
    """Bad shapes, invalid parameters, malformed files."""


class BudgetExceeded(InputError):
    """Brute-force search would exceed the allowed number of evaluations."""


class NumericalError(SensingError, ArithmeticError):
    """Factorization failure or a violated numerical invariant."""


def load_env_var(key):
    """Load a variable from environment first, then .env file.

    Handles quoted values in .env (strips surrounding ' or ").
    Returns None if not found.
    """
    value = os.environ.get(key)
    if value:
        return value

    env_path = os.path.join(PROJECT_ROOT, ".env")
    if os.path.exists(env_path):
        with open(env_path) as f:
            for line in f:
                line = line.strip()
                if line.startswith(f"{key}="):
                    return line.split("=", 1)[1].strip().strip('"').strip("'")
    return None


def load_config(path):
    """Read a sectioned key=value config file.

    Returns {section: {key: value}}; keys before the first header land in
    the "" section. Values stay strings, callers convert them.
    """
    config = {"": {}}
    section = ""
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}")

    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            config.setdefault(section, {})
            continue
        if "=" not in line:
            raise InputError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        config[section][key.strip()] = value.strip().strip('"').strip("'")
    return config


def parse_int_list(text):
    """Parse '1,2,5' or '1..30' (inclusive range) or a mix into a list of ints."""
    values = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..", 1)
            values.extend(range(int(lo), int(hi) + 1))
        else:
            values.append(int(part))
    return values


def parse_float_list(text):
    """Parse '1e-4, 0.1' into a list of floats."""
    return [float(p) for p in str(text).split(",") if p.strip()]


def resolve_jobs(jobs=None):
    """Worker count: explicit value, then SENSING_JOBS, then 1."""
    if jobs:
        return int(jobs)
    env = load_env_var("SENSING_JOBS")
    return int(env) if env else 1


def substreams(seed, count):
    """Independent Generators, one per sample/chunk, spawned from `seed`.

    Stream i depends only on (seed, i), so serial and parallel runs that
    hand stream i to the same unit of work produce identical numbers.
    """
    children = np.random.SeedSequence(int(seed)).spawn(int(count))
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


def derive_seed(seed, *labels):
    """Stable child seed for a labelled purpose (e.g. test noise vs sensors)."""
    words = [int(seed)] + [sum((i + 1) * ord(c) for i, c in enumerate(str(lbl))) for lbl in labels]
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0])
