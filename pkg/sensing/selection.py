#!/usr/bin/env python3
"""
Sensor selections: ordered distinct location indices, the selection
matrix they stand for, their one-line CSV form, and the Dice overlap.
"""

from dataclasses import dataclass

import numpy as np

from sensing.utils import InputError


@dataclass(frozen=True)
class SensorSelection:
    indices: tuple
    n_locations: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise InputError(f"sensor indices must be distinct, got {list(idx)}")
        bad = [i for i in idx if not 0 <= i < self.n_locations]
        if bad:
            raise InputError(f"sensor indices {bad} out of range [0, {self.n_locations})")
        object.__setattr__(self, "indices", idx)

    @property
    def k(self):
        return len(self.indices)

    def as_array(self):
        return np.asarray(self.indices, dtype=int)

    def matrix(self):
        """S, the N x k matrix of identity columns."""
        s = np.zeros((self.n_locations, self.k))
        s[self.as_array(), np.arange(self.k)] = 1.0
        return s

    def measure(self, u):
        """S^T u for a state vector or an N x p matrix of states."""
        return np.asarray(u)[self.as_array()]

    def operator(self, phi):
        """A = S^T Phi."""
        return np.asarray(phi)[self.as_array(), :]

    def to_csv_line(self, method, seed=None):
        seed_field = "" if seed is None else str(seed)
        return ",".join([method, str(self.k), str(self.n_locations), seed_field] + [str(i) for i in self.indices])


def parse_selection_line(line):
    """Inverse of to_csv_line: returns (method, seed or None, SensorSelection)."""
    fields = [f.strip() for f in line.strip().split(",")]
    if len(fields) < 4:
        raise InputError(f"selection line needs method,k,N,seed,indices..., got {line.strip()!r}")
    method, k, n_locations, seed = fields[:4]
    indices = [int(f) for f in fields[4:] if f]
    if len(indices) != int(k):
        raise InputError(f"selection line says k={k} but lists {len(indices)} indices")
    return method, (int(seed) if seed else None), SensorSelection(tuple(indices), int(n_locations))


def load_selection(path):
    with open(path) as f:
        lines = [ln for ln in f if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise InputError(f"{path}: no selection line found")
    return parse_selection_line(lines[0])


def save_selection(sel, path, method, seed=None):
    with open(path, "w") as f:
        f.write(sel.to_csv_line(method, seed) + "\n")
    return path


def dice(a, b):
    """2 |a & b| / (|a| + |b|)."""
    if a.n_locations != b.n_locations:
        raise InputError(f"selections live on different grids ({a.n_locations} vs {b.n_locations} locations)")
    total = a.k + b.k
    if total == 0:
        return 1.0
    return 2.0 * len(set(a.indices) & set(b.indices)) / total
