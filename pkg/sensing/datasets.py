#!/usr/bin/env python3
"""
Snapshot data: the random-harmonic benchmark, measurement noise,
train/test splits, and snapshot file I/O.

File formats:
- csv: first line `# rows=<N> cols=<p>` (optionally ` kind=<tag>`), then
  one CSV record per matrix column (sample) holding its N entries, written
  with repr() so every float round-trips exactly
- binary: magic b"SNAP1", u64 rows, u64 cols, rows*cols little-endian
  float64 values in column-major order

Every random draw comes from per-sample substreams (sensing.utils.substreams),
so output depends only on (inputs, seed).
"""

import csv
import math
import os
import re
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import requests

from sensing.utils import InputError, substreams

BINARY_MAGIC = b"SNAP1"
HEADER_RE = re.compile(r"^#\s*rows=(\d+)\s+cols=(\d+)(?:\s+kind=(\S+))?\s*$")
FORMATS = ("csv", "binary")


@dataclass(frozen=True)
class SnapshotMatrix:
    data: np.ndarray                      # N x p, one sample per column
    mean: Optional[np.ndarray] = None     # length N, set after centering

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InputError(f"snapshot data must be 2-D, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InputError("snapshot data has non-finite entries")
        object.__setattr__(self, "data", data)
        if self.mean is not None:
            mean = np.asarray(self.mean, dtype=np.float64)
            if mean.shape != (data.shape[0],):
                raise InputError(f"mean has shape {mean.shape}, expected ({data.shape[0]},)")
            object.__setattr__(self, "mean", mean)

    @property
    def n_dims(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class HarmonicConfig:
    n_grid: int = 40
    n_terms: int = 20
    n_samples: int = 1000
    train_fraction: float = 0.75
    seed: int = 0
    amplitude_param: str = "std"        # 1/j and 1/j^3 are the std of a_ij ("std") or its variance ("variance")
    gap_index: int = 10                 # last harmonic drawn with the slow 1/j law

    def __post_init__(self):
        if self.n_grid < 2:
            raise InputError(f"n_grid must be >= 2, got {self.n_grid}")
        if self.n_terms < 1:
            raise InputError(f"n_terms must be >= 1, got {self.n_terms}")
        if self.n_samples < 1:
            raise InputError(f"n_samples must be >= 1, got {self.n_samples}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        if self.amplitude_param not in ("variance", "std"):
            raise InputError(f"amplitude_param must be 'variance' or 'std', got {self.amplitude_param!r}")


@dataclass(frozen=True)
class HarmonicDraws:
    amplitudes: np.ndarray   # p x J
    phases: np.ndarray       # p x J


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    structure: str = field(default="iid", compare=False)

    def __post_init__(self):
        if not math.isfinite(self.sigma) or self.sigma < 0:
            raise InputError(f"noise sigma must be finite and >= 0, got {self.sigma}")

    @property
    def variance(self):
        return self.sigma ** 2

    def covariance(self, k):
        return self.variance * np.eye(k)


def harmonic_grid(n_grid):
    return np.arange(n_grid) * (2.0 * np.pi / n_grid)


def amplitude_scales(config):
    """Standard deviation of a_ij for j = 1..J."""
    j = np.arange(1, config.n_terms + 1, dtype=np.float64)
    param = np.where(j <= config.gap_index, 1.0 / j, 1.0 / j ** 3)
    return np.sqrt(param) if config.amplitude_param == "variance" else param


def draw_harmonic_coefficients(config):
    """Raw amplitude and phase draws, one substream per sample."""
    scales = amplitude_scales(config)
    amplitudes = np.empty((config.n_samples, config.n_terms))
    phases = np.empty((config.n_samples, config.n_terms))
    for i, rng in enumerate(substreams(config.seed, config.n_samples)):
        phases[i] = rng.uniform(0.0, 2.0 * np.pi, size=config.n_terms)
        amplitudes[i] = rng.standard_normal(config.n_terms) * scales
    return HarmonicDraws(amplitudes=amplitudes, phases=phases)


def generate_harmonic(config, draws=None):
    """f_i(x_g) = sum_j a_ij sin(j x_g + phi_ij) on the periodic grid.

    `draws` overrides the random coefficients (used to force known values).
    """
    if draws is None:
        draws = draw_harmonic_coefficients(config)
    amps = np.asarray(draws.amplitudes, dtype=np.float64)
    phases = np.asarray(draws.phases, dtype=np.float64)
    if amps.shape != phases.shape or amps.shape[1] != config.n_terms:
        raise InputError(f"draws have shape {amps.shape}/{phases.shape}, expected (p, {config.n_terms})")
    x = harmonic_grid(config.n_grid)
    j = np.arange(1, config.n_terms + 1, dtype=np.float64)
    # waves[g, i, j] = sin(j x_g + phi_ij)
    waves = np.sin(x[:, None, None] * j[None, None, :] + phases[None, :, :])
    data = np.einsum("gij,ij->gi", waves, amps)
    return SnapshotMatrix(data=data)


def add_noise(x, noise, seed):
    """Perturb every entry by iid N(0, sigma^2), one substream per sample."""
    if noise.sigma == 0:
        return x
    noisy = x.data.copy()
    for i, rng in enumerate(substreams(seed, x.n_samples)):
        noisy[:, i] += noise.sigma * rng.standard_normal(x.n_dims)
    return SnapshotMatrix(data=noisy, mean=x.mean)


def noise_ratio(clean, noisy):
    """Mean over samples of ||noisy - clean|| / ||clean||."""
    u = clean.data if isinstance(clean, SnapshotMatrix) else np.asarray(clean)
    v = noisy.data if isinstance(noisy, SnapshotMatrix) else np.asarray(noisy)
    norms = np.linalg.norm(u, axis=0)
    if np.any(norms == 0):
        raise InputError("noise ratio undefined for an all-zero sample")
    return float(np.mean(np.linalg.norm(v - u, axis=0) / norms))


def split(x, train_fraction):
    """First ceil(p * fraction) columns train, the rest test (no shuffle)."""
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train_fraction must be in (0, 1), got {train_fraction}")
    p = x.n_samples
    # the small offset keeps p * (750 / p) from rounding up to 751
    n_train = math.ceil(p * train_fraction - 1e-9)
    if n_train <= 0 or n_train >= p:
        raise InputError(f"split of {p} samples at {train_fraction} leaves an empty side ({n_train}/{p - n_train})")
    train = replace(x, data=x.data[:, :n_train])
    test = replace(x, data=x.data[:, n_train:])
    return train, test


def _check_format(fmt):
    if fmt not in FORMATS:
        raise InputError(f"unknown snapshot format {fmt!r}, expected one of {FORMATS}")


def save_snapshots(x, path, fmt="binary", kind=None):
    """Write a SnapshotMatrix (or a bare 2-D array) to `path`."""
    _check_format(fmt)
    data = x.data if isinstance(x, SnapshotMatrix) else np.asarray(x, dtype=np.float64)
    if data.ndim == 1:
        data = data[:, None]
    rows, cols = data.shape
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    if fmt == "binary":
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(struct.pack("<QQ", rows, cols))
            f.write(np.asarray(data, dtype="<f8").ravel(order="F").tobytes())
        return path

    header = f"# rows={rows} cols={cols}" + (f" kind={kind}" if kind else "")
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        writer = csv.writer(f)
        for j in range(cols):
            writer.writerow([repr(float(v)) for v in data[:, j]])
    return path


def load_snapshots(path, fmt=None, expect_kind=None):
    """Read a snapshot file; `fmt` defaults to sniffing the magic bytes."""
    if not os.path.exists(path):
        raise InputError(f"snapshot file not found: {path}")
    if fmt is None:
        with open(path, "rb") as f:
            fmt = "binary" if f.read(len(BINARY_MAGIC)) == BINARY_MAGIC else "csv"
    _check_format(fmt)
    data = _load_binary(path) if fmt == "binary" else _load_csv(path, expect_kind)
    return SnapshotMatrix(data=data)


def read_kind(path):
    """The kind tag of a CSV header, or None."""
    with open(path) as f:
        match = HEADER_RE.match(f.readline().strip())
    return match.group(3) if match else None


def _load_binary(path):
    with open(path, "rb") as f:
        blob = f.read()
    head = len(BINARY_MAGIC) + 16
    if blob[:len(BINARY_MAGIC)] != BINARY_MAGIC or len(blob) < head:
        raise InputError(f"{path}: missing SNAP1 header")
    rows, cols = struct.unpack("<QQ", blob[len(BINARY_MAGIC):head])
    expected = rows * cols * 8
    if len(blob) - head != expected:
        raise InputError(f"{path}: header says {rows}x{cols} ({expected} bytes), payload has {len(blob) - head}")
    flat = np.frombuffer(blob, dtype="<f8", offset=head)
    data = flat.reshape((rows, cols), order="F").astype(np.float64)
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        raise InputError(f"{path}: non-finite value at row {bad[0][0]}, col {bad[0][1]}")
    return data


def _load_csv(path, expect_kind=None):
    with open(path, newline="") as f:
        first = f.readline().strip()
        match = HEADER_RE.match(first)
        if not match:
            raise InputError(f"{path}: malformed header {first!r}, expected '# rows=<N> cols=<p>'")
        rows, cols, kind = int(match.group(1)), int(match.group(2)), match.group(3)
        if expect_kind and kind != expect_kind:
            raise InputError(f"{path}: expected kind={expect_kind}, file says kind={kind}")
        records = [rec for rec in csv.reader(f) if rec]

    if len(records) != cols:
        raise InputError(f"{path}: header says {cols} cols, found {len(records)} records")
    data = np.empty((rows, cols))
    for j, rec in enumerate(records):
        if len(rec) != rows:
            raise InputError(f"{path}: col {j} has {len(rec)} entries, expected {rows}")
        for i, cell in enumerate(rec):
            try:
                value = float(cell)
            except ValueError:
                raise InputError(f"{path}: unparseable value {cell!r} at row {i}, col {j}")
            if not math.isfinite(value):
                raise InputError(f"{path}: non-finite value {cell!r} at row {i}, col {j}")
            data[i, j] = value
    return data


def fetch_snapshots(url, dest, timeout=60):
    """Download an externally hosted snapshot file to `dest` and load it."""
    try:
        response = requests.get(url, timeout=timeout, stream=True)
        response.raise_for_status()
        os.makedirs(os.path.dirname(os.path.abspath(dest)), exist_ok=True)
        with open(dest, "wb") as f:
            for chunk in response.iter_content(chunk_size=1 << 20):
                f.write(chunk)
    except requests.RequestException as e:
        raise InputError(f"could not download snapshots from {url}: {e}")
    print(f"Downloaded {os.path.getsize(dest)} bytes to {dest}")
    return load_snapshots(dest)
