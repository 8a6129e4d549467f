#!/usr/bin/env python3
"""
POD modal basis and the data-derived prior covariance.

The basis is the leading left singular vectors of the centered training
snapshots, each column signed so its largest-magnitude entry is positive.
The default prior is the covariance of the snapshot coordinates in that
basis, diag(sigma_i^2) / (p - 1).
"""

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from sensing.datasets import SnapshotMatrix, load_snapshots, save_snapshots
from sensing.numerics import econ_svd, rank_tolerance
from sensing.utils import InputError

PRIOR_PRESETS = ("pod", "singular_values", "identity")


@dataclass(frozen=True)
class ModalBasis:
    phi: np.ndarray                        # N x n, orthonormal columns
    singular_values: np.ndarray            # every singular value of the centered data
    n_samples_used: int
    mean: Optional[np.ndarray] = None      # training mean, added back in reconstructions

    @property
    def n_modes(self):
        return self.phi.shape[1]

    @property
    def n_locations(self):
        return self.phi.shape[0]

    @property
    def rank(self):
        s = self.singular_values
        if s.size == 0:
            return 0
        return int(np.count_nonzero(s > rank_tolerance((self.n_locations, self.n_samples_used), s[0])))

    def offset(self):
        return self.mean if self.mean is not None else np.zeros(self.n_locations)

    def truncate(self, n):
        """Same data, first n modes."""
        if not 1 <= n <= self.phi.shape[1]:
            raise InputError(f"cannot truncate a {self.n_modes}-mode basis to {n} modes")
        return ModalBasis(phi=self.phi[:, :n], singular_values=self.singular_values,
                          n_samples_used=self.n_samples_used, mean=self.mean)


@dataclass(frozen=True)
class PriorCovariance:
    gamma: np.ndarray
    diagonal_flag: bool = False
    preset: str = "custom"

    @property
    def n_modes(self):
        return self.gamma.shape[0]

    def truncate(self, n):
        return PriorCovariance(gamma=self.gamma[:n, :n], diagonal_flag=self.diagonal_flag, preset=self.preset)


def center(x):
    """Subtract the column mean and remember it."""
    if x.n_samples < 2:
        raise InputError(f"centering needs at least 2 samples, got {x.n_samples}")
    mean = x.data.mean(axis=1)
    previous = x.mean if x.mean is not None else 0.0
    return SnapshotMatrix(data=x.data - mean[:, None], mean=previous + mean)


def pod_basis(xc, n):
    """First n left singular vectors of the centered snapshots."""
    svd = econ_svd(xc.data)
    s = svd.s
    rank = int(np.count_nonzero(s > rank_tolerance(xc.data.shape, s[0]))) if s.size else 0
    if not 1 <= n <= rank:
        raise InputError(f"requested {n} modes but the centered data has numerical rank {rank}")

    u = svd.u[:, :n].copy()
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(n)])
    u *= np.where(signs == 0, 1.0, signs)

    return ModalBasis(phi=u, singular_values=s.copy(), n_samples_used=xc.n_samples, mean=xc.mean)


def prior_from_pod(basis, preset="pod", scale=1.0):
    """Prior covariance for the basis coefficients.

    pod:             diag(sigma_i^2) / (p - 1), the sample covariance in the basis
    singular_values: diag(sigma_i)
    identity:        scale * I
    """
    n = basis.n_modes
    s = basis.singular_values[:n]
    if preset == "pod":
        gamma = np.diag(s ** 2 / (basis.n_samples_used - 1))
    elif preset == "singular_values":
        gamma = np.diag(s.copy())
    elif preset == "identity":
        gamma = scale * np.eye(n)
    else:
        raise InputError(f"unknown prior preset {preset!r}, expected one of {PRIOR_PRESETS}")
    return PriorCovariance(gamma=gamma, diagonal_flag=True, preset=preset)


def prior_from_snapshots(xc, phi):
    """Dense change of basis Phi^T (X X^T / (p - 1)) Phi for any basis."""
    x = xc.data
    coords = phi.T @ x
    gamma = coords @ coords.T / (xc.n_samples - 1)
    return PriorCovariance(gamma=0.5 * (gamma + gamma.T), diagonal_flag=False, preset="sample")


def modes_for_energy(basis, fraction):
    """Smallest n whose modes capture `fraction` of the squared singular values."""
    if not 0.0 < fraction <= 1.0:
        raise InputError(f"energy fraction must be in (0, 1], got {fraction}")
    energy = np.cumsum(basis.singular_values ** 2)
    return int(np.searchsorted(energy / energy[-1], fraction - 1e-15) + 1)


def projection_error(x, basis):
    """Relative error ||u - ubar - Phi Phi^T (u - ubar)|| / ||u - ubar|| per sample."""
    data = x.data if isinstance(x, SnapshotMatrix) else np.asarray(x, dtype=np.float64)
    centered = data - basis.offset()[:, None]
    residual = centered - basis.phi @ (basis.phi.T @ centered)
    norms = np.linalg.norm(centered, axis=0)
    norms = np.where(norms == 0, 1.0, norms)
    return np.linalg.norm(residual, axis=0) / norms


def save_model(out_dir, basis, prior, extra=None):
    """Write basis, mean, singular values and prior as tagged CSVs plus model.json."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        save_snapshots(basis.phi, os.path.join(out_dir, "basis.csv"), fmt="csv", kind="basis"),
        save_snapshots(basis.offset(), os.path.join(out_dir, "mean.csv"), fmt="csv", kind="mean"),
        save_snapshots(basis.singular_values, os.path.join(out_dir, "singular_values.csv"),
                       fmt="csv", kind="singular_values"),
        save_snapshots(prior.gamma, os.path.join(out_dir, "prior.csv"), fmt="csv", kind="prior"),
    ]
    meta = {
        "n_locations": basis.n_locations,
        "n_modes": basis.n_modes,
        "n_samples_used": basis.n_samples_used,
        "prior_preset": prior.preset,
        "prior_diagonal": prior.diagonal_flag,
    }
    meta.update(extra or {})
    meta_path = os.path.join(out_dir, "model.json")
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2)
    return paths + [meta_path]


def load_model(model_dir):
    """Inverse of save_model: (ModalBasis, PriorCovariance)."""
    meta_path = os.path.join(model_dir, "model.json")
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read {meta_path}: {e}")
    phi = load_snapshots(os.path.join(model_dir, "basis.csv"), expect_kind="basis").data
    mean = load_snapshots(os.path.join(model_dir, "mean.csv"), expect_kind="mean").data[:, 0]
    s = load_snapshots(os.path.join(model_dir, "singular_values.csv"), expect_kind="singular_values").data[:, 0]
    gamma = load_snapshots(os.path.join(model_dir, "prior.csv"), expect_kind="prior").data
    basis = ModalBasis(phi=phi, singular_values=s, n_samples_used=int(meta["n_samples_used"]), mean=mean)
    prior = PriorCovariance(gamma=gamma, diagonal_flag=bool(meta.get("prior_diagonal", False)),
                            preset=meta.get("prior_preset", "custom"))
    if prior.n_modes != basis.n_modes:
        raise InputError(f"{model_dir}: prior is {prior.n_modes}x{prior.n_modes} but the basis has {basis.n_modes} modes")
    return basis, prior
