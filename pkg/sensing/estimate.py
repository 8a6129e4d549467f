#!/usr/bin/env python3
"""
State estimation from sparse measurements.

Two point estimators of the modal coefficients m from y = S^T u + eta:
- DEIM / minimum-norm least squares: m_LS = (S^T Phi)^+ y
- MAP under m ~ N(0, Gamma_prior), eta ~ N(0, Gamma_noise):
  m_MAP = Gamma_post A^T Gamma_noise^-1 y

Measurements are centered with the training mean before estimation and
the mean is added back to the full state, u_hat = ubar + Phi m_hat.
The a-priori relative error bounds are evaluated on centered quantities.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la

from sensing.datasets import NoiseModel
from sensing.numerics import (
    as_matrix, min_norm_solve, rank_tolerance, singular_values, spectral_norm, sym_eig,
)
from sensing.pod import PriorCovariance
from sensing.utils import InputError, NumericalError


@dataclass(frozen=True)
class Posterior:
    gamma_post: np.ndarray      # n x n
    map_operator: np.ndarray    # n x k, Gamma_post A^T Gamma_noise^-1
    a_matrix: np.ndarray        # k x n
    gamma_prior: np.ndarray
    sensor_indices: Optional[tuple] = None


@dataclass(frozen=True)
class Estimate:
    coefficients: np.ndarray
    full_state: np.ndarray
    method: str


def prior_matrix(prior):
    if isinstance(prior, PriorCovariance):
        return np.asarray(prior.gamma, dtype=np.float64)
    return as_matrix(prior, "prior covariance")


def noise_covariance(noise, k):
    if isinstance(noise, NoiseModel):
        return noise.covariance(k)
    cov = as_matrix(noise, "noise covariance")
    if cov.shape != (k, k):
        raise InputError(f"noise covariance is {cov.shape}, expected ({k}, {k})")
    return cov


def _prior_inverse(gamma):
    n = gamma.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    off_diag = gamma - np.diag(np.diag(gamma))
    if not off_diag.any():
        d = np.diag(gamma)
        if d.min() <= rank_tolerance(gamma.shape, d.max()):
            raise InputError(
                f"prior covariance is singular (smallest variance {d.min():.3e}); "
                f"reduce the number of modes to at most the rank of the training data"
            )
        return np.diag(1.0 / d)
    w, _ = sym_eig(gamma)
    if w[-1] <= rank_tolerance(gamma.shape, w[0]):
        raise InputError(
            f"prior covariance is singular (smallest eigenvalue {w[-1]:.3e}); "
            f"reduce the number of modes to at most the rank of the training data"
        )
    return la.cho_solve(la.cho_factor(gamma, lower=True), np.eye(n))


def posterior_from_operator(a, prior, noise, sensor_indices=None):
    """Gaussian posterior for y = A m + eta with any k x n operator A."""
    gamma = prior_matrix(prior)
    a = as_matrix(a, "A")
    n = gamma.shape[0]
    if a.shape[1] != n:
        raise InputError(f"A has {a.shape[1]} columns but the prior is {n}x{n}")
    k = a.shape[0]
    if isinstance(noise, NoiseModel) and noise.sigma == 0:
        raise InputError("noise sigma must be > 0 for the Bayesian posterior")

    if k == 0:
        return Posterior(gamma_post=gamma.copy(), map_operator=np.zeros((n, 0)), a_matrix=a,
                         gamma_prior=gamma, sensor_indices=sensor_indices)

    precision = _prior_inverse(gamma)
    if isinstance(noise, NoiseModel):
        weighted = a / noise.variance                 # Gamma_noise^-1 A
    else:
        cov = noise_covariance(noise, k)
        try:
            weighted = la.cho_solve(la.cho_factor(cov, lower=True), a)
        except la.LinAlgError:
            raise InputError("noise covariance is not positive definite")

    hessian = precision + a.T @ weighted
    try:
        factor = la.cho_factor(0.5 * (hessian + hessian.T), lower=True)
    except la.LinAlgError as e:
        raise NumericalError(f"posterior precision is not positive definite: {e}")
    gamma_post = la.cho_solve(factor, np.eye(n))
    gamma_post = 0.5 * (gamma_post + gamma_post.T)
    return Posterior(
        gamma_post=gamma_post,
        map_operator=gamma_post @ weighted.T,
        a_matrix=a,
        gamma_prior=gamma,
        sensor_indices=sensor_indices,
    )


def build_posterior(basis, sel, prior, noise):
    """Posterior for A = S^T Phi, built from Gamma_prior^-1 + A^T Gamma_noise^-1 A."""
    gamma = prior_matrix(prior)
    if gamma.shape[0] != basis.n_modes:
        raise InputError(f"prior is {gamma.shape[0]}x{gamma.shape[0]} but the basis has {basis.n_modes} modes")
    return posterior_from_operator(sel.operator(basis.phi), gamma, noise, sensor_indices=sel.indices)


def _centered_measurements(basis, indices, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != len(indices):
        raise InputError(f"got {y.shape[0]} measurements for {len(indices)} sensors")
    offset = basis.offset()[np.asarray(indices, dtype=int)]
    return y - (offset if y.ndim == 1 else offset[:, None])


def _lift(basis, coefficients):
    if coefficients.ndim == 1:
        return basis.offset() + basis.phi @ coefficients
    return basis.offset()[:, None] + basis.phi @ coefficients


def deim_estimate(basis, sel, y):
    """m_LS = (S^T Phi)^+ (y - S^T ubar), lifted to ubar + Phi m_LS."""
    yc = _centered_measurements(basis, sel.indices, y)
    coefficients = min_norm_solve(sel.operator(basis.phi), yc)
    return Estimate(coefficients=coefficients, full_state=_lift(basis, coefficients), method="deim")


def map_estimate(post, basis, y):
    """m_MAP = map_operator (y - S^T ubar), lifted to ubar + Phi m_MAP."""
    indices = post.sensor_indices if post.sensor_indices is not None else ()
    if post.map_operator.shape[1] != len(indices):
        raise InputError("posterior was built without sensor indices; use build_posterior")
    yc = _centered_measurements(basis, indices, y)
    coefficients = post.map_operator @ yc
    return Estimate(coefficients=coefficients, full_state=_lift(basis, coefficients), method="map")


def reconstruct_states(method, basis, sel, measurements, posterior=None):
    """Full-state estimates for a k x p matrix of measurements (one column per sample)."""
    if method == "deim":
        return deim_estimate(basis, sel, measurements).full_state
    if method == "map":
        if posterior is None:
            raise InputError("map reconstruction needs a posterior")
        return map_estimate(posterior, basis, measurements).full_state
    raise InputError(f"unknown estimator {method!r}, expected 'deim' or 'map'")


def relative_error(estimate, truth):
    """||u_hat - u|| / ||u||."""
    u_hat = estimate.full_state if isinstance(estimate, Estimate) else np.asarray(estimate, dtype=np.float64)
    u = np.asarray(truth, dtype=np.float64)
    norm = np.linalg.norm(u)
    if norm == 0:
        raise InputError("relative error is undefined for a zero true state")
    return float(np.linalg.norm(u_hat - u) / norm)


def relative_errors(states, truth):
    """Column-wise relative errors of an N x p estimate matrix."""
    norms = np.linalg.norm(truth, axis=0)
    if np.any(norms == 0):
        raise InputError("relative error is undefined for a zero true state")
    return np.linalg.norm(states - truth, axis=0) / norms


def noise_norm_ratio(u, eta):
    """||eta|| / ||u|| for one sample."""
    norm = np.linalg.norm(u)
    if norm == 0:
        raise InputError("noise ratio undefined for a zero state")
    return float(np.linalg.norm(eta) / norm)


def smallest_singular_value(a):
    """Smallest non-zero singular value of A (0 when A is zero or empty)."""
    s = singular_values(a)
    if s.size == 0 or s[0] == 0:
        return 0.0
    kept = s[s > rank_tolerance(np.shape(a), s[0])]
    return float(kept[-1])


def map_error_bound(post, basis, sel, noise_ratio):
    """||D - I||_2 + ||Gamma_post A^T Gamma_noise^-1||_2 * ||eta|| / ||u||,
    with D = Phi Gamma_post A^T Gamma_noise^-1 S^T."""
    n_loc = basis.n_locations
    d = np.zeros((n_loc, n_loc))
    d[:, sel.as_array()] = basis.phi @ post.map_operator
    return spectral_norm(d - np.eye(n_loc)) + spectral_norm(post.map_operator) * noise_ratio


def deim_error_bound(basis, sel, noise_ratio):
    """||(S^T Phi)^+||_2 (1 + ||eta|| / ||u||)."""
    sigma_min = smallest_singular_value(sel.operator(basis.phi))
    if sigma_min == 0:
        raise InputError("S^T Phi is zero; the DEIM bound is undefined")
    return (1.0 + noise_ratio) / sigma_min
