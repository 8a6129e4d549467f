#!/usr/bin/env python3
"""
Bayes risk of the MNLS and MAP estimators and the risk premium between them.

For y = A m + eta with m ~ N(0, Gamma_prior), eta ~ N(0, Gamma_noise) and any
k x n operator A:

    Risk(m_MAP) = tr(Gamma_post)
    Risk(m_LS)  = tr[(I - A^+ A) Gamma_prior] + tr[A^+ Gamma_noise A^+T]
    premium     = Risk(m_LS) - Risk(m_MAP) = delta_prior + delta_noise

with delta_prior, delta_noise >= 0 and bounded by zeta_prior, zeta_noise.
Every function takes a plain matrix A, so it applies to S^T Phi and to any
other linear observation operator alike.
"""

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from sensing.datasets import NoiseModel
from sensing.estimate import noise_covariance, posterior_from_operator, prior_matrix
from sensing.numerics import as_matrix, pseudo_inverse, rank_tolerance, singular_values, sym_eig
from sensing.utils import InputError, NumericalError, substreams

RISK_COLUMNS = ("risk_ls", "risk_map", "delta_prior", "delta_noise",
                "zeta_prior", "zeta_noise", "premium", "nullity")
NEG_FLOOR = 1e-10
IDENTITY_RTOL = 1e-9
MC_CHUNK = 10_000
ESTIMATORS = ("deim", "map", "zero")


@dataclass(frozen=True)
class RiskReport:
    risk_map: float
    risk_ls: float
    delta_prior: float
    delta_noise: float
    zeta_prior: float
    zeta_noise: float
    premium: float
    nullity_a: int

    @property
    def scale(self):
        return max(self.risk_ls, 1.0)

    def as_row(self):
        row = asdict(self)
        row["nullity"] = row.pop("nullity_a")
        return {col: row[col] for col in RISK_COLUMNS}

    def violations(self):
        """Invariants that do not hold, as readable strings (empty when all hold)."""
        s = self.scale
        problems = []
        if self.delta_prior < -NEG_FLOOR * s:
            problems.append(f"delta_prior = {self.delta_prior:.3e} < 0")
        if self.delta_noise < -NEG_FLOOR * s:
            problems.append(f"delta_noise = {self.delta_noise:.3e} < 0")
        if abs(self.premium - (self.delta_prior + self.delta_noise)) > IDENTITY_RTOL * s:
            problems.append(
                f"premium {self.premium:.12e} != delta_prior + delta_noise "
                f"{self.delta_prior + self.delta_noise:.12e}"
            )
        if self.delta_prior > self.zeta_prior + IDENTITY_RTOL * s:
            problems.append(f"delta_prior {self.delta_prior:.6e} exceeds zeta_prior {self.zeta_prior:.6e}")
        if self.delta_noise > self.zeta_noise + IDENTITY_RTOL * s:
            problems.append(f"delta_noise {self.delta_noise:.6e} exceeds zeta_noise {self.zeta_noise:.6e}")
        return problems


class LsRisk(NamedTuple):
    total: float
    prior_term: float     # tr[(I - A^+ A) Gamma_prior]
    noise_term: float     # tr[A^+ Gamma_noise A^+T]


class DeltaTerms(NamedTuple):
    delta_prior: float
    delta_noise: float
    Delta_prior: np.ndarray
    Delta_noise: np.ndarray


class ZetaTerms(NamedTuple):
    zeta_prior: float
    zeta_noise: float


def _operator(a, prior):
    gamma = prior_matrix(prior)
    a = as_matrix(a, "A")
    if a.shape[1] != gamma.shape[0]:
        raise InputError(f"A is {a.shape[0]}x{a.shape[1]} but the prior is {gamma.shape[0]}x{gamma.shape[0]}")
    return a, gamma


def nullity(a):
    a = as_matrix(a, "A")
    s = singular_values(a)
    rank = int(np.count_nonzero(s > rank_tolerance(a.shape, s[0]))) if s.size and s[0] > 0 else 0
    return a.shape[1] - rank


def risk_map(post):
    """Bayes risk of the MAP estimate, tr(Gamma_post)."""
    return float(np.trace(post.gamma_post))


def risk_ls(a, prior, noise):
    """Bayes risk of the minimum-norm least-squares estimate, split into its two terms."""
    a, gamma = _operator(a, prior)
    a_pinv = pseudo_inverse(a)
    n = gamma.shape[0]
    prior_term = float(np.trace((np.eye(n) - a_pinv @ a) @ gamma))
    noise_term = float(np.trace(a_pinv @ noise_covariance(noise, a.shape[0]) @ a_pinv.T))
    return LsRisk(total=prior_term + noise_term, prior_term=prior_term, noise_term=noise_term)


def delta_terms(a, prior, noise, post=None):
    """Delta_prior = (I - A^+ A)(Gamma_prior - Gamma_post),
    Delta_noise = A^+ Gamma_noise A^+T - A^+ A Gamma_post, and their traces."""
    a, gamma = _operator(a, prior)
    if post is None:
        post = posterior_from_operator(a, gamma, noise)
    a_pinv = pseudo_inverse(a)
    n = gamma.shape[0]
    proj = a_pinv @ a
    big_prior = (np.eye(n) - proj) @ (gamma - post.gamma_post)
    big_noise = a_pinv @ noise_covariance(noise, a.shape[0]) @ a_pinv.T - proj @ post.gamma_post
    return DeltaTerms(
        delta_prior=float(np.trace(big_prior)),
        delta_noise=float(np.trace(big_noise)),
        Delta_prior=big_prior,
        Delta_noise=big_noise,
    )


def zeta_noise_iid(a, sigma):
    """sigma^2 * sum over non-zero singular values of 1 / sigma_i(A)^2."""
    s = singular_values(as_matrix(a, "A"))
    if s.size == 0 or s[0] == 0:
        return 0.0
    kept = s[s > rank_tolerance(np.shape(a), s[0])]
    return float(sigma ** 2 * np.sum(1.0 / kept ** 2))


def zeta_terms(a, prior, noise, post=None):
    """Upper bounds on delta_prior and delta_noise.

    zeta_prior sums the nullity(A) largest eigenvalues of Gamma_prior - Gamma_post;
    for iid noise zeta_noise is checked against its singular-value form.
    """
    a, gamma = _operator(a, prior)
    if post is None:
        post = posterior_from_operator(a, gamma, noise)
    a_pinv = pseudo_inverse(a)
    zeta_noise = float(np.trace(a_pinv @ noise_covariance(noise, a.shape[0]) @ a_pinv.T))

    if isinstance(noise, NoiseModel):
        dual = zeta_noise_iid(a, noise.sigma)
        if not np.isclose(dual, zeta_noise, rtol=1e-8, atol=0.0):
            raise NumericalError(
                f"zeta_noise trace form {zeta_noise:.12e} disagrees with singular-value form {dual:.12e}"
            )

    null_dim = nullity(a)
    if null_dim == 0:
        zeta_prior = 0.0
    else:
        w, _ = sym_eig(gamma - post.gamma_post)
        zeta_prior = float(np.sum(w[:null_dim]))
    return ZetaTerms(zeta_prior=zeta_prior, zeta_noise=zeta_noise)


def risk_report(a, prior, noise, check=True):
    """All risk quantities for one (A, Gamma_prior, Gamma_noise), invariants enforced."""
    a, gamma = _operator(a, prior)
    post = posterior_from_operator(a, gamma, noise)
    ls = risk_ls(a, gamma, noise)
    deltas = delta_terms(a, gamma, noise, post=post)
    zetas = zeta_terms(a, gamma, noise, post=post)
    r_map = risk_map(post)
    report = RiskReport(
        risk_map=r_map,
        risk_ls=ls.total,
        delta_prior=deltas.delta_prior,
        delta_noise=deltas.delta_noise,
        zeta_prior=zetas.zeta_prior,
        zeta_noise=zetas.zeta_noise,
        premium=ls.total - r_map,
        nullity_a=nullity(a),
    )
    if check:
        problems = report.violations()
        if problems:
            raise NumericalError("risk invariants violated: " + "; ".join(problems))
    return report


def _estimator_matrix(estimator, a, gamma, noise):
    n, k = gamma.shape[0], a.shape[0]
    if estimator == "deim":
        return pseudo_inverse(a)
    if estimator == "map":
        return posterior_from_operator(a, gamma, noise).map_operator
    if estimator == "zero":
        return np.zeros((n, k))
    raise InputError(f"unknown estimator {estimator!r}, expected one of {ESTIMATORS}")


def _square_root(cov):
    w, v = sym_eig(cov)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def monte_carlo_risk(estimator, a, prior, noise, n_draws, seed):
    """Sample mean and standard error of ||m_hat(y) - m||^2 over (m, eta).

    Draws come in antithetic pairs (m, eta) and (-m, eta); the standard error
    is computed over pair averages. Chunk i of MC_CHUNK draws uses substream i.
    """
    if n_draws < 100:
        raise InputError(f"monte carlo risk needs at least 100 draws, got {n_draws}")
    a, gamma = _operator(a, prior)
    n, k = gamma.shape[0], a.shape[0]
    k_mat = _estimator_matrix(estimator, a, gamma, noise)
    prior_root = _square_root(gamma)
    noise_root = _square_root(noise_covariance(noise, k)) if k else np.zeros((0, 0))

    n_pairs = (n_draws + 1) // 2
    n_chunks = -(-n_pairs // MC_CHUNK)
    pair_means = []
    for c, rng in enumerate(substreams(seed, n_chunks)):
        size = min(MC_CHUNK, n_pairs - c * MC_CHUNK)
        m = prior_root @ rng.standard_normal((n, size))
        eta = noise_root @ rng.standard_normal((k, size))
        fixed = k_mat @ eta
        sweep = (k_mat @ a - np.eye(n)) @ m
        err_plus = np.sum((sweep + fixed) ** 2, axis=0)
        err_minus = np.sum((-sweep + fixed) ** 2, axis=0)
        pair_means.append(0.5 * (err_plus + err_minus))

    values = np.concatenate(pair_means)
    mean = float(values.mean())
    std_error = float(values.std(ddof=1) / np.sqrt(values.size))
    return mean, std_error


def null_space_prior_mass(basis, sel, prior):
    """tr[Gamma_prior - (S^T Phi)^+ (S^T Phi) Gamma_prior], prior variance the sensors cannot see."""
    return null_space_mass(sel.operator(basis.phi), prior)


def null_space_mass(a, prior):
    a, gamma = _operator(a, prior)
    a_pinv = pseudo_inverse(a)
    return float(np.trace(gamma - a_pinv @ a @ gamma))
