#!/usr/bin/env python3
"""
D-optimal objectives, placement guarantees and the placement dispatcher.

Theta_D(S) = log det Gamma_post(S) and the information gain
J_D(S) = Theta_D(empty) - Theta_D(S) = log det(I + G[S, S]) with
G = Phi Gamma_prior Phi^T / sigma^2. The four placement algorithms live in
placer_cpqr / placer_qmap / placer_greedy_d / placer_brute_d.
"""

import math

import numpy as np

from sensing.datasets import NoiseModel
from sensing.estimate import build_posterior, prior_matrix
from sensing.numerics import econ_svd, logdet_spd, sqrtm_psd
from sensing.selection import SensorSelection, dice  # noqa: F401  (re-exported)
from sensing.utils import InputError, NumericalError, substreams

METHODS = ("cpqr", "qmap", "greedy_d", "brute_d", "random")
GAIN_RTOL = 1e-9


def _sigma(noise):
    if not isinstance(noise, NoiseModel):
        raise InputError("placement needs an iid NoiseModel")
    if noise.sigma <= 0:
        raise InputError(f"noise sigma must be > 0 for D-optimal placement, got {noise.sigma}")
    return noise.sigma


def theta_d(basis, sel, prior, noise):
    """log det Gamma_post(S); the empty selection gives log det Gamma_prior."""
    _sigma(noise)
    if sel.k == 0:
        return logdet_spd(prior_matrix(prior))
    return logdet_spd(build_posterior(basis, sel, prior, noise).gamma_post)


def d_gram(basis, prior, noise):
    """G = Phi Gamma_prior Phi^T / sigma^2, one row and column per location."""
    sigma = _sigma(noise)
    gamma = prior_matrix(prior)
    if gamma.shape[0] != basis.n_modes:
        raise InputError(f"prior is {gamma.shape[0]}x{gamma.shape[0]} but the basis has {basis.n_modes} modes")
    g = basis.phi @ gamma @ basis.phi.T / sigma ** 2
    return 0.5 * (g + g.T)


def gain_from_gram(g, indices):
    """J_D(S) = log det(I + G[S, S])."""
    idx = np.asarray(indices, dtype=int)
    if idx.size == 0:
        return 0.0
    return logdet_spd(np.eye(idx.size) + g[np.ix_(idx, idx)])


def regularized_basis(basis, prior, noise):
    """F = sigma^-1 Gamma_prior^(1/2) Phi^T (n x N)."""
    sigma = _sigma(noise)
    gamma = prior_matrix(prior)
    if gamma.shape[0] != basis.n_modes:
        raise InputError(f"prior is {gamma.shape[0]}x{gamma.shape[0]} but the basis has {basis.n_modes} modes")
    return sqrtm_psd(gamma) @ basis.phi.T / sigma


def info_gain(basis, sel, prior, noise):
    """Theta_D(empty) - Theta_D(S), checked against log det(I + F_S^T F_S)."""
    if sel.k == 0:
        return 0.0
    gain = theta_d(basis, SensorSelection((), sel.n_locations), prior, noise) - theta_d(basis, sel, prior, noise)
    f_s = regularized_basis(basis, prior, noise)[:, sel.as_array()]
    dual = logdet_spd(np.eye(sel.k) + f_s.T @ f_s)
    if abs(gain - dual) > GAIN_RTOL * max(abs(dual), 1.0):
        raise NumericalError(f"information gain {gain:.12e} disagrees with the log det(I + F^T F) form {dual:.12e}")
    return float(gain)


def marginal_gain(basis, sel, location, prior, noise):
    """J_D(S + {location}) - J_D(S)."""
    if location in sel.indices:
        return 0.0
    g = d_gram(basis, prior, noise)
    return gain_from_gram(g, sel.indices + (int(location),)) - gain_from_gram(g, sel.indices)


def cpqr_bound(n_locations, k):
    """q(N, k) = sqrt(N - k) 2^k, the CPQR bound on ||(S^T Phi)^-1||_2 and the Q-MAP factor."""
    if not 0 < k <= n_locations:
        raise InputError(f"bound needs 0 < k <= N, got k={k}, N={n_locations}")
    return math.sqrt(n_locations - k) * 2.0 ** k


def qmap_gain_bounds(basis, prior, noise, k):
    """(lower, upper) bracket on J_D of the Q-MAP selection.

    lower = log det(I + Sigma_k^2 / q(N, k)^2), upper = log det(I + Sigma_k^2),
    Sigma_k the k largest singular values of F. With k = N every location
    is selected, q(N, N) = 0 and J_D equals the upper value exactly.
    """
    f = regularized_basis(basis, prior, noise)
    s = econ_svd(f).s[:k]
    q = cpqr_bound(basis.n_locations, k)
    upper = float(np.sum(np.log1p(s ** 2)))
    if q == 0.0:
        return upper, upper
    lower = float(np.sum(np.log1p(s ** 2 / q ** 2)))
    return lower, upper


def place_random(n_locations, k, seed):
    """k distinct locations drawn uniformly without replacement."""
    if not 0 <= k <= n_locations:
        raise InputError(f"cannot place {k} sensors on {n_locations} locations")
    rng = substreams(seed, 1)[0]
    picks = rng.choice(n_locations, size=k, replace=False)
    return SensorSelection(tuple(int(i) for i in picks), n_locations)


def place(method, basis, k, prior=None, noise=None, seed=0, verbose=False, **options):
    """Run one placement method and return its PlacementResult.

    options: use_rank1 / jobs (greedy_d), budget / jobs (brute_d).
    """
    from sensing.placer_brute_d import BruteDPlacer
    from sensing.placer_cpqr import CpqrPlacer
    from sensing.placer_greedy_d import GreedyDPlacer
    from sensing.placer_qmap import QmapPlacer
    from sensing.base_placer import RandomPlacer

    if method == "cpqr":
        placer = CpqrPlacer(basis, verbose=verbose)
    elif method == "qmap":
        placer = QmapPlacer(basis, prior, noise, verbose=verbose)
    elif method == "greedy_d":
        placer = GreedyDPlacer(basis, prior, noise, verbose=verbose,
                               use_rank1=options.get("use_rank1", True), jobs=options.get("jobs"))
    elif method == "brute_d":
        placer = BruteDPlacer(basis, prior, noise, verbose=verbose,
                              budget=options.get("budget"), jobs=options.get("jobs"))
    elif method == "random":
        placer = RandomPlacer(basis, seed=seed, verbose=verbose)
    else:
        raise InputError(f"unknown placement method {method!r}, expected one of {METHODS}")
    return placer.place(k)
