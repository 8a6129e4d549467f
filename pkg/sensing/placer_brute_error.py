#!/usr/bin/env python3
"""
Brute-force error-optimal placement.

The reference the placement heuristics are judged against: every k-subset
is tried and the one whose DEIM or MAP reconstructions of a set of noisy
states are closest, on average, to the noiseless states wins. Scoring uses
the full-state form of each estimator so a chunk of subsets is one batched
solve:

    MAP:  u_hat = u_bar + M[:, S] (M[S, S] + sigma^2 I)^-1 y_c,  M = Phi Gamma_prior Phi^T
    DEIM: u_hat = u_bar + Phi (S^T Phi)^+ y_c

Enumeration, budget and tie handling are shared with the D-optimal search.
"""

import numpy as np
from joblib import Parallel, delayed

from sensing.base_placer import BasePlacer
from sensing.estimate import prior_matrix
from sensing.numerics import EPS
from sensing.placer_brute_d import check_budget, first_in_band, reduce_chunks, subset_chunks
from sensing.utils import InputError, NumericalError, resolve_jobs

ESTIMATORS = ("deim", "map")
ERROR_CHUNK = 500


def _mean_errors(subsets, estimator, phi, gram, variance, centered_truth, centered_noisy, truth_norms):
    """Mean relative error over the samples for every subset of one chunk."""
    k = subsets.shape[1]
    y = centered_noisy[subsets]                                  # B x k x p
    if estimator == "map":
        blocks = gram[subsets[:, :, None], subsets[:, None, :]] + variance * np.eye(k)
        try:
            weights = np.linalg.solve(blocks, y)
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"MAP solve failed while scoring {k}-subsets: {e}")
        states = np.swapaxes(gram[:, subsets], 0, 1) @ weights     # B x N x p
    else:
        rows = phi[subsets]                                      # B x k x n
        pinv = np.linalg.pinv(rows, rcond=max(rows.shape[1:]) * EPS)
        states = phi @ (pinv @ y)
    misfit = np.linalg.norm(states - centered_truth, axis=1)     # B x p
    return (misfit / truth_norms).mean(axis=1)


def _chunk_best(subsets, *scoring):
    """(-best mean error, row of the first subset within the tie band) for one chunk."""
    values = -_mean_errors(subsets, *scoring)
    row = first_in_band(values)
    return float(values[row]), row


class ErrorOptimalPlacer(BasePlacer):
    """Exhaustive search for the k sensors with the smallest mean reconstruction error."""

    title = "Brute-force Error-optimal Sensor Placement"

    def __init__(self, basis, truth, noisy, estimator="map", prior=None, noise=None,
                 budget=None, jobs=None, verbose=True):
        if estimator not in ESTIMATORS:
            raise InputError(f"unknown estimator {estimator!r}, expected one of {ESTIMATORS}")
        truth = np.asarray(truth, dtype=np.float64)
        noisy = np.asarray(noisy, dtype=np.float64)
        if truth.ndim != 2 or truth.shape != noisy.shape or truth.shape[0] != basis.n_locations:
            raise InputError(f"truth {truth.shape} and noisy {noisy.shape} states must both be "
                             f"{basis.n_locations} x p")
        norms = np.linalg.norm(truth, axis=0)
        if truth.shape[1] == 0 or np.any(norms == 0):
            raise InputError("error-optimal placement needs at least one non-zero true state")
        if estimator == "map" and (prior is None or noise is None or noise.sigma <= 0):
            raise InputError("error-optimal MAP placement needs a prior and noise sigma > 0")
        self.estimator = estimator
        self.method_name = f"opt_{estimator}"
        self.truth = truth
        self.noisy = noisy
        self.truth_norms = norms
        self.prior = prior
        self.noise = noise
        self.budget = budget
        self.jobs = resolve_jobs(jobs)
        super().__init__(basis, verbose=verbose)

    def _scoring(self):
        phi = self.basis.phi
        offset = self.basis.offset()[:, None]
        gram, variance = None, 0.0
        if self.estimator == "map":
            gamma = prior_matrix(self.prior)
            if gamma.shape[0] != self.basis.n_modes:
                raise InputError(f"prior is {gamma.shape[0]}x{gamma.shape[0]} but the basis has "
                                 f"{self.basis.n_modes} modes")
            gram = phi @ gamma @ phi.T
            gram = 0.5 * (gram + gram.T)
            variance = self.noise.variance
        return (self.estimator, phi, gram, variance, self.truth - offset, self.noisy - offset, self.truth_norms)

    def place(self, k):
        n_loc = self.basis.n_locations
        count = check_budget(n_loc, k, self.budget, search="brute-force error-optimal placement")
        self._start(k)
        if k == 0:
            return self._result(())

        scoring = self._scoring()
        chunks = subset_chunks(n_loc, k, size=ERROR_CHUNK)
        self._log(f"Scoring {count} subsets on {self.truth.shape[1]} samples ({self.estimator.upper()})")

        scored = Parallel(n_jobs=self.jobs)(delayed(_chunk_best)(chunk, *scoring) for chunk in chunks)

        best_value, best_subset = reduce_chunks(chunks, scored)
        self._log(f"Best mean relative error = {-best_value:.4%}")
        return self._result(best_subset)


def place_error_optimal(basis, truth, noisy, k, estimator="map", prior=None, noise=None,
                        budget=None, jobs=None, verbose=False):
    return ErrorOptimalPlacer(basis, truth, noisy, estimator=estimator, prior=prior, noise=noise,
                              budget=budget, jobs=jobs, verbose=verbose).place(k)
