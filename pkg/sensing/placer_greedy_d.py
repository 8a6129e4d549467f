#!/usr/bin/env python3
"""
Greedy D-optimal placement.

Each step adds the unused location with the largest gain
Theta_D(S) - Theta_D(S + {l}) = log(1 + phi_l^T Gamma_post(S) phi_l / sigma^2).

The rank-1 path keeps Gamma_post(S) up to date with a Sherman-Morrison
step, so scoring every candidate costs O(N n^2) per sensor. The naive path
recomputes log det Gamma_post for each candidate set and exists to check it.
"""

import numpy as np
from joblib import Parallel, delayed

from sensing.base_placer import BasePlacer
from sensing.estimate import prior_matrix
from sensing.placement import theta_d
from sensing.selection import SensorSelection
from sensing.utils import resolve_jobs

TIE_BAND = 1e-9


def pick_best(gains, available):
    """Index of the largest gain among `available`; near-ties go to the smallest index."""
    candidates = np.flatnonzero(available)
    values = gains[candidates]
    best = values.max()
    tied = candidates[values >= best - TIE_BAND * max(1.0, abs(best))]
    return int(tied.min())


class GreedyDPlacer(BasePlacer):
    method_name = "greedy_d"
    title = "Greedy D-optimal Sensor Placement"

    def __init__(self, basis, prior, noise, use_rank1=True, jobs=None, verbose=True):
        self.prior = prior
        self.noise = noise
        self.use_rank1 = use_rank1
        self.jobs = resolve_jobs(jobs)
        super().__init__(basis, verbose=verbose)

    def place(self, k):
        self._start(k)
        gamma = prior_matrix(self.prior)
        theta = theta_d(self.basis, SensorSelection((), self.basis.n_locations), gamma, self.noise)
        if self.use_rank1:
            chosen, trace = self._place_rank1(k, gamma, theta)
        else:
            chosen, trace = self._place_naive(k, gamma, theta)
        return self._result(chosen, objective_trace=trace)

    def _place_rank1(self, k, gamma, theta):
        phi = self.basis.phi
        var = self.noise.variance
        post = gamma.copy()
        available = np.ones(self.basis.n_locations, dtype=bool)
        chosen, trace = [], [theta]

        for step in range(1, k + 1):
            # q[l] = phi_l^T Gamma_post phi_l for every location at once
            q = np.einsum("ij,jk,ik->i", phi, post, phi)
            gains = np.log1p(np.clip(q, 0.0, None) / var)
            best = pick_best(gains, available)
            chosen.append(best)
            available[best] = False

            g = post @ phi[best]
            post = post - np.outer(g, g) / (var + q[best])
            post = 0.5 * (post + post.T)
            theta -= gains[best]
            trace.append(theta)
            self._log(f"[{step}/{k}] location {best} (gain {gains[best]:.6f})")
        return chosen, trace

    def _place_naive(self, k, gamma, theta):
        n_loc = self.basis.n_locations
        available = np.ones(n_loc, dtype=bool)
        chosen, trace = [], [theta]

        for step in range(1, k + 1):
            candidates = np.flatnonzero(available)
            thetas = Parallel(n_jobs=self.jobs)(
                delayed(theta_d)(self.basis, SensorSelection(tuple(chosen) + (int(c),), n_loc), gamma, self.noise)
                for c in candidates
            )
            gains = np.full(n_loc, -np.inf)
            gains[candidates] = theta - np.asarray(thetas)
            best = pick_best(gains, available)
            chosen.append(best)
            available[best] = False
            theta -= gains[best]
            trace.append(theta)
            self._log(f"[{step}/{k}] location {best} (gain {gains[best]:.6f})")
        return chosen, trace


def place_greedy_d(basis, prior, noise, k, use_rank1=True, jobs=None, verbose=False):
    return GreedyDPlacer(basis, prior, noise, use_rank1=use_rank1, jobs=jobs, verbose=verbose).place(k)
