#!/usr/bin/env python3
"""
Brute-force D-optimal placement.

Enumerates every k-subset in lexicographic order and keeps the one with
the largest J_D(S) = log det(I + G[S, S]), G = Phi Gamma_prior Phi^T / sigma^2.
Subsets are scored in chunks with one batched Cholesky per chunk; chunks
may run in parallel and are reduced in enumeration order, so ties always
resolve to the lexicographically smallest subset.
"""

import itertools
import math

import numpy as np
from joblib import Parallel, delayed

from sensing.base_placer import BasePlacer
from sensing.placement import d_gram
from sensing.utils import BudgetExceeded, NumericalError, resolve_jobs

DEFAULT_BUDGET = 1_000_000
CHUNK_SIZE = 20_000
TIE_BAND = 1e-12


def check_budget(n_locations, k, budget=None, search="brute-force D-optimal placement"):
    """C(N, k), or BudgetExceeded when it is over `budget`."""
    budget = DEFAULT_BUDGET if budget is None else int(budget)
    count = math.comb(n_locations, k)
    if count > budget:
        raise BudgetExceeded(
            f"{search} needs C({n_locations},{k}) = {count} "
            f"evaluations, over the budget of {budget}"
        )
    return count


def subset_chunks(n_locations, k, size=CHUNK_SIZE):
    """Every k-subset of range(n_locations) in lexicographic order, as (<= size) x k int arrays."""
    combos = itertools.combinations(range(n_locations), k)
    chunks = []
    while True:
        block = list(itertools.islice(combos, size))
        if not block:
            return chunks
        chunks.append(np.asarray(block, dtype=int))


def first_in_band(values):
    """Row of the first value within TIE_BAND of the maximum."""
    best = values.max()
    return int(np.flatnonzero(values >= best - TIE_BAND * max(1.0, abs(best)))[0])


def reduce_chunks(chunks, scored):
    """(value, subset) of the best chunk winner; an earlier chunk keeps ties."""
    best_value, best_subset = -np.inf, None
    for chunk, (value, row) in zip(chunks, scored):
        if best_subset is None or value > best_value + TIE_BAND * max(1.0, abs(best_value)):
            best_value, best_subset = value, chunk[row]
    return best_value, best_subset


def _chunk_best(g, subsets):
    """(best J_D, row of the first subset within the tie band) for one chunk."""
    k = subsets.shape[1]
    blocks = g[subsets[:, :, None], subsets[:, None, :]] + np.eye(k)
    try:
        chol = np.linalg.cholesky(blocks)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"Cholesky failed while scoring {k}-subsets: {e}")
    values = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
    row = first_in_band(values)
    return float(values[row]), row


class BruteDPlacer(BasePlacer):
    method_name = "brute_d"
    title = "Brute-force D-optimal Sensor Placement"

    def __init__(self, basis, prior, noise, budget=None, jobs=None, verbose=True):
        self.prior = prior
        self.noise = noise
        self.budget = budget
        self.jobs = resolve_jobs(jobs)
        super().__init__(basis, verbose=verbose)

    def place(self, k):
        n_loc = self.basis.n_locations
        count = check_budget(n_loc, k, self.budget)
        self._start(k)
        if k == 0:
            return self._result(())

        g = d_gram(self.basis, self.prior, self.noise)
        chunks = subset_chunks(n_loc, k)
        self._log(f"Scoring {count} subsets in {len(chunks)} chunks")

        scored = Parallel(n_jobs=self.jobs)(delayed(_chunk_best)(g, chunk) for chunk in chunks)

        best_value, best_subset = reduce_chunks(chunks, scored)
        self._log(f"Best J_D = {best_value:.6f}")
        return self._result(best_subset)


def place_brute_d(basis, prior, noise, k, budget=None, jobs=None, verbose=False):
    return BruteDPlacer(basis, prior, noise, budget=budget, jobs=jobs, verbose=verbose).place(k)
