#!/usr/bin/env python3
"""
Q-MAP placement: column-pivoted QR on the prior-regularized basis
F = sigma^-1 Gamma_prior^(1/2) Phi^T instead of Phi^T.
"""

from sensing.base_placer import BasePlacer
from sensing.numerics import cpqr
from sensing.placement import regularized_basis


class QmapPlacer(BasePlacer):
    method_name = "qmap"
    title = "Q-MAP Sensor Placement"

    def __init__(self, basis, prior, noise, verbose=True):
        self.prior = prior
        self.noise = noise
        super().__init__(basis, verbose=verbose)

    def place(self, k):
        self._start(k)
        f = regularized_basis(self.basis, self.prior, self.noise)
        self._note_surplus(k)
        if k == 0:
            return self._result(())
        return self._result(cpqr(f).pivots[:k])


def place_qmap(basis, prior, noise, k, verbose=False):
    return QmapPlacer(basis, prior, noise, verbose=verbose).place(k)
