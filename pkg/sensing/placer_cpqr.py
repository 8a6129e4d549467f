#!/usr/bin/env python3
"""
Q-DEIM placement: the first k pivots of the column-pivoted QR of Phi^T.
"""

from sensing.base_placer import BasePlacer
from sensing.numerics import cpqr


class CpqrPlacer(BasePlacer):
    method_name = "cpqr"
    title = "CPQR (Q-DEIM) Sensor Placement"

    def place(self, k):
        self._start(k)
        self._note_surplus(k)
        if k == 0:
            return self._result(())
        pivots = cpqr(self.basis.phi.T).pivots
        return self._result(pivots[:k])


def place_cpqr(basis, k, verbose=False):
    return CpqrPlacer(basis, verbose=verbose).place(k)
