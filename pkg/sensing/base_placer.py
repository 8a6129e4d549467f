#!/usr/bin/env python3
"""
Base Placer class with shared functionality for all sensor placement methods.
Each placement method inherits from this and implements place(k).
"""

import time
from dataclasses import dataclass, field

from sensing.selection import SensorSelection, save_selection
from sensing.utils import InputError


@dataclass(frozen=True)
class PlacementResult:
    selection: SensorSelection
    method: str
    objective_trace: tuple = ()     # Theta_D after 0, 1, ..., k sensors (greedy only)
    elapsed: float = 0.0
    notes: tuple = field(default=(), compare=False)

    @property
    def indices(self):
        return self.selection.indices


class BasePlacer:
    """Base class for all placement methods."""

    # Subclasses should override these
    method_name = "unknown"
    title = "Sensor Placement"

    def __init__(self, basis, verbose=True):
        self.basis = basis
        self.verbose = verbose
        self.notes = []
        self._started = None
        if verbose:
            print(f"\n{self.title}")
            print("=" * 40)
            print(f"Locations: {basis.n_locations} | Modes: {basis.n_modes}")

    def place(self, k):
        """Main placement function - subclasses must implement."""
        raise NotImplementedError("Subclasses must implement place()")

    def _start(self, k):
        if not 0 <= k <= self.basis.n_locations:
            raise InputError(f"cannot place {k} sensors on {self.basis.n_locations} locations")
        self.notes = []
        self._started = time.perf_counter()
        self._log(f"Placing {k} sensors...")

    def _log(self, message):
        if self.verbose:
            print(message)

    def _warn(self, message):
        """Keep a note on the result and print it with a warning marker."""
        self.notes.append(message)
        if self.verbose:
            print(f"    ⚠ {message}")

    def _note_surplus(self, k):
        if k > self.basis.n_modes:
            self._warn(
                f"{k - self.basis.n_modes} sensors beyond the {self.basis.n_modes} modes follow "
                f"the deterministic pivot order (ascending index once the residual is exhausted)"
            )

    def _result(self, indices, objective_trace=()):
        elapsed = time.perf_counter() - self._started if self._started else 0.0
        selection = SensorSelection(tuple(int(i) for i in indices), self.basis.n_locations)
        self._log(f"Selected: {list(selection.indices)} ({elapsed:.2f}s)")
        return PlacementResult(
            selection=selection,
            method=self.method_name,
            objective_trace=tuple(float(t) for t in objective_trace),
            elapsed=elapsed,
            notes=tuple(self.notes),
        )

    def save_csv(self, result, path, seed=None):
        """Save the selection as one `method,k,N,seed,indices...` line."""
        save_selection(result.selection, path, result.method, seed)
        self._log(f"\nSaved {result.selection.k} sensors to {path}")
        return path


class RandomPlacer(BasePlacer):
    """Uniformly random sensors, the baseline of the risk sweep."""

    method_name = "random"
    title = "Random Sensor Placement"

    def __init__(self, basis, seed=0, verbose=True):
        self.seed = seed
        super().__init__(basis, verbose=verbose)

    def place(self, k):
        from sensing.placement import place_random

        self._start(k)
        return self._result(place_random(self.basis.n_locations, k, self.seed).indices)
