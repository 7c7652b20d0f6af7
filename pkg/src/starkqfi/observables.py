"""Site-resolved occupation diagnostics computed from Fock-basis weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import FockBasis


@dataclass(frozen=True)
class OccupancyProfile:
    """Mean occupation ``n_l`` and multiple occupancy ``<n_l (n_l - 1)>`` per site."""

    t: float
    n_l: np.ndarray
    N_l: np.ndarray

    @property
    def total_multi(self) -> float:
        return float(self.N_l.sum())


def occupancy_profile(psi: np.ndarray, basis: FockBasis, t: float = 0.0) -> OccupancyProfile:
    psi = np.asarray(psi)
    if psi.shape[-1] != basis.dimension:
        raise ValueError(f"state length {psi.shape[-1]} != basis dimension {basis.dimension}")
    weights = np.abs(psi) ** 2
    n = basis.states
    return OccupancyProfile(float(t), weights @ n, weights @ (n * (n - 1)))


def occupancy_series(states: np.ndarray, basis: FockBasis, t_grid) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(n_l, N_l)`` of shape ``(len(t_grid), L)`` for a stack of states."""
    states = np.asarray(states)
    if states.shape[0] != len(t_grid):
        raise ValueError("one state per grid time expected")
    weights = np.abs(states) ** 2
    n = basis.states.astype(float)
    return weights @ n, weights @ (n * (n - 1))


def time_averaged_multi_occupancy(states: np.ndarray, basis: FockBasis) -> float:
    """Mean over the given times of ``sum_l N_l``."""
    _, multi = occupancy_series(states, basis, range(len(states)))
    return float(multi.sum(axis=1).mean())
