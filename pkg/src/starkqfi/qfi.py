"""Pure-state quantum Fisher information and the Cramer-Rao bound."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .propagator import NORM_TOL, EvolvedPair, evolve

CLAMP_FLOOR = -1e-10
# |F| below this fraction of 4<dpsi|dpsi> is cancellation noise, reported as 0
ROUNDOFF = 1e-13


class QfiError(ValueError):
    pass


@dataclass(frozen=True)
class QfiSample:
    t: float
    qfi: float

    @property
    def qfi_over_t2(self) -> float:
        return self.qfi / self.t**2 if self.t > 0 else float("nan")


def _clamp(value: float, scale: float = 1.0) -> float:
    if abs(value) <= ROUNDOFF * scale:
        return 0.0
    if value < 0.0:
        # round-off tolerance scales with the size of the cancelling terms
        if value < CLAMP_FLOOR * max(1.0, scale):
            raise QfiError(f"negative QFI {value:.3e} beyond round-off")
        return 0.0
    return value


def qfi_value(psi: np.ndarray, dpsi: np.ndarray, check_norm: bool = True) -> float:
    """``4 (<dpsi|dpsi> - |<psi|dpsi>|^2)``, clamped at zero."""
    if check_norm:
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > NORM_TOL:
            raise QfiError(f"state norm {norm:.12f} deviates from 1")
    dd = np.vdot(dpsi, dpsi).real
    ov = np.vdot(psi, dpsi)
    return _clamp(4.0 * (dd - abs(ov) ** 2), scale=4.0 * dd)


def clamp_series(values: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """Apply the scalar clamping rule elementwise."""
    return np.array([_clamp(float(v), float(s)) for v, s in zip(values, scales)])


def qfi_pure(pair: EvolvedPair) -> QfiSample:
    return QfiSample(pair.t, qfi_value(pair.psi, pair.dpsi))


def qfi_fd_oracle(H_builder: Callable[[float], object], psi0, t: float, h: float,
                  delta: float, richardson_rtol: float | None = 1e-4) -> QfiSample:
    """QFI from a central difference of the evolved state in ``h``.

    ``H_builder(h)`` returns the Hamiltonian at tilt ``h``. The difference is
    also taken at ``delta/2``; if the two estimates disagree beyond
    ``richardson_rtol`` the step is judged too large. The returned value is the
    Richardson combination ``(4 F(delta/2) - F(delta)) / 3``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")

    def derivative(d):
        plus = evolve(H_builder(h + d), psi0, [t], method="dense")[0]
        minus = evolve(H_builder(h - d), psi0, [t], method="dense")[0]
        return (plus - minus) / (2 * d)

    psi = evolve(H_builder(h), psi0, [t], method="dense")[0]
    f1 = qfi_value(psi, derivative(delta))
    f2 = qfi_value(psi, derivative(delta / 2))
    if richardson_rtol is not None:
        ref = max(abs(f2), 1e-300)
        if f1 + f2 > 1e-12 and abs(f1 - f2) / ref > richardson_rtol:
            raise QfiError(f"finite-difference step {delta} too large: {f1} vs {f2}")
    return QfiSample(float(t), max((4 * f2 - f1) / 3, 0.0))


def cramer_rao_bound(qfi: float, M: int = 1) -> float:
    """Smallest achievable standard deviation ``1 / sqrt(M F_Q)``."""
    if M < 1:
        raise ValueError("need at least one measurement")
    if not qfi > 0:
        raise QfiError("zero QFI: the parameter cannot be estimated")
    return 1.0 / np.sqrt(M * qfi)


def generator_variance(psi: np.ndarray, G) -> float:
    """``<G^2> - <G>^2``; the short-time QFI is ``4 t^2`` times this."""
    Gpsi = G @ psi
    mean = np.vdot(psi, Gpsi).real
    return float(np.vdot(Gpsi, Gpsi).real - mean**2)
