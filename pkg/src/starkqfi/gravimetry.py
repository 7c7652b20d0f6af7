"""Conversion of dimensionless QFI plateaus into gravimetric sensitivity.

Energies in the simulation are measured in units of the tunnelling ``J`` with
``hbar = 1``, so a plateau value ``p = F_Q / t^2`` has units ``1/J^2`` when
time is in ``hbar/J``. Restoring SI units gives
``F_Q[1/Joule^2] = p * (t / hbar)^2`` for an evolution time ``t`` in seconds.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import constants

RB87_MASS = 86.909180527 * constants.atomic_mass  # kg


@dataclass(frozen=True)
class PhysicalSetup:
    """Atom and lattice parameters. Defaults: Rb-87 in a 1064 nm lattice."""

    atom_mass: float = RB87_MASS
    lattice_wavelength: float = 1064e-9
    V0_over_ER: float = 10.0
    g_nominal: float = constants.g
    measurements: int = 1
    coherence_time: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.V0_over_ER < 5:
            warnings.warn(
                f"lattice depth {self.V0_over_ER} E_R is shallow for the tight-binding formula",
                stacklevel=3,
            )

    def to_dict(self) -> dict:
        return asdict(self)


def recoil_energy(setup: PhysicalSetup) -> float:
    """``E_R = hbar^2 k^2 / 2m`` with ``k = 2 pi / lambda_L``, in Joules."""
    k = 2 * np.pi / setup.lattice_wavelength
    return constants.hbar**2 * k**2 / (2 * setup.atom_mass)


def hubbard_J_tilde(V0_over_ER: float) -> float:
    """Tunnelling in recoil units from the deep-lattice approximation."""
    if V0_over_ER <= 0:
        raise ValueError("lattice depth must be positive")
    if V0_over_ER < 5:
        warnings.warn("tight-binding formula is unreliable below 5 E_R", stacklevel=2)
    return 4 / np.sqrt(np.pi) * V0_over_ER**0.75 * np.exp(-2 * np.sqrt(V0_over_ER))


def hubbard_J(setup: PhysicalSetup, si: bool = False) -> float:
    """Tunnelling ``J`` in units of ``E_R`` (or Joules with ``si=True``)."""
    J = hubbard_J_tilde(setup.V0_over_ER)
    return J * recoil_energy(setup) if si else J


def gradient_from_g(setup: PhysicalSetup, g: float | None = None) -> dict:
    """Tilt per site ``h = m g lambda_L / 2`` in Joules, recoil units and J units."""
    g = setup.g_nominal if g is None else g
    h_si = setup.atom_mass * g * setup.lattice_wavelength / 2
    ER = recoil_energy(setup)
    return {"joule": h_si, "recoil": h_si / ER, "J": h_si / hubbard_J(setup, si=True)}


def qfi_si(sim_plateau: float, t: float) -> float:
    """Plateau ``F_Q/t^2`` in J units to ``F_Q`` in ``1/Joule^2`` after ``t`` seconds.

    With dimensionless time ``J t / hbar`` and tilt ``h / J`` the factors of
    ``J`` cancel, leaving ``p (t / hbar)^2``.
    """
    return sim_plateau * (t / constants.hbar) ** 2


def sensitivity(setup: PhysicalSetup, sim_plateau: float, t: float | None = None) -> float:
    """Relative gravimetric precision ``delta g / g`` from the Cramer-Rao bound."""
    from .qfi import cramer_rao_bound

    t = setup.coherence_time if t is None else t
    if t <= 0:
        raise ValueError("evolution time must be positive")
    if t > setup.coherence_time * (1 + 1e-12):
        raise ValueError(f"evolution time {t} s exceeds coherence time {setup.coherence_time} s")
    delta_h = cramer_rao_bound(qfi_si(sim_plateau, t), setup.measurements)
    delta_g = delta_h / (setup.atom_mass * setup.lattice_wavelength / 2)
    return delta_g / setup.g_nominal


def sensitivity_table(setup: PhysicalSetup, rows: list[dict]) -> list[dict]:
    """Rows of ``{"N", "plateau_off", "plateau_res"}`` to precision rows with their ratio."""
    out = []
    for row in rows:
        off = sensitivity(setup, row["plateau_off"])
        res = sensitivity(setup, row["plateau_res"])
        out.append({"N": int(row["N"]), "dg_g_off": off, "dg_g_res": res, "ratio": res / off})
    return out


def format_table(table: list[dict]) -> str:
    lines = [f"{'N':>3}  {'dg/g (off-res)':>15}  {'dg/g (res)':>12}  {'ratio':>7}"]
    for row in table:
        lines.append(
            f"{row['N']:>3}  {row['dg_g_off']:>15.3e}  {row['dg_g_res']:>12.3e}  {row['ratio']:>7.3f}"
        )
    return "\n".join(lines)
