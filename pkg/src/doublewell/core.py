"""Physical constants, particle species and unit helpers.

Everything inside the package is SI. Energies are handed back to users in
kelvin (``E / k_B``) through :func:`to_kelvin`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from scipy import constants as _sc


class ConfigurationError(ValueError):
    """Raised for invalid user-facing configuration (unknown species, bad geometry...)."""


@dataclass(frozen=True)
class PhysicalConstants:
    epsilon0: float = _sc.epsilon_0
    kB: float = _sc.k
    hbar: float = _sc.hbar
    elementary_charge: float = _sc.e
    atomic_mass_unit: float = _sc.atomic_mass
    electron_mass: float = _sc.m_e

    def __post_init__(self):
        for name, value in vars(self).items():
            if not value > 0:
                raise ConfigurationError(f"constant {name} must be positive, got {value}")

    @property
    def coulomb(self) -> float:
        """1 / (4 pi epsilon0) in N m^2 / C^2."""
        return 1.0 / (4.0 * _sc.pi * self.epsilon0)


CONSTANTS = PhysicalConstants()

PROTON_MASS_U = _sc.physical_constants["proton mass in u"][0]
BERYLLIUM9_ATOMIC_MASS_U = 9.0121831


class SpeciesLabel(str, enum.Enum):
    PROTON = "proton"
    ANTIPROTON = "antiproton"
    BERYLLIUM9_ION = "beryllium9_ion"


@dataclass(frozen=True)
class ParticleSpecies:
    label: SpeciesLabel
    mass: float
    charge: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ConfigurationError(f"{self.label}: mass must be positive")
        if self.charge == 0:
            raise ConfigurationError(f"{self.label}: charge must be nonzero")

    @property
    def name(self) -> str:
        return self.label.value

    @property
    def sign(self) -> int:
        return 1 if self.charge > 0 else -1


def species(label, *, electron_mass_correction: bool = True,
            constants: PhysicalConstants = CONSTANTS) -> ParticleSpecies:
    """Return the :class:`ParticleSpecies` for ``label``.

    Parameters
    ----------
    label : str or SpeciesLabel
        ``"proton"``, ``"antiproton"`` or ``"beryllium9_ion"``.
    electron_mass_correction : bool
        Subtract one electron mass from the neutral 9Be atomic mass.
        Has no effect on the (anti-)proton.
    """
    try:
        label = SpeciesLabel(label)
    except ValueError:
        raise ConfigurationError(
            f"unknown species {label!r}; expected one of "
            f"{[s.value for s in SpeciesLabel]}") from None
    e = constants.elementary_charge
    u = constants.atomic_mass_unit
    if label is SpeciesLabel.PROTON:
        return ParticleSpecies(label, PROTON_MASS_U * u, e)
    if label is SpeciesLabel.ANTIPROTON:
        return ParticleSpecies(label, PROTON_MASS_U * u, -e)
    mass = BERYLLIUM9_ATOMIC_MASS_U * u
    if electron_mass_correction:
        mass -= constants.electron_mass
    return ParticleSpecies(label, mass, e)


def to_kelvin(energy, constants: PhysicalConstants = CONSTANTS):
    return energy / constants.kB


def from_kelvin(temperature, constants: PhysicalConstants = CONSTANTS):
    return temperature * constants.kB
