"""Physical constants, configuration records and shared geometry.

Everything is SI. Charges and dipole moments are stored as non-negative
magnitudes because the dephasing depends only on squared couplings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

__all__ = [
    "PhysicalConstants",
    "CONSTANTS",
    "EPS0",
    "HBAR",
    "E_CHARGE",
    "K_B",
    "G_NEWTON",
    "K_E",
    "MU_B",
    "E_MICRON",
    "InterferometerConfig",
    "EnvironmentParticle",
    "Encounter",
    "InteractionChannel",
    "distance",
    "tau",
    "omega_min",
]


@dataclass(frozen=True)
class PhysicalConstants:
    """CODATA 2018 values stored as literals."""

    vacuum_permittivity: float = 8.8541878128e-12
    reduced_planck: float = 1.054571817e-34
    elementary_charge: float = 1.602176634e-19
    boltzmann: float = 1.380649e-23
    gravitational: float = 6.67430e-11
    bohr_magneton: float = 9.2740100783e-24

    @property
    def coulomb_constant(self) -> float:
        return 1.0 / (4.0 * math.pi * self.vacuum_permittivity)


CONSTANTS = PhysicalConstants()
EPS0 = CONSTANTS.vacuum_permittivity
HBAR = CONSTANTS.reduced_planck
E_CHARGE = CONSTANTS.elementary_charge
K_B = CONSTANTS.boltzmann
G_NEWTON = CONSTANTS.gravitational
K_E = CONSTANTS.coulomb_constant
MU_B = CONSTANTS.bohr_magneton
# one elementary charge times one micrometre, in C m
E_MICRON = E_CHARGE * 1e-6


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return value


def _positive(name: str, value: float) -> float:
    value = _finite(name, value)
    if value <= 0.0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return value


def _magnitude(name: str, value: float) -> float:
    value = _finite(name, value)
    if value < 0.0:
        raise ValueError(f"{name} is stored unsigned; pass its magnitude, got {value!r}")
    return value


def _angle(name: str, value: float) -> float:
    value = _finite(name, value)
    if not 0.0 <= value < 2.0 * math.pi:
        raise ValueError(f"{name} must lie in [0, 2*pi), got {value!r}")
    return value


@dataclass(frozen=True)
class InterferometerConfig:
    """Test particle and symmetric Stern-Gerlach timing.

    Parameters
    ----------
    mass : float
        Test-particle mass in kg.
    max_separation : float
        Arm separation on the hold plateau, in m.
    accel_time : float
        Duration of each acceleration piece, in s.
    hold_time : float
        Duration of the free hold at maximum separation, in s.
    charge : float
        Charge magnitude of the test particle, in C.
    dipole : float
        Permanent dipole magnitude (along z), in C m.
    radius : float
        Sphere radius, in m. Used by the induced-dipole channel and as the
        default minimum impact parameter of a gas ensemble.
    relative_permittivity : float
        Dielectric constant of the sphere; must exceed 1 for the
        induced-dipole channel.
    """

    mass: float
    max_separation: float
    accel_time: float
    hold_time: float
    charge: float = 0.0
    dipole: float = 0.0
    radius: float = 1e-6
    relative_permittivity: float = 1.0

    def __post_init__(self) -> None:
        _positive("mass", self.mass)
        _positive("max_separation", self.max_separation)
        _positive("accel_time", self.accel_time)
        if _finite("hold_time", self.hold_time) < 0.0:
            raise ValueError(f"hold_time must be non-negative, got {self.hold_time!r}")
        _magnitude("charge", self.charge)
        _magnitude("dipole", self.dipole)
        _positive("radius", self.radius)
        _positive("relative_permittivity", self.relative_permittivity)

    @classmethod
    def from_field_gradient(
        cls,
        mass: float,
        gradient: float,
        accel_time: float,
        hold_time: float,
        g_factor: float = 2.0,
        **kwargs: float,
    ) -> InterferometerConfig:
        """Build a config from a spin in a magnetic-field gradient.

        Each arm accelerates with ``g_factor * MU_B * gradient / mass``; the
        two arms move apart at twice that rate, so the plateau separation is
        ``2 * lambda * accel_time**2``.
        """
        arm = g_factor * MU_B * abs(gradient) / _positive("mass", mass)
        return cls(mass, 2.0 * arm * accel_time**2, accel_time, hold_time, **kwargs)

    @property
    def total_time(self) -> float:
        return 4.0 * self.accel_time + self.hold_time

    @property
    def omega_min(self) -> float:
        return 2.0 * math.pi / self.total_time

    @property
    def arm_acceleration(self) -> float:
        """Acceleration magnitude of a single arm, ``max_separation / (2 t_a^2)``."""
        return self.max_separation / (2.0 * self.accel_time**2)

    @property
    def clausius_mossotti(self) -> float:
        eps = self.relative_permittivity
        return (eps - 1.0) / (eps + 2.0)


@dataclass(frozen=True)
class EnvironmentParticle:
    """A passing environmental particle (ion, polar molecule, atom)."""

    charge: float = 0.0
    dipole: float = 0.0
    polarizability: float = 0.0
    mass: float = 4.8e-26

    def __post_init__(self) -> None:
        _magnitude("charge", self.charge)
        _magnitude("dipole", self.dipole)
        _magnitude("polarizability", self.polarizability)
        _positive("particle mass", self.mass)
        if self.charge == 0.0 and self.dipole == 0.0 and self.polarizability == 0.0:
            raise ValueError("environment particle needs a charge, dipole or polarizability")


@dataclass(frozen=True)
class Encounter:
    """Straight-line flyby kinematics.

    ``averaging_time`` defaults to ``b / v`` when left as ``None``.
    """

    impact_parameter: float
    speed: float
    alpha: float = 0.0
    beta: float = 0.0
    theta0: float = 0.0
    gamma: float = 0.0
    averaging_time: float | None = None

    def __post_init__(self) -> None:
        _positive("impact parameter", self.impact_parameter)
        _positive("speed", self.speed)
        for name in ("alpha", "beta", "theta0", "gamma"):
            _angle(name, getattr(self, name))
        if self.averaging_time is not None:
            _positive("averaging time", self.averaging_time)

    @property
    def T(self) -> float:
        if self.averaging_time is None:
            return self.impact_parameter / self.speed
        return self.averaging_time


class InteractionChannel(Enum):
    """The six electromagnetic couplings, tagged as on the command line."""

    CC = "cc"
    CDP = "cdp"
    CDI = "cdi"
    DPC = "dpc"
    DIC = "dic"
    DD = "dd"

    @classmethod
    def from_tag(cls, tag: str | InteractionChannel) -> InteractionChannel:
        if isinstance(tag, cls):
            return tag
        try:
            return cls(str(tag).strip().lower().replace("(", "").replace(")", ""))
        except ValueError:
            tags = ", ".join(c.value for c in cls)
            raise ValueError(f"unknown channel {tag!r}; expected one of {tags}") from None


def distance(b, v, t):
    """Separation ``sqrt(b^2 + (v t)^2)`` of a straight-line flyby."""
    b, v, t = (np.asarray(x, dtype=float) for x in (b, v, t))
    if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v)) and np.all(np.isfinite(t))):
        raise ValueError("distance requires finite inputs")
    if np.any(b <= 0.0):
        raise ValueError("impact parameter must be positive")
    if np.any(v < 0.0):
        raise ValueError("speed must be non-negative")
    r = np.hypot(b, v * t)
    return float(r) if r.ndim == 0 else r


def tau(config: InterferometerConfig) -> float:
    """Total interferometer time ``4 t_a + t_e``."""
    return config.total_time


def omega_min(config: InterferometerConfig) -> float:
    """Lowest resolvable angular frequency ``2 pi / tau``."""
    return config.omega_min
