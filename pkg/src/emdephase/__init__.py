"""Dephasing of matter-wave interferometers by electromagnetic encounters.

Modules
-------
core        constants, interferometer/particle/encounter types
specfun     modified Bessel functions of the second kind and approximations
trajectory  arm separation and the interferometer transfer function
channels    acceleration profiles and spectra for the six couplings
dephasing   phase variance of a single encounter
ensemble    gas-averaged spectra and dephasing
witness     entangling phases and the PPT witness
oracle      time-domain Monte Carlo and periodogram cross-checks
cli         command-line interface
"""

from .channels import ChannelParams, acceleration_spectrum, acceleration_time, encounter_psd, optimal_angles
from .core import Encounter, EnvironmentParticle, InteractionChannel, InterferometerConfig
from .dephasing import DephasingResult, QuadratureSettings, dephasing, dephasing_trend, dominant_mode_dephasing
from .ensemble import GasEnsemble, VelocityModel, averaged_psd, ensemble_dephasing
from .trajectory import arm_separation, transfer_function
from .witness import detectable, entangling_phases, witness_expectation

__version__ = "0.1.0"

__all__ = [
    "ChannelParams",
    "DephasingResult",
    "Encounter",
    "EnvironmentParticle",
    "GasEnsemble",
    "InteractionChannel",
    "InterferometerConfig",
    "QuadratureSettings",
    "VelocityModel",
    "acceleration_spectrum",
    "acceleration_time",
    "arm_separation",
    "averaged_psd",
    "dephasing",
    "dephasing_trend",
    "detectable",
    "dominant_mode_dephasing",
    "encounter_psd",
    "ensemble_dephasing",
    "entangling_phases",
    "optimal_angles",
    "transfer_function",
    "witness_expectation",
]
