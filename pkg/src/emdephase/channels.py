"""Accelerations, spectra and single-encounter PSDs for the six couplings.

With ``s = v t / b`` every channel has the time profile
``a(t) = C * shape(s)``, where ``C`` collects the couplings and powers of
``b`` and ``shape`` carries the projection cosines:

====  ==============================================  ======================
tag   C                                               shape(s)
====  ==============================================  ======================
cc    k q_int q_ext / (m b^2)                         (ca + s cb) / (1+s^2)^{3/2}
cdp   2 k q_int d_ext / (m b^3)                       (ca + s cb) / (1+s^2)^2
cdi   2 k^2 q_int^2 alpha_pol / (m b^5)               (ca + s cb) / (1+s^2)^3
dpc   2 k q_ext d_int / (m b^3)                       (ca + s cb)(ct + s cg) / (1+s^2)^{5/2}
dic   2 k CM q_ext^2 R^3 / (m b^5)                    (ca + s cb) / (1+s^2)^3
dd    6 k d_ext d_int / (m b^4)                       ct (ca + s cb) / (1+s^2)^{5/2}
====  ==============================================  ======================

``k = 1/(4 pi eps0)``, ``CM = (eps_r - 1)/(eps_r + 2)``. Spectra are the
full-line transforms ``a(w) = int a(t) exp(-i w t) dt``; for the profile
``(ca + s cb) / (1+s^2)^{nu+1/2}`` this is

    C (b/v) 2 sqrt(pi) / (2^nu Gamma(nu+1/2)) x^nu [ca K_nu(x) - i cb K_{nu-1}(x)]

with ``x = b w / v``. The PSD of one encounter is ``|a(w)|^2 / T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .core import (
    K_E,
    Encounter,
    EnvironmentParticle,
    InteractionChannel,
    InterferometerConfig,
)
from .specfun import BesselOrder, bessel_k_scaled

__all__ = [
    "ChannelParams",
    "Angles",
    "coupling_amplitude",
    "acceleration_time",
    "acceleration_spectrum",
    "encounter_psd",
    "angle_averaged_power",
    "spectral_basis",
    "optimal_angles",
    "angle_map",
]

# exp(u) K_nu(u) as a function of (order, u)
ScaledKernel = Callable[[BesselOrder, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ChannelParams:
    """Everything needed to evaluate one channel for one encounter."""

    channel: InteractionChannel
    interferometer: InterferometerConfig
    particle: EnvironmentParticle
    encounter: Encounter

    def __post_init__(self) -> None:
        object.__setattr__(self, "channel", InteractionChannel.from_tag(self.channel))
        check_compatibility(self.channel, self.interferometer, self.particle)


def check_compatibility(
    channel: InteractionChannel, interferometer: InterferometerConfig, particle: EnvironmentParticle
) -> None:
    """Raise ``ValueError`` naming the missing coupling for ``channel``."""
    c, i, p = channel, interferometer, particle
    needs = {
        InteractionChannel.CC: [("interferometer charge", i.charge), ("particle charge", p.charge)],
        InteractionChannel.CDP: [("interferometer charge", i.charge), ("particle dipole", p.dipole)],
        InteractionChannel.CDI: [("interferometer charge", i.charge), ("particle polarizability", p.polarizability)],
        InteractionChannel.DPC: [("interferometer dipole", i.dipole), ("particle charge", p.charge)],
        InteractionChannel.DIC: [("particle charge", p.charge)],
        InteractionChannel.DD: [("interferometer dipole", i.dipole), ("particle dipole", p.dipole)],
    }[c]
    for name, value in needs:
        if value == 0.0:
            raise ValueError(f"channel {c.value} requires a nonzero {name}")
    if c is InteractionChannel.DIC and i.relative_permittivity <= 1.0:
        raise ValueError("channel dic requires relative permittivity > 1")


def coupling_amplitude(
    channel: InteractionChannel | str,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    b,
):
    """Prefactor ``C`` of the time profile, in m/s^2."""
    channel = InteractionChannel.from_tag(channel)
    i, p = interferometer, particle
    b = np.asarray(b, dtype=float)
    m = i.mass
    if channel is InteractionChannel.CC:
        return K_E * i.charge * p.charge / (m * b**2)
    if channel is InteractionChannel.CDP:
        return 2 * K_E * i.charge * p.dipole / (m * b**3)
    if channel is InteractionChannel.CDI:
        return 2 * K_E**2 * i.charge**2 * p.polarizability / (m * b**5)
    if channel is InteractionChannel.DPC:
        return 2 * K_E * p.charge * i.dipole / (m * b**3)
    if channel is InteractionChannel.DIC:
        return 2 * K_E * i.clausius_mossotti * p.charge**2 * i.radius**3 / (m * b**5)
    return 6 * K_E * p.dipole * i.dipole / (m * b**4)


# time-profile denominator exponent (1 + s^2)^{-power}
_POWER = {
    InteractionChannel.CC: 1.5,
    InteractionChannel.CDP: 2.0,
    InteractionChannel.CDI: 3.0,
    InteractionChannel.DPC: 2.5,
    InteractionChannel.DIC: 3.0,
    InteractionChannel.DD: 2.5,
}


def _projection(angle: float) -> float:
    # cos of a float near an odd multiple of pi/2 leaves a ~1e-16 residue; perpendicular means zero
    c = math.cos(angle)
    return 0.0 if abs(c) < 1e-15 else c


def _cosines(e: Encounter) -> tuple[float, float, float, float]:
    return _projection(e.alpha), _projection(e.beta), _projection(e.theta0), _projection(e.gamma)


def _shape(channel: InteractionChannel, s, ca, cb, ct, cg):
    base = (ca + s * cb) / (1.0 + s * s) ** _POWER[channel]
    if channel is InteractionChannel.DPC:
        return base * (ct + s * cg)
    if channel is InteractionChannel.DD:
        return base * ct
    return base


def acceleration_time(p: ChannelParams, t):
    """Acceleration ``a_x(t)`` in m/s^2, closest approach at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)):
        raise ValueError("time must be finite")
    e = p.encounter
    s = e.speed * t / e.impact_parameter
    amp = coupling_amplitude(p.channel, p.interferometer, p.particle, e.impact_parameter)
    a = amp * _shape(p.channel, s, *_cosines(e))
    return float(a) if a.ndim == 0 else a


def exact_kernel(order: BesselOrder, u: np.ndarray) -> np.ndarray:
    return np.asarray(bessel_k_scaled(order, u))


_ROOT_HALF_PI = math.sqrt(math.pi / 2)


def spectral_basis(channel: InteractionChannel | str, x, kernel: ScaledKernel = exact_kernel):
    """Angle-free spectral building blocks, scaled by ``exp(x)``.

    For the single-term channels returns ``(A, B)`` with
    ``a(w) = C (b/v) exp(-x) [ca A - i cb B]`` (times ``ct`` for dd).
    For dpc returns ``(X, Y, Z)`` with
    ``a(w) = C (b/v) exp(-x) [ca ct X + cb cg Y - i (ca cg + cb ct) Z]``.
    """
    channel = InteractionChannel.from_tag(channel)
    x = np.asarray(x, dtype=float)
    k = lambda order: kernel(order, x)  # noqa: E731
    if channel is InteractionChannel.CC:
        return 2 * x * k(BesselOrder.ONE), 2 * x * k(BesselOrder.ZERO)
    if channel is InteractionChannel.CDP:
        scale = _ROOT_HALF_PI * x**1.5
        return scale * k(BesselOrder.THREE_HALVES), scale * k(BesselOrder.HALF)
    if channel in (InteractionChannel.CDI, InteractionChannel.DIC):
        scale = 0.25 * _ROOT_HALF_PI * x**2.5
        return scale * k(BesselOrder.FIVE_HALVES), scale * k(BesselOrder.THREE_HALVES)
    k1 = k(BesselOrder.ONE)
    if channel is InteractionChannel.DD:
        return (2 / 3) * x**2 * k(BesselOrder.TWO), (2 / 3) * x**2 * k1
    return (
        (2 / 3) * x**2 * k(BesselOrder.TWO),
        (2 / 3) * x * (k1 - x * k(BesselOrder.ZERO)),
        (2 / 3) * x**2 * k1,
    )


def _shape_spectrum(channel: InteractionChannel, x, ca, cb, ct, cg, kernel: ScaledKernel = exact_kernel):
    """Transform of ``shape(s)`` in units of ``b / v``, scaled by ``exp(x)``."""
    basis = spectral_basis(channel, x, kernel)
    if channel is InteractionChannel.DPC:
        X, Y, Z = basis
        return (ca * ct * X + cb * cg * Y) - 1j * (ca * cg + cb * ct) * Z
    A, B = basis
    value = ca * A - 1j * cb * B
    return value * ct if channel is InteractionChannel.DD else value


def _positive_omega(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if np.any(~np.isfinite(omega)) or np.any(omega <= 0.0):
        raise ValueError("angular frequency must be positive")
    return omega


def acceleration_spectrum(p: ChannelParams, omega, *, scaled: bool = False):
    """Closed-form transform ``a(w) = int a(t) exp(-i w t) dt``.

    Parameters
    ----------
    p : ChannelParams
    omega : array_like
        Positive angular frequencies in rad/s.
    scaled : bool
        Return ``a(w) * exp(b w / v)`` instead, which stays finite where the
        plain value underflows.

    Returns
    -------
    complex or ndarray of complex
        The real part carries the ``cos(alpha)``-type terms and the
        imaginary part the ``cos(beta)``-type terms.
    """
    w = _positive_omega(omega)
    e = p.encounter
    x = e.impact_parameter * w / e.speed
    amp = coupling_amplitude(p.channel, p.interferometer, p.particle, e.impact_parameter) * e.impact_parameter / e.speed
    value = amp * _shape_spectrum(p.channel, x, *_cosines(e))
    if not scaled:
        value = np.where(x > 700.0, 0.0, value * np.exp(-np.minimum(x, 700.0)))
    return complex(value) if np.ndim(value) == 0 else value


def encounter_psd(p: ChannelParams, omega, *, scaled: bool = False):
    """Single-encounter PSD ``|a(w)|^2 / T`` in m^2 s^-4 Hz^-1.

    With ``scaled`` the factor ``exp(2 b w / v)`` is left in.
    """
    a = acceleration_spectrum(p, omega, scaled=scaled)
    psd = np.abs(a) ** 2 / p.encounter.T
    return float(psd) if np.ndim(psd) == 0 else psd


# averaged squared cosines for the basis terms, see angle_averaged_power
_UNCOUPLED_WEIGHTS = (0.5, 0.5)
_DD_COUPLED_WEIGHTS = (1 / 8, 1 / 4)
_DPC_WEIGHTS = (1 / 4, 1 / 4, 1 / 2)
_DPC_COUPLED_WEIGHTS = (1 / 8, 1 / 8, 1 / 2)


def angle_averaged_power(
    channel: InteractionChannel | str,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    b,
    v,
    omega,
    *,
    kernel: ScaledKernel = exact_kernel,
    coupled: bool | None = None,
    theta0: float | None = None,
):
    """``<|a(w)|^2>`` over uniformly distributed projection angles.

    The angle integrals are done in closed form: every uniform angle gives
    ``<cos^2> = 1/2`` and odd cross terms vanish. With ``coupled`` the
    interferometer-dipole angles follow ``cos(theta0) = |sin(alpha)|`` and
    ``cos(gamma) = |sin(beta)|``, giving ``<cos^2 a sin^2 a> = 1/8``.
    ``coupled`` defaults to True for dd and False for dpc. For dd a fixed
    ``theta0`` overrides the coupling.

    ``b``, ``v`` and ``omega`` broadcast against each other.
    """
    channel = InteractionChannel.from_tag(channel)
    b, v, w = np.broadcast_arrays(*(np.asarray(z, dtype=float) for z in (b, v, omega)))
    x = b * w / v
    amp = coupling_amplitude(channel, interferometer, particle, b) * b / v
    decay = np.where(x > 700.0, 0.0, np.exp(-2.0 * np.minimum(x, 700.0)))
    basis = spectral_basis(channel, x, kernel)
    if coupled is None:
        coupled = channel is InteractionChannel.DD
    if channel is InteractionChannel.DPC:
        weights = _DPC_COUPLED_WEIGHTS if coupled else _DPC_WEIGHTS
    elif channel is InteractionChannel.DD and theta0 is not None:
        c2 = _projection(theta0) ** 2
        weights = (c2 / 2, c2 / 2)
    elif channel is InteractionChannel.DD and coupled:
        weights = _DD_COUPLED_WEIGHTS
    elif channel is InteractionChannel.DD:
        # theta0 uniform and independent: <ct^2 ca^2> = 1/4
        weights = (0.25, 0.25)
    else:
        weights = _UNCOUPLED_WEIGHTS
    power = sum(wt * term**2 for wt, term in zip(weights, basis))
    return amp**2 * power * decay


class Angles(NamedTuple):
    """Projection angles in rad; ``theta0``/``gamma`` are None where unused."""

    alpha: float
    beta: float
    theta0: float | None = None
    gamma: float | None = None


def _objective(channel: InteractionChannel, u: float, alpha, beta):
    ca, cb = np.cos(alpha), np.cos(beta)
    ct = np.abs(np.sin(alpha))
    cg = np.abs(np.sin(beta))
    return np.abs(_shape(channel, u, ca, cb, ct, cg))


def _first_argmax(values: np.ndarray) -> tuple[int, int]:
    # ties (to rounding) resolve to the smallest alpha, then smallest beta
    best = values.max()
    flat = np.flatnonzero(values >= best * (1.0 - 1e-12))
    return np.unravel_index(flat[0], values.shape)


def angle_map(channel: InteractionChannel | str, u: float, grid: int = 181):
    """``|a_x|`` on a uniform ``grid x grid`` mesh of ``[0, pi]^2``.

    Returns ``(alphas, betas, values)`` with ``values[i, j]`` at
    ``(alphas[i], betas[j])`` normalized to a maximum of 1 (zero map stays 0).
    Interferometer-dipole angles follow the Pythagorean coupling.
    """
    channel = InteractionChannel.from_tag(channel)
    if not u > 0:
        raise ValueError("u must be positive")
    alphas = np.linspace(0.0, np.pi, grid)
    betas = np.linspace(0.0, np.pi, grid)
    values = _objective(channel, u, alphas[:, None], betas[None, :])
    top = values.max()
    return alphas, betas, values / top if top > 0 else values


def optimal_angles(channel: InteractionChannel | str, u: float, grid: int = 181, refine: int = 41) -> Angles:
    """Projection angles maximizing ``|a_x|`` at ``s = u``.

    A uniform ``grid x grid`` search over ``[0, pi]^2`` is followed by one
    local ``refine x refine`` search spanning one coarse step either side.
    For dpc and dd the interferometer-dipole angles are tied to alpha and
    beta through ``cos(theta0) = |sin(alpha)|``, ``cos(gamma) = |sin(beta)|``.
    """
    channel = InteractionChannel.from_tag(channel)
    if not u > 0:
        raise ValueError("u must be positive")
    alphas = np.linspace(0.0, np.pi, grid)
    betas = np.linspace(0.0, np.pi, grid)
    i, j = _first_argmax(_objective(channel, u, alphas[:, None], betas[None, :]))
    step = np.pi / (grid - 1)
    fine_a = np.clip(np.linspace(alphas[i] - step, alphas[i] + step, refine), 0.0, np.pi)
    fine_b = np.clip(np.linspace(betas[j] - step, betas[j] + step, refine), 0.0, np.pi)
    fine = _objective(channel, u, fine_a[:, None], fine_b[None, :])
    fi, fj = _first_argmax(fine)
    # the refined mesh contains the coarse winner, so it can only improve
    alpha, beta = float(fine_a[fi]), float(fine_b[fj])
    theta0 = gamma = None
    if channel in (InteractionChannel.DPC, InteractionChannel.DD):
        theta0 = float(np.arccos(min(1.0, abs(math.sin(alpha)))))
    if channel is InteractionChannel.DPC:
        gamma = float(np.arccos(min(1.0, abs(math.sin(beta)))))
    return Angles(alpha, beta, theta0, gamma)

