"""Gas-ensemble averaged acceleration PSD and the resulting dephasing.

The averaged PSD is

    S(w) = N int db p_b(b) int dv p_v(v) <|a(b, v; w)|^2>_angles / T

with ``p_b = 3 b^2 / L^3`` on ``[b_min, b_max]`` (not renormalized; the
missing probability ``b_min^3 / L^3`` is reported) and ``p_v`` either the
Maxwell-Boltzmann speed density or a point mass at the most probable speed
``v_bar = sqrt(2 k_B T_gas / m_gas)``. Angles are averaged in closed form.
A single global averaging time ``T`` (default ``10 tau``) is used.

The b-integral runs in ``ln b`` with composite Gauss-Legendre panels and is
cut where every Bessel factor has decayed by ``exp(-80)``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import numpy as np

from .channels import angle_averaged_power, check_compatibility, coupling_amplitude, exact_kernel, _shape_spectrum
from .core import K_B, EnvironmentParticle, InteractionChannel, InterferometerConfig
from .dephasing import QuadratureSettings, RegimeWarning, _prefactor, integrate_with_tail
from .specfun import BesselOrder, small_argument_limit
from .trajectory import transfer_envelope, transfer_function

__all__ = [
    "GasEnsemble",
    "VelocityModel",
    "BesselMode",
    "EnsembleResult",
    "MCEstimate",
    "RegimeError",
    "most_probable_speed",
    "maxwell_boltzmann_pdf",
    "impact_parameter_pdf",
    "averaged_psd",
    "averaged_psd_mc",
    "qgem_ensemble_dephasing",
    "cnot_ensemble_dephasing",
    "ensemble_dephasing",
]


class RegimeError(ValueError):
    """A Bessel approximation was requested outside its validity window."""


def most_probable_speed(gas_temperature: float, gas_mass: float) -> float:
    return math.sqrt(2.0 * K_B * gas_temperature / gas_mass)


def maxwell_boltzmann_pdf(v, gas_temperature: float, gas_mass: float):
    """Speed density ``4 pi v^2 (m / 2 pi k T)^{3/2} exp(-m v^2 / 2 k T)``."""
    v = np.asarray(v, dtype=float)
    a = gas_mass / (2.0 * K_B * gas_temperature)
    return 4.0 * np.pi * v**2 * (a / np.pi) ** 1.5 * np.exp(-a * v**2)


def impact_parameter_pdf(b, chamber_size: float):
    """``3 b^2 / L^3`` (zero outside ``[0, L]``)."""
    b = np.asarray(b, dtype=float)
    return np.where((b >= 0) & (b <= chamber_size), 3.0 * b**2 / chamber_size**3, 0.0)


@dataclass(frozen=True)
class GasEnsemble:
    """Dilute gas around the interferometer.

    Parameters
    ----------
    particle_count : float
        Mean number ``N`` of particles in the chamber volume ``L^3``. Real
        and non-negative so that sub-unit densities remain expressible.
    chamber_size : float
        Side ``L`` in m; also the default ``b_max``.
    gas_temperature : float
        In K.
    gas_mass : float
        Molecular mass in kg.
    b_min, b_max : float
        Impact-parameter range in m.
    """

    particle_count: float
    chamber_size: float
    gas_temperature: float
    gas_mass: float = 4.8e-26
    b_min: float = 1e-6
    b_max: float | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.particle_count) and self.particle_count >= 0.0):
            raise ValueError("particle count must be finite and non-negative")
        for name in ("chamber_size", "gas_temperature", "gas_mass", "b_min"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name.replace('_', ' ')} must be positive")
        if self.b_max is None:
            object.__setattr__(self, "b_max", float(self.chamber_size))
        if not self.b_min < self.b_max <= self.chamber_size:
            raise ValueError("need 0 < b_min < b_max <= chamber size")

    @classmethod
    def from_density(cls, number_density: float, chamber_size: float, gas_temperature: float, **kwargs) -> GasEnsemble:
        return cls(number_density * chamber_size**3, chamber_size, gas_temperature, **kwargs)

    @classmethod
    def from_pressure(cls, pressure: float, gas_temperature: float, chamber_size: float, **kwargs) -> GasEnsemble:
        return cls.from_density(pressure / (K_B * gas_temperature), chamber_size, gas_temperature, **kwargs)

    @property
    def volume(self) -> float:
        return self.chamber_size**3

    @property
    def number_density(self) -> float:
        return self.particle_count / self.volume

    @property
    def pressure(self) -> float:
        return self.number_density * K_B * self.gas_temperature

    @property
    def most_probable_speed(self) -> float:
        return most_probable_speed(self.gas_temperature, self.gas_mass)

    @property
    def probability_deficit(self) -> float:
        """``1 - int p_b db`` over ``[b_min, b_max]``."""
        return 1.0 - (self.b_max**3 - self.b_min**3) / self.volume


class VelocityModel(Enum):
    MAXWELL_BOLTZMANN = "maxwell-boltzmann"
    DIRAC_DELTA = "dirac-delta"


class BesselMode(Enum):
    EXACT = "exact"
    SMALL = "small"
    LARGE = "large"


def _small_kernel(order: BesselOrder, u: np.ndarray) -> np.ndarray:
    if order is BesselOrder.ZERO:
        raise RegimeError("the small-argument form does not cover K0")
    n = order.nu
    return 0.5 * math.gamma(n) * (2.0 / u) ** n * np.exp(u)


def _large_kernel(order: BesselOrder, u: np.ndarray) -> np.ndarray:
    return np.sqrt(np.pi / (2.0 * u))


_KERNELS = {BesselMode.EXACT: exact_kernel, BesselMode.SMALL: _small_kernel, BesselMode.LARGE: _large_kernel}

# orders entering each channel's spectrum
_ORDERS = {
    InteractionChannel.CC: (BesselOrder.ZERO, BesselOrder.ONE),
    InteractionChannel.CDP: (BesselOrder.HALF, BesselOrder.THREE_HALVES),
    InteractionChannel.CDI: (BesselOrder.THREE_HALVES, BesselOrder.FIVE_HALVES),
    InteractionChannel.DIC: (BesselOrder.THREE_HALVES, BesselOrder.FIVE_HALVES),
    InteractionChannel.DD: (BesselOrder.ONE, BesselOrder.TWO),
    InteractionChannel.DPC: (BesselOrder.ZERO, BesselOrder.ONE, BesselOrder.TWO),
}

# ln-b panels and Gauss-Legendre nodes per panel
_B_PANELS = 24
_B_NODES = 16
_V_NODES = 48
# speeds above this many v_bar carry < exp(-36) of the Maxwell-Boltzmann mass
_V_SPAN = 6.0
# Bessel arguments beyond this are dropped (exp(-2 x) < exp(-80))
_X_CUT = 40.0


def _gl(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _speed_nodes(gas: GasEnsemble, vmodel: VelocityModel) -> tuple[np.ndarray, np.ndarray]:
    vbar = gas.most_probable_speed
    if vmodel is VelocityModel.DIRAC_DELTA:
        return np.array([vbar]), np.array([1.0])
    x, w = _gl(_V_NODES)
    v = _V_SPAN * vbar * x
    return v, _V_SPAN * vbar * w * maxwell_boltzmann_pdf(v, gas.gas_temperature, gas.gas_mass)


def _validate(channel, interferometer, particle) -> InteractionChannel:
    channel = InteractionChannel.from_tag(channel)
    check_compatibility(channel, interferometer, particle)
    return channel


def _averaged_power(
    channel: InteractionChannel,
    gas: GasEnsemble,
    vmodel: VelocityModel,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    omega: np.ndarray,
    kernel,
    coupled,
    theta0,
) -> np.ndarray:
    """``int db p_b int dv p_v <|a|^2>`` for each omega (no N, no 1/T)."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    speeds, speed_weights = _speed_nodes(gas, vmodel)
    xi, wi = _gl(_B_NODES)
    lo = math.log(gas.b_min)
    # upper b where the fastest speed still has x below the cut
    b_cut = np.minimum(gas.b_max, np.maximum(_X_CUT * speeds.max() / omega, gas.b_min * (1 + 1e-12)))
    hi = np.log(b_cut)
    panel = (hi - lo) / _B_PANELS
    offsets = (np.arange(_B_PANELS)[:, None] + xi[None, :]).ravel()
    weights = np.tile(wi, _B_PANELS)
    lnb = lo + panel[:, None] * offsets[None, :]
    b = np.exp(lnb)
    jac = panel[:, None] * weights[None, :] * b * impact_parameter_pdf(b, gas.chamber_size)
    total = np.zeros_like(omega)
    for v, wv in zip(speeds, speed_weights):
        power = angle_averaged_power(
            channel, interferometer, particle, b, v, omega[:, None], kernel=kernel, coupled=coupled, theta0=theta0
        )
        total += wv * np.sum(jac * power, axis=1)
    return total


def averaged_psd(
    channel: InteractionChannel | str,
    gas: GasEnsemble,
    vmodel: VelocityModel,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    omega,
    *,
    averaging_time: float | None = None,
    bessel: BesselMode = BesselMode.EXACT,
    coupled: bool | None = None,
    theta0: float | None = None,
):
    """Ensemble-averaged PSD by deterministic quadrature.

    Parameters
    ----------
    averaging_time : float, optional
        Global ``T``; defaults to ``10 tau``.
    bessel : BesselMode
        Exact Bessel functions or one of the leading-order approximations.
        The approximations are applied without a validity check here; the
        ``*_ensemble_dephasing`` drivers do the checking.
    coupled, theta0
        Angle treatment of the interferometer dipole, see
        :func:`emdephase.channels.angle_averaged_power`.
    """
    channel = _validate(channel, interferometer, particle)
    T = averaging_time if averaging_time is not None else 10.0 * interferometer.total_time
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0.0):
        raise ValueError("angular frequency must be positive")
    if vmodel is VelocityModel.DIRAC_DELTA and gas.gas_temperature > 1e-4 * (1 + 1e-9):
        warnings.warn("the single-speed model is meant for gas temperatures up to 0.1 mK", RegimeWarning, stacklevel=2)
    power = _averaged_power(channel, gas, vmodel, interferometer, particle, w, _KERNELS[BesselMode(bessel)], coupled, theta0)
    out = gas.particle_count * power / T
    return float(out[0]) if w.ndim == 0 else out.reshape(w.shape)


class MCEstimate(NamedTuple):
    mean: float
    standard_error: float


_MC_BLOCK = 4096


def _mc_block(args):
    (channel, gas, vmodel, interferometer, particle, w, seed_seq, size, coupled, theta0, b_sampling) = args
    rng = np.random.Generator(np.random.Philox(seed_seq))
    L = gas.chamber_size
    if b_sampling == "log-uniform":
        span = math.log(gas.b_max / gas.b_min)
        b = gas.b_min * np.exp(span * rng.random(size))
        weight = impact_parameter_pdf(b, L) * b * span
    else:
        cubes = gas.b_min**3 + rng.random(size) * (gas.b_max**3 - gas.b_min**3)
        b = np.cbrt(cubes)
        weight = np.full(size, (gas.b_max**3 - gas.b_min**3) / L**3)
    vbar = gas.most_probable_speed
    if vmodel is VelocityModel.DIRAC_DELTA:
        v = np.full(size, vbar)
    else:
        v = (vbar / math.sqrt(2.0)) * np.linalg.norm(rng.standard_normal((size, 3)), axis=1)
    alpha, beta, th, gm = (2.0 * np.pi * rng.random(size) for _ in range(4))
    ca, cb = np.cos(alpha), np.cos(beta)
    if channel is InteractionChannel.DD and theta0 is not None:
        ct = np.full(size, math.cos(theta0))
    elif coupled:
        ct = np.abs(np.sin(alpha))
    else:
        ct = np.cos(th)
    cg = np.abs(np.sin(beta)) if coupled else np.cos(gm)
    x = b * w / v
    amp = coupling_amplitude(channel, interferometer, particle, b) * b / v
    a = _shape_spectrum(channel, x, ca, cb, ct, cg)
    decay = np.where(x > 700.0, 0.0, np.exp(-2.0 * np.minimum(x, 700.0)))
    return weight * amp**2 * np.abs(a) ** 2 * decay


def averaged_psd_mc(
    channel: InteractionChannel | str,
    gas: GasEnsemble,
    vmodel: VelocityModel,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    omega: float,
    *,
    samples: int,
    seed: int,
    averaging_time: float | None = None,
    coupled: bool | None = None,
    theta0: float | None = None,
    b_sampling: str = "log-uniform",
    workers: int = 1,
) -> MCEstimate:
    """Monte Carlo estimate of :func:`averaged_psd` at one frequency.

    Angles and speeds are drawn from their densities and the exact
    single-encounter spectrum is squared per draw. Impact parameters are
    drawn log-uniformly and reweighted by ``p_b`` (``b_sampling="prior"``
    draws from ``p_b`` itself, at much higher variance for steep channels).

    Each block of 4096 draws has its own Philox stream spawned from
    ``seed``; blocks are merged in order, so the result is bit-identical for
    any ``workers``.
    """
    channel = _validate(channel, interferometer, particle)
    if samples < 100:
        raise ValueError("Monte Carlo needs at least 100 samples")
    if b_sampling not in ("log-uniform", "prior"):
        raise ValueError("b_sampling must be 'log-uniform' or 'prior'")
    if coupled is None:
        coupled = channel is InteractionChannel.DD
    T = averaging_time if averaging_time is not None else 10.0 * interferometer.total_time
    sizes = [_MC_BLOCK] * (samples // _MC_BLOCK)
    if samples % _MC_BLOCK:
        sizes.append(samples % _MC_BLOCK)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    jobs = [
        (channel, gas, vmodel, interferometer, particle, float(omega), s, n, coupled, theta0, b_sampling)
        for s, n in zip(seeds, sizes)
    ]
    if workers <= 1:
        parts = [_mc_block(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_mc_block, jobs))
    values = np.concatenate(parts) * (gas.particle_count / T)
    return MCEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)))


@dataclass(frozen=True)
class EnsembleResult:
    """Ensemble dephasing with regime diagnostics.

    ``x_range`` is the span of ``b w / v_bar`` over ``[b_min, b_max]`` at
    ``w_min``.
    """

    gamma_n: float
    number_density: float
    channel: str
    bessel: str
    method: str
    omega_min: float
    x_range: tuple[float, float]
    probability_deficit: float
    estimated_error: float = 0.0


def _x_range(gas: GasEnsemble, interferometer: InterferometerConfig) -> tuple[float, float]:
    rate = interferometer.omega_min / gas.most_probable_speed
    return gas.b_min * rate, gas.b_max * rate


def _check_small(channel: InteractionChannel, gas, interferometer) -> None:
    _, x_hi = _x_range(gas, interferometer)
    orders = [o for o in _ORDERS[channel]]
    if BesselOrder.ZERO in orders:
        raise RegimeError(f"channel {channel.value} needs K0, which has no small-argument form; use exact Bessel")
    limit = min(1.0, min(small_argument_limit(o.nu) for o in orders))
    if x_hi >= limit:
        raise RegimeError(
            f"small-argument regime violated: b w_min / v_bar reaches {x_hi:.3g} (needs < {limit:.3g}); use exact Bessel"
        )


def _check_large(gas, interferometer) -> None:
    x_lo, _ = _x_range(gas, interferometer)
    if x_lo < 1.0:
        raise RegimeError(
            f"large-argument regime violated: b_min w_min / v_bar = {x_lo:.3g} < 1; use exact Bessel"
        )


def qgem_ensemble_dephasing(
    gas: GasEnsemble,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    *,
    channel: InteractionChannel | str = InteractionChannel.DD,
    bessel: BesselMode = BesselMode.SMALL,
    velocity: VelocityModel = VelocityModel.DIRAC_DELTA,
    averaging_time: float | None = None,
    theta0: float | None = None,
) -> EnsembleResult:
    """Dominant-mode ensemble dephasing for a neutral, dipolar interferometer.

    ``Gamma = (1/pi)(m/hbar)^2 S(w_min) F(w_min) w_min`` with the averaged
    PSD. The small-argument Bessel form is used unless ``bessel`` says
    otherwise; it is refused with :class:`RegimeError` when
    ``b w_min / v_bar`` reaches 1 anywhere on ``[b_min, b_max]``.
    """
    channel = _validate(channel, interferometer, particle)
    bessel = BesselMode(bessel)
    if bessel is BesselMode.SMALL:
        _check_small(channel, gas, interferometer)
    elif bessel is BesselMode.LARGE:
        _check_large(gas, interferometer)
    w = interferometer.omega_min
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        s = averaged_psd(
            channel, gas, velocity, interferometer, particle, w,
            averaging_time=averaging_time, bessel=bessel, theta0=theta0,
        )
    gamma = _prefactor(interferometer.mass) * s * transfer_function(interferometer, w) * w
    return EnsembleResult(
        gamma, gas.number_density, channel.value, bessel.value, "dominant-mode", w,
        _x_range(gas, interferometer), gas.probability_deficit,
    )


def ensemble_dephasing(
    gas: GasEnsemble,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    *,
    channel: InteractionChannel | str,
    bessel: BesselMode = BesselMode.EXACT,
    velocity: VelocityModel = VelocityModel.DIRAC_DELTA,
    averaging_time: float | None = None,
    theta0: float | None = None,
    settings: QuadratureSettings | None = None,
) -> EnsembleResult:
    """Full-frequency ensemble dephasing ``(1/pi)(m/hbar)^2 int S F dw``."""
    channel = _validate(channel, interferometer, particle)
    bessel = BesselMode(bessel)
    settings = settings or QuadratureSettings()
    kernel = _KERNELS[bessel]
    T = averaging_time if averaging_time is not None else 10.0 * interferometer.total_time
    w_min = interferometer.omega_min
    v_top = gas.most_probable_speed * (1.0 if velocity is VelocityModel.DIRAC_DELTA else _V_SPAN)
    rate = v_top / gas.b_min

    def spectrum(w):
        return gas.particle_count * _averaged_power(
            channel, gas, velocity, interferometer, particle, w, kernel, None, theta0
        ) / T

    def integrand(w):
        return spectrum(w) * transfer_function(interferometer, w)

    def envelope(w):
        return spectrum(w) * transfer_envelope(interferometer, w)

    width = settings.panel_fraction * math.pi / (2 * interferometer.accel_time + interferometer.hold_time)
    cap = w_min + settings.tail_span * rate
    if gas.particle_count == 0.0:
        value = error = 0.0
    else:
        value, error, _, _ = integrate_with_tail(integrand, envelope, w_min, cap, width, settings)
    scale = _prefactor(interferometer.mass)
    return EnsembleResult(
        scale * value, gas.number_density, channel.value, bessel.value, "full-quadrature", w_min,
        _x_range(gas, interferometer), gas.probability_deficit, scale * error,
    )


def cnot_ensemble_dephasing(
    gas: GasEnsemble,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    *,
    channel: InteractionChannel | str = InteractionChannel.CC,
    bessel: BesselMode = BesselMode.LARGE,
    velocity: VelocityModel = VelocityModel.DIRAC_DELTA,
    averaging_time: float | None = None,
    settings: QuadratureSettings | None = None,
) -> EnsembleResult:
    """Full-frequency ensemble dephasing for a charged interferometer.

    The large-argument Bessel form is used unless ``bessel`` says otherwise;
    it is refused with :class:`RegimeError` when ``b_min w_min / v_bar < 1``.
    """
    bessel = BesselMode(bessel)
    if bessel is BesselMode.LARGE:
        _check_large(gas, interferometer)
    elif bessel is BesselMode.SMALL:
        _check_small(InteractionChannel.from_tag(channel), gas, interferometer)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        return ensemble_dephasing(
            gas, interferometer, particle, channel=channel, bessel=bessel, velocity=velocity,
            averaging_time=averaging_time, settings=settings,
        )
