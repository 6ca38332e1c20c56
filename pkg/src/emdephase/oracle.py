"""Time-domain cross-checks of the frequency-domain machinery.

:func:`phase_noise_mc` accumulates ``dphi = (m/hbar) int_0^tau a(t - t0) s(t) dt``
for random arrival times ``t0`` and reports the sample variance, the
brute-force counterpart of the dephasing integral. Arrivals are either one
per run in ``[-T/2, T/2]`` or a Poisson stream at rate ``1 / T``. :func:`periodogram_check`
compares the DFT of a sampled acceleration record with the closed-form
spectrum.

Random numbers come from Philox streams spawned per block of realizations
from one :class:`numpy.random.SeedSequence`; blocks are merged in order so
the outcome is independent of the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import signal, special

from .channels import _POWER, ChannelParams, acceleration_spectrum, acceleration_time
from .core import HBAR, Encounter, EnvironmentParticle, InteractionChannel, InterferometerConfig
from .ensemble import GasEnsemble, VelocityModel
from .trajectory import arm_separation

__all__ = [
    "PhaseNoiseEstimate",
    "NoiseRealization",
    "phase_noise_mc",
    "sample_realizations",
    "phase_noise_mc_gas",
    "periodogram_check",
    "max_time_step",
]

_BLOCK = 1024
_MAX_NODES = 5_000_000


@dataclass(frozen=True)
class PhaseNoiseEstimate:
    """Sample statistics of ``dphi``.

    ``truncation_bound`` bounds the relative acceleration dropped by the
    ``|t - t0| <= window * b / v`` cut.
    """

    variance: float
    standard_error: float
    mean: float
    mean_standard_error: float
    realizations: int
    dt: float
    truncation_bound: float


@dataclass(frozen=True)
class NoiseRealization:
    """One sampled encounter and its phase."""

    encounter: Encounter
    arrival_time: float
    dt: float
    phase: float


def max_time_step(config: InterferometerConfig, b: float, v: float) -> float:
    """Largest step resolving both the trajectory and the encounter."""
    return min(config.accel_time / 100.0, b / (100.0 * v))


def _truncation_bound(channel: InteractionChannel, window: float) -> float:
    # shape(s) <= (1 + s) / (1 + s^2)^p; relative to its peak near s ~ 1
    power = _POWER[channel]
    grow = 2.0 if channel is InteractionChannel.DPC else 1.0
    return (1 + window) ** grow / (1 + window**2) ** power


def _trapezoid_weights(n: int, dt: float) -> np.ndarray:
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    return w


def _stats(values: np.ndarray) -> tuple[float, float, float, float]:
    n = values.size
    mean = float(values.mean())
    centred = values - mean
    var = float(centred @ centred / (n - 1))
    m4 = float(np.mean(centred**4))
    se_var = math.sqrt(max(m4 - var * var * (n - 3) / (n - 1), 0.0) / n)
    return var, se_var, mean, math.sqrt(var / n)


def _spawn(seed: int, realizations: int) -> list[tuple[np.random.SeedSequence, int]]:
    sizes = [_BLOCK] * (realizations // _BLOCK)
    if realizations % _BLOCK:
        sizes.append(realizations % _BLOCK)
    return list(zip(np.random.SeedSequence(seed).spawn(len(sizes)), sizes))


def _run_blocks(fn, jobs, workers: int) -> np.ndarray:
    if workers <= 1:
        parts = [fn(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, jobs))
    return np.concatenate(parts)


def _phase_grid(p: ChannelParams, dt: float) -> tuple[np.ndarray, np.ndarray]:
    tau = p.interferometer.total_time
    n = int(math.ceil(tau / dt))
    if n > _MAX_NODES:
        raise ValueError(f"time grid would need {n} nodes; encounter too fast for direct sampling")
    t = np.linspace(0.0, tau, n + 1)
    weights = _trapezoid_weights(n, tau / n) * arm_separation(p.interferometer, t)
    return t, weights * (p.interferometer.mass / HBAR)


def _direct_phases(p: ChannelParams, t: np.ndarray, weights: np.ndarray, t0: np.ndarray, cut: float) -> np.ndarray:
    out = np.empty(t0.size)
    rows = max(1, 2_000_000 // t.size)
    for start in range(0, t0.size, rows):
        lag = t[None, :] - t0[start : start + rows, None]
        a = acceleration_time(p, lag)
        a = np.where(np.abs(lag) <= cut, a, 0.0)
        out[start : start + rows] = a @ weights
    return out


# Gaussian edge width in units of 1 / w_min; the window's spectrum at w_min is exp(-14^2 / 2)
_EDGE_SIGMA = 14.0


def _record_phases(p: ChannelParams, dt: float, cut: float, high_pass: bool) -> tuple[np.ndarray, np.ndarray, float]:
    """``dphi(t0)`` on a uniform grid over ``|t0 - tau/2| <= T/2 + cut``.

    The acceleration is not truncated. The record is multiplied by a box of
    half-width ``T/2 + cut`` convolved with a Gaussian, whose spectrum decays
    as a Gaussian; a hard or piecewise taper would leak the huge quasi-static
    part of ``dphi`` above ``w_min``. With ``high_pass`` frequencies below
    ``w_min`` are then removed.

    Returns ``(t0, phases, core)`` with ``core = T/2 + cut``.
    """
    cfg = p.interferometer
    tau = cfg.total_time
    core = 0.5 * p.encounter.T + cut
    sigma = _EDGE_SIGMA / cfg.omega_min
    n_s = int(math.ceil(tau / dt))
    step = tau / n_s
    t = np.arange(n_s + 1) * step
    weights = _trapezoid_weights(n_s, step) * arm_separation(cfg, t) * (cfg.mass / HBAR)
    n_lo = int(math.ceil((core + 8 * sigma) / step))
    t0 = 0.5 * tau + np.arange(-n_lo, n_lo + 1) * step
    if t0.size + t.size > _MAX_NODES:
        raise ValueError("phase record too long for the requested time step")
    # dphi(t0_j) = sum_k weights_k a(t_k - t0_j); lags span t[0]-t0[-1] .. t[-1]-t0[0]
    lags = np.arange(t.size + t0.size - 1) * step + (t[0] - t0[-1])
    phases = signal.fftconvolve(acceleration_time(p, lags), weights[::-1], mode="valid")[::-1]
    root = math.sqrt(2.0) * sigma
    offset = t0 - 0.5 * tau
    record = phases * 0.5 * (special.erf((offset + core) / root) - special.erf((offset - core) / root))
    if high_pass:
        size = int(2 ** math.ceil(math.log2(2 * record.size)))
        spec = np.fft.rfft(record, n=size)
        spec[2 * np.pi * np.fft.rfftfreq(size, d=step) < cfg.omega_min] = 0.0
        record = np.fft.irfft(spec, n=size)[: record.size]
    return t0, record, core


def _arrivals(p: ChannelParams, realizations: int, seed: int) -> np.ndarray:
    half = 0.5 * p.encounter.T
    mid = 0.5 * p.interferometer.total_time

    def draw(job):
        ss, size = job
        return np.random.Generator(np.random.Philox(ss)).uniform(mid - half, mid + half, size)

    return _run_blocks(draw, _spawn(seed, realizations), 1)


def _checked_step(p: ChannelParams, dt: float | None) -> float:
    e = p.encounter
    limit = max_time_step(p.interferometer, e.impact_parameter, e.speed)
    if dt is None:
        return limit
    if dt > limit * (1 + 1e-12):
        raise ValueError(f"time step {dt:g} s undersamples the motion (needs <= {limit:g} s)")
    return dt


def sample_realizations(
    p: ChannelParams, count: int, seed: int, *, dt: float | None = None, window: float = 50.0
) -> list[NoiseRealization]:
    """Individual unfiltered realizations with the arrival times of :func:`phase_noise_mc`."""
    dt = _checked_step(p, dt)
    t0 = _arrivals(p, count, seed)
    t, wts = _phase_grid(p, dt)
    phases = _direct_phases(p, t, wts, t0, window * p.encounter.impact_parameter / p.encounter.speed)
    return [NoiseRealization(p.encounter, float(a), dt, float(f)) for a, f in zip(t0, phases)]


def phase_noise_mc(
    p: ChannelParams,
    realizations: int,
    seed: int,
    *,
    dt: float | None = None,
    window: float = 50.0,
    high_pass: bool = False,
    shot_noise: bool = False,
    refine: bool = True,
    workers: int = 1,
) -> PhaseNoiseEstimate:
    """Monte Carlo variance of the encounter phase over random arrival times.

    Parameters
    ----------
    p : ChannelParams
        Encounter; the closest approach ``t0`` is drawn uniformly from
        ``tau/2 + [-T/2, T/2]``, a window centred on the pulse sequence.
    realizations : int
        At least 100.
    seed : int
    dt : float, optional
        Time step; defaults to :func:`max_time_step` and may not exceed it.
    window : float
        Acceleration is set to zero for ``|t - t0| > window * b / v``.
    high_pass : bool
        Remove angular frequencies below ``w_min`` from ``dphi(t0)`` before
        sampling, which mirrors the lower cutoff of the frequency-domain
        integral. Without it the estimator also sees the quasi-static part.
    shot_noise : bool
        Instead of one arrival per run, each run sums the phases of a
        Poisson number of arrivals at rate ``1 / T`` spread uniformly over
        ``|t0 - tau/2| <= T/2 + window * b / v``. This is the stationary process
        whose PSD is ``|a(w)|^2 / T``; its variance is
        ``(1/T) int dphi(t0)^2 dt0`` (Campbell), so it does not depend on
        the response fitting inside ``[-T/2, T/2]``.
    refine : bool
        Halve ``dt`` until the phases of the first block move by < 0.1%
        (direct single-arrival path only).
    workers : int
        Thread count; results do not depend on it.
    """
    if realizations < 100:
        raise ValueError("need at least 100 realizations")
    e = p.encounter
    dt = _checked_step(p, dt)
    cut = window * e.impact_parameter / e.speed
    if shot_noise:
        grid, phases, core = _record_phases(p, dt, cut, high_pass)
        rate = 2.0 * core / e.T

        def runs(job):
            ss, size = job
            rng = np.random.Generator(np.random.Philox(ss))
            counts = rng.poisson(rate, size)
            mid = 0.5 * p.interferometer.total_time
            hits = np.interp(rng.uniform(mid - core, mid + core, int(counts.sum())), grid, phases)
            return np.bincount(np.repeat(np.arange(size), counts), weights=hits, minlength=size)

        values = _run_blocks(runs, _spawn(seed, realizations), 1)
    elif high_pass:
        t0 = _arrivals(p, realizations, seed)
        grid, phases, _ = _record_phases(p, dt, cut, True)
        values = np.interp(t0, grid, phases)
    else:
        t0 = _arrivals(p, realizations, seed)
        if refine:
            probe = t0[: min(t0.size, 256)]
            while True:
                t, wts = _phase_grid(p, dt)
                t2, wts2 = _phase_grid(p, dt / 2)
                a = _direct_phases(p, t, wts, probe, cut)
                b = _direct_phases(p, t2, wts2, probe, cut)
                scale = np.sqrt(np.mean(b**2))
                if scale == 0.0 or np.sqrt(np.mean((a - b) ** 2)) <= 1e-3 * scale:
                    break
                dt /= 2
        t, wts = _phase_grid(p, dt)
        chunks = [t0[i : i + _BLOCK] for i in range(0, t0.size, _BLOCK)]
        values = _run_blocks(lambda c: _direct_phases(p, t, wts, c, cut), chunks, workers)
    var, se, mean, se_mean = _stats(values)
    return PhaseNoiseEstimate(var, se, mean, se_mean, realizations, dt, _truncation_bound(p.channel, window))


def _sample_encounters(gas: GasEnsemble, vmodel: VelocityModel, rng: np.random.Generator, count: int, coupled: bool):
    cubes = gas.b_min**3 + rng.random(count) * (gas.b_max**3 - gas.b_min**3)
    b = np.cbrt(cubes)
    vbar = gas.most_probable_speed
    if vmodel is VelocityModel.DIRAC_DELTA:
        v = np.full(count, vbar)
    else:
        v = (vbar / math.sqrt(2.0)) * np.linalg.norm(rng.standard_normal((count, 3)), axis=1)
    angles = 2 * np.pi * rng.random((count, 4))
    if coupled:
        angles[:, 2] = np.arccos(np.abs(np.sin(angles[:, 0])))
        angles[:, 3] = np.arccos(np.abs(np.sin(angles[:, 1])))
    return b, v, angles


def phase_noise_mc_gas(
    channel: InteractionChannel | str,
    gas: GasEnsemble,
    vmodel: VelocityModel,
    interferometer: InterferometerConfig,
    particle: EnvironmentParticle,
    realizations: int,
    seed: int,
    *,
    averaging_time: float | None = None,
    window: float = 50.0,
    coupled: bool | None = None,
    workers: int = 1,
) -> PhaseNoiseEstimate:
    """Phase variance for a gas: a Poisson number of independent encounters per run.

    Each run draws ``n ~ Poisson(N)`` encounters with ``b ~ p_b`` (restricted
    to ``[b_min, b_max]``), speeds from ``vmodel``, uniform angles and
    arrival times uniform in ``tau/2 + [-T/2, T/2]`` (``T`` defaults to
    ``10 tau``), and sums their phases. The variance is ``N`` times the
    single-encounter second moment, so it is linear in ``N``.
    """
    channel = InteractionChannel.from_tag(channel)
    if realizations < 100:
        raise ValueError("need at least 100 realizations")
    if coupled is None:
        coupled = channel is InteractionChannel.DD
    T = averaging_time if averaging_time is not None else 10.0 * interferometer.total_time
    probability = (gas.b_max**3 - gas.b_min**3) / gas.volume
    tau = interferometer.total_time

    def block(job):
        ss, size = job
        rng = np.random.Generator(np.random.Philox(ss))
        counts = rng.poisson(gas.particle_count * probability, size)
        out = np.zeros(size)
        for r, n in enumerate(counts):
            if n == 0:
                continue
            b, v, angles = _sample_encounters(gas, vmodel, rng, int(n), coupled)
            t0 = 0.5 * tau + rng.uniform(-T / 2, T / 2, int(n))
            for k in range(int(n)):
                enc = Encounter(b[k], v[k], *angles[k], averaging_time=T)
                p = ChannelParams(channel, interferometer, particle, enc)
                cut = window * b[k] / v[k]
                lo, hi = max(0.0, t0[k] - cut), min(tau, t0[k] + cut)
                if hi <= lo:
                    continue
                step = max_time_step(interferometer, b[k], v[k])
                m = max(2, int(math.ceil((hi - lo) / step)))
                t = np.linspace(lo, hi, m + 1)
                w = _trapezoid_weights(m, (hi - lo) / m) * arm_separation(interferometer, t)
                out[r] += (interferometer.mass / HBAR) * (acceleration_time(p, t - t0[k]) @ w)
        return out

    values = _run_blocks(block, _spawn(seed, realizations), workers)
    var, se, mean, se_mean = _stats(values)
    return PhaseNoiseEstimate(var, se, mean, se_mean, realizations, float("nan"), _truncation_bound(channel, window))


def periodogram_check(
    p: ChannelParams,
    record_length: float,
    dt: float,
    band: tuple[float, float] = (0.2, 5.0),
) -> float:
    """Worst relative deviation between a DFT periodogram and the closed-form PSD.

    The acceleration is sampled on ``[-record_length/2, record_length/2)``;
    ``dt |DFT|^2 dt / record_length`` is compared with ``|a(w)|^2 /
    record_length`` on the DFT bins inside ``band * v / b``. Both sides
    vanishing counts as zero deviation.
    """
    e = p.encounter
    scale = e.impact_parameter / e.speed
    if record_length < 20 * scale:
        raise ValueError("record must span at least 20 b/v")
    if dt > scale / 20:
        raise ValueError("time step must be at most b / (20 v) to resolve the band")
    n = int(round(record_length / dt))
    t = (np.arange(n) - n // 2) * dt
    a = acceleration_time(p, t)
    spectrum = dt * np.fft.rfft(a)
    omega = 2 * np.pi * np.fft.rfftfreq(n, d=dt)
    lo, hi = band[0] / scale, band[1] / scale
    mask = (omega >= lo) & (omega <= hi)
    if not mask.any():
        raise ValueError("no DFT bins inside the comparison band")
    measured = np.abs(spectrum[mask]) ** 2 / record_length
    expected = np.abs(acceleration_spectrum(p, omega[mask])) ** 2 / record_length
    both_zero = (measured == 0) & (expected == 0)
    if np.all(both_zero):
        return 0.0
    if np.all(expected == 0):
        return float("inf")
    dev = np.where(both_zero, 0.0, np.abs(measured - expected) / np.where(expected > 0, expected, np.inf))
    return float(np.max(dev))
