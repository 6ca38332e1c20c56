"""Symmetric Stern-Gerlach arm separation and its transfer function.

The relative acceleration of the two arms is ``+A, -A, 0, -A, +A`` on the
five pieces ``[0, t_a], [t_a, 2t_a], [2t_a, 2t_a+t_e], ...`` with
``A = dx / t_a**2``, so the separation rises to the plateau ``dx`` after
``2 t_a``, holds for ``t_e`` and closes again with zero relative velocity
at ``tau = 4 t_a + t_e``.

The transfer function is ``|int_0^tau s(t) exp(i w t) dt|^2``. In closed
form it reads ``dx^2 c^2 sinc^4(t_a w / 2) sinc^2(c w / 2)`` with
``c = 2 t_a + t_e``, which equals
``64 dx^2 sin^4(t_a w/2) sin^2(c w/2) / (w^6 t_a^4)`` and needs no special
handling as ``w -> 0``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import InterferometerConfig

__all__ = [
    "TrajectoryPhase",
    "trajectory_phases",
    "arm_separation",
    "relative_acceleration",
    "transfer_function",
    "transfer_envelope",
    "transfer_function_numeric",
    "TransferQuadratureError",
]


@dataclass(frozen=True)
class TrajectoryPhase:
    """One constant-acceleration piece of the right arm (left arm is negated)."""

    index: int
    start: float
    end: float
    right_arm_acceleration: float


def _boundaries(config: InterferometerConfig) -> np.ndarray:
    ta, te = config.accel_time, config.hold_time
    return np.array([0.0, ta, 2 * ta, 2 * ta + te, 3 * ta + te, 4 * ta + te])


def trajectory_phases(config: InterferometerConfig) -> list[TrajectoryPhase]:
    edges = _boundaries(config)
    lam = config.arm_acceleration
    signs = (1.0, -1.0, 0.0, -1.0, 1.0)
    return [TrajectoryPhase(i, edges[i], edges[i + 1], signs[i] * lam) for i in range(5)]


def _times(config: InterferometerConfig, t) -> np.ndarray:
    t = np.asarray(t)
    if t.dtype != np.longdouble:
        t = t.astype(float)
    tau = config.total_time
    # tolerate rounding at the right edge
    slack = 1e-12 * tau
    if np.any(~np.isfinite(t)) or np.any(t < -slack) or np.any(t > tau + slack):
        raise ValueError(f"time must lie in [0, tau={tau:g}]")
    return np.clip(t, 0.0, tau)


def _rising(config: InterferometerConfig, t: np.ndarray) -> np.ndarray:
    # keep extended precision when the caller asks for it
    real = t.dtype.type
    ta, dx = real(config.accel_time), real(config.max_separation)
    accel = dx / ta**2
    first = 0.5 * accel * t**2
    second = dx - 0.5 * accel * (2 * ta - t) ** 2
    return np.where(t <= ta, first, np.where(t <= 2 * ta, second, dx))


def arm_separation(config: InterferometerConfig, t):
    """Separation ``x_R - x_L`` in m at times ``t`` in ``[0, tau]``."""
    t = _times(config, t)
    s = _rising(config, np.minimum(t, t.dtype.type(config.total_time) - t))
    return float(s) if s.ndim == 0 else s


def relative_acceleration(config: InterferometerConfig, t):
    """Second derivative of :func:`arm_separation` (piecewise constant)."""
    t = _times(config, t)
    edges = _boundaries(config)
    accel = config.max_separation / config.accel_time**2
    piece = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, 4)
    out = accel * np.array([1.0, -1.0, 0.0, -1.0, 1.0])[piece]
    return float(out) if out.ndim == 0 else out


def _omega(omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if np.any(~np.isfinite(omega)) or np.any(omega <= 0.0):
        raise ValueError("angular frequency must be positive")
    return omega


def transfer_function(config: InterferometerConfig, omega):
    """Closed-form transfer function ``F(w)`` in m^2 s^2."""
    w = _omega(omega)
    ta, dx = config.accel_time, config.max_separation
    c = 2 * ta + config.hold_time
    # np.sinc(x) = sin(pi x) / (pi x)
    f = (dx * c) ** 2 * np.sinc(ta * w / (2 * np.pi)) ** 4 * np.sinc(c * w / (2 * np.pi)) ** 2
    return float(f) if f.ndim == 0 else f


def transfer_envelope(config: InterferometerConfig, omega):
    """Upper bound ``min(dx^2 c^2, 64 dx^2 / (w^6 t_a^4))`` on ``F``."""
    w = _omega(omega)
    ta, dx = config.accel_time, config.max_separation
    c = 2 * ta + config.hold_time
    env = np.minimum((dx * c) ** 2, 64.0 * dx**2 / (w**6 * ta**4))
    return float(env) if env.ndim == 0 else env


class TransferQuadratureError(ArithmeticError):
    """Direct Fourier quadrature missed its accuracy target."""

    def __init__(self, message: str, value: float, error: float):
        super().__init__(message)
        self.value = value
        self.error = error


def _gauss_legendre_extended(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [-1, 1] polished to long-double precision."""
    x = np.polynomial.legendre.leggauss(n)[0].astype(np.longdouble)
    one = np.longdouble(1)
    for _ in range(4):
        p0, p1 = np.ones_like(x), x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - one)
        x = x - p1 / dp
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - one)
    w = 2 / ((one - x * x) * dp * dp)
    return x, w


_RULES: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _RULES:
        _RULES[n] = _gauss_legendre_extended(n)
    return _RULES[n]


def _fourier_of_separation(config: InterferometerConfig, w: float, nodes: int) -> complex:
    x, wt = _rule(nodes)
    edges = _boundaries(config).astype(np.longdouble)
    w_ld = np.longdouble(w)
    total = np.clongdouble(0)
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi <= lo:
            continue
        # about two panels per oscillation period
        count = int(np.ceil(float(w_ld * (hi - lo)) / np.pi)) + 1
        panel_edges = lo + (hi - lo) * np.arange(count + 1, dtype=np.longdouble) / count
        a, b = panel_edges[:-1, None], panel_edges[1:, None]
        half = (b - a) / 2
        t = a + half * (x + 1)
        f = arm_separation(config, t.ravel()).reshape(t.shape)
        phase = w_ld * t
        re = np.sum(half * np.sum(wt * f * np.cos(phase), axis=1, keepdims=True))
        im = np.sum(half * np.sum(wt * f * np.sin(phase), axis=1, keepdims=True))
        total += re + 1j * im
    return complex(total)


def transfer_function_numeric(
    config: InterferometerConfig,
    omega: float,
    *,
    full_output: bool = False,
    max_relative_error: float = 1e-8,
):
    """Transfer function from direct quadrature of the arm separation.

    The separation is sampled through :func:`arm_separation` on composite
    Gauss-Legendre panels (two per oscillation period) and multiplied by
    ``exp(i w t)``, all in long-double arithmetic. The five piece integrals
    are each far larger than their sum at high frequency, so extended
    precision is what keeps the cancellation harmless. Serves as the oracle
    for :func:`transfer_function`.

    Returns
    -------
    value : float
        ``|int_0^tau s(t) exp(i w t) dt|^2``.
    error : float, optional
        Difference between a 20- and a 28-node rule, returned with
        ``full_output``.
    """
    w = float(_omega(omega))
    coarse = _fourier_of_separation(config, w, 20)
    fine = _fourier_of_separation(config, w, 28)
    value = abs(fine) ** 2
    error = abs(abs(coarse) ** 2 - value)
    scale = (config.max_separation * config.total_time) ** 2
    if error > max_relative_error * value and error > 1e-30 * scale:
        raise TransferQuadratureError(
            f"Fourier quadrature at w={w:g} reached only {error:.3g} absolute error", value, error
        )
    return (value, error) if full_output else value
