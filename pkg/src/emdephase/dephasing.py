"""Phase variance from an acceleration PSD and the interferometer transfer function.

The dephasing is

    Gamma = (1/2pi) (m/hbar)^2 int_{|w| >= w_min} S(w) F(w) dw
          = (1/pi)  (m/hbar)^2 int_{w_min}^inf S(w) F(w) dw,

where both signs of frequency contribute because ``S`` and ``F`` are even.
``S`` carries ``1/m^2`` so the mass cancels.

The integral is evaluated by a vectorized adaptive Gauss-Kronrod (7, 15)
rule on panels no wider than a fraction of the ``sin^2`` oscillation
period of ``F``. The upper limit is the first point where a rigorous tail
bound, built from the ``F`` envelope, falls below the tolerance, capped at
``x = b w / v`` forty units above its lower end.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .channels import ChannelParams, encounter_psd
from .core import HBAR
from .trajectory import transfer_envelope, transfer_function

__all__ = [
    "QuadratureSettings",
    "DephasingResult",
    "ConvergenceError",
    "RegimeWarning",
    "integrate_panels",
    "dephasing",
    "dominant_mode_dephasing",
    "dephasing_trend",
    "SWEEP_VARIABLES",
]


class RegimeWarning(UserWarning):
    """Inputs lie outside the regime the model is built for."""


class ConvergenceError(ArithmeticError):
    """Adaptive quadrature ran out of subdivisions.

    Attributes
    ----------
    value : float
        Best estimate reached.
    error : float
        Its absolute error estimate.
    """

    def __init__(self, message: str, value: float, error: float):
        super().__init__(message)
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadratureSettings:
    """Controls for :func:`dephasing`.

    Parameters
    ----------
    relative_tolerance : float
        Target relative error, in ``(0, 1e-2]``.
    max_subdivisions : int
        Cap on panel bisections before :class:`ConvergenceError`.
    panel_fraction : float
        Initial panel width as a fraction of ``pi / (2 t_a + t_e)``; at most
        0.5.
    tail_span : float
        Cap on the upper limit, in units of ``v / b`` above ``w_min``.
    """

    relative_tolerance: float = 1e-6
    max_subdivisions: int = 200_000
    panel_fraction: float = 0.5
    tail_span: float = 40.0

    def __post_init__(self) -> None:
        if not 0.0 < self.relative_tolerance <= 1e-2:
            raise ValueError("relative_tolerance must lie in (0, 1e-2]")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be at least 1")
        if not 0.0 < self.panel_fraction <= 0.5:
            raise ValueError("panel_fraction must lie in (0, 0.5]")
        if not self.tail_span > 0.0:
            raise ValueError("tail_span must be positive")


@dataclass(frozen=True)
class DephasingResult:
    """Dephasing with quadrature diagnostics."""

    gamma_n: float
    estimated_error: float
    omega_min: float
    omega_max: float
    panels: int


# Gauss-Kronrod 15-point nodes on [0, 1] (symmetric) and weights
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GAUSS = np.zeros(15)
_GAUSS[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk_panels(f: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    y = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    kron = half * (y @ _KRONROD)
    gauss = half * (y @ _GAUSS)
    return kron, np.abs(kron - gauss)


def integrate_panels(
    f: Callable[[np.ndarray], np.ndarray],
    lower: float,
    upper: float,
    panel_width: float,
    relative_tolerance: float = 1e-6,
    max_subdivisions: int = 200_000,
    absolute_tolerance: float = 0.0,
) -> tuple[float, float, int]:
    """Adaptive G7-K15 quadrature starting from uniform panels.

    ``f`` must accept a 1-d array of abscissae. Panels whose error estimate
    exceeds their share of the tolerance are bisected until the summed
    estimate meets ``max(relative_tolerance * |I|, absolute_tolerance)``.

    Returns
    -------
    value, error, panels
    """
    if not upper > lower:
        return 0.0, 0.0, 0
    count = max(1, int(math.ceil((upper - lower) / panel_width)))
    edges = np.linspace(lower, upper, count + 1)
    lo, hi = edges[:-1], edges[1:]
    vals, errs = _gk_panels(f, lo, hi)
    done_val = 0.0
    done_err = 0.0
    splits = 0
    while True:
        total = done_val + vals.sum()
        err = done_err + errs.sum()
        target = max(relative_tolerance * abs(total), absolute_tolerance)
        if err <= target or not np.isfinite(total):
            return float(total), float(err), int(lo.size + splits)
        share = target / max(lo.size, 1)
        bad = errs > share
        # always make progress on the worst panel
        bad[np.argmax(errs)] = True
        done_val += vals[~bad].sum()
        done_err += errs[~bad].sum()
        lo, hi = lo[bad], hi[bad]
        splits += lo.size
        if splits > max_subdivisions:
            raise ConvergenceError(
                f"quadrature did not converge within {max_subdivisions} subdivisions",
                float(total),
                float(err),
            )
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        vals, errs = _gk_panels(f, lo, hi)


def tail_bound_grid(bound: Callable[[np.ndarray], np.ndarray], lower: float, upper: float, points: int = 4000):
    """Cumulative upper tail ``int_w^upper bound`` on a log grid.

    Returns ``(grid, tail)``; trapezoids on a log grid are accurate to a few
    per cent for the smooth envelopes used here, ample for a cutoff choice.
    """
    grid = np.geomspace(lower, upper, points)
    y = bound(grid)
    pieces = 0.5 * (y[1:] + y[:-1]) * np.diff(grid)
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    return grid, tail


def integrate_with_tail(
    f: Callable[[np.ndarray], np.ndarray],
    envelope: Callable[[np.ndarray], np.ndarray],
    lower: float,
    cap: float,
    panel_width: float,
    settings: QuadratureSettings,
) -> tuple[float, float, float, int]:
    """Integrate ``f`` from ``lower`` up to where the envelope tail is negligible.

    ``envelope`` must bound ``|f|`` from above. The upper limit starts at the
    point where the envelope tail is below ``1e-3 * tol`` of the whole
    envelope integral and grows until the tail is below ``0.1 * tol`` of the
    integral actually accumulated, or reaches ``cap``.

    Returns
    -------
    value, error, upper, panels
    """
    tol = settings.relative_tolerance
    grid, tail = tail_bound_grid(envelope, lower, cap)
    whole = tail[0]
    if whole == 0.0:
        return 0.0, 0.0, lower, 0
    idx = int(np.searchsorted(-tail, -1e-3 * tol * whole))
    value = error = 0.0
    start = lower
    panels = 0
    while True:
        upper = float(grid[min(idx, grid.size - 1)])
        v, e, n = integrate_panels(
            f,
            start,
            upper,
            panel_width,
            tol,
            settings.max_subdivisions,
            absolute_tolerance=tol * abs(value),
        )
        value += v
        error += e
        panels += n
        start = upper
        remaining = tail[min(idx, grid.size - 1)]
        if remaining <= 0.1 * tol * abs(value) or idx >= grid.size - 1:
            return value, error, upper, panels
        idx = int(np.searchsorted(-tail, -0.05 * tol * abs(value)))
        if grid[min(idx, grid.size - 1)] <= start:
            idx = min(idx + 1, grid.size - 1)


def _prefactor(mass: float) -> float:
    return (mass / HBAR) ** 2 / math.pi


def _warn_regime(p: ChannelParams) -> None:
    tau = p.interferometer.total_time
    if p.encounter.T < tau:
        warnings.warn(
            f"averaging time T={p.encounter.T:.3g} s is shorter than tau={tau:.3g} s",
            RegimeWarning,
            stacklevel=3,
        )


def dephasing(p: ChannelParams, settings: QuadratureSettings | None = None) -> DephasingResult:
    """Dephasing ``Gamma_n`` of one encounter.

    Raises
    ------
    ConvergenceError
        If the adaptive quadrature exceeds ``settings.max_subdivisions``.
    """
    settings = settings or QuadratureSettings()
    _warn_regime(p)
    cfg = p.interferometer
    e = p.encounter
    w_min = cfg.omega_min
    rate = e.speed / e.impact_parameter
    x_min = w_min / rate

    # the Bessel decay exp(-2x) is factored out at x_min to avoid underflow
    def integrand(w):
        return encounter_psd(p, w, scaled=True) * np.exp(-2.0 * (w / rate - x_min)) * transfer_function(cfg, w)

    def envelope(w):
        return encounter_psd(p, w, scaled=True) * np.exp(-2.0 * (w / rate - x_min)) * transfer_envelope(cfg, w)

    width = settings.panel_fraction * math.pi / (2 * cfg.accel_time + cfg.hold_time)
    cap = w_min + settings.tail_span * rate
    scale = _prefactor(cfg.mass) * math.exp(-2.0 * x_min)
    try:
        value, error, upper, panels = integrate_with_tail(integrand, envelope, w_min, cap, width, settings)
    except ConvergenceError as exc:
        raise ConvergenceError(str(exc), scale * exc.value, scale * exc.error) from None
    return DephasingResult(scale * value, scale * error, w_min, upper, panels)


def dominant_mode_dephasing(p: ChannelParams) -> float:
    """Single-bin estimate ``(1/pi)(m/hbar)^2 S(w_min) F(w_min) w_min``.

    An order-of-magnitude estimator; it counts the lowest resolvable
    frequency bin of width ``w_min`` at both signs of frequency.
    """
    _warn_regime(p)
    cfg = p.interferometer
    w = cfg.omega_min
    return _prefactor(cfg.mass) * encounter_psd(p, w) * transfer_function(cfg, w) * w


SWEEP_VARIABLES = ("v", "b", "dx", "q_int")


def _with_value(p: ChannelParams, name: str, value: float) -> ChannelParams:
    if name == "v":
        return replace(p, encounter=replace(p.encounter, speed=value))
    if name == "b":
        return replace(p, encounter=replace(p.encounter, impact_parameter=value))
    if name == "dx":
        return replace(p, interferometer=replace(p.interferometer, max_separation=value))
    if name == "q_int":
        return replace(p, interferometer=replace(p.interferometer, charge=value))
    raise ValueError(f"unknown sweep variable {name!r}; expected one of {', '.join(SWEEP_VARIABLES)}")


def dephasing_trend(
    p: ChannelParams,
    name: str,
    grid: Sequence[float] | Iterable[float],
    settings: QuadratureSettings | None = None,
    workers: int = 1,
) -> list[tuple[float, DephasingResult]]:
    """Dephasing over a one-parameter sweep, returned in grid order.

    Parameters
    ----------
    p : ChannelParams
        Base point. A ``None`` averaging time keeps following ``b / v``.
    name : {"v", "b", "dx", "q_int"}
    grid : sequence of float
    workers : int
        Thread count; the output order never depends on it.
    """
    values = [float(x) for x in grid]
    if not values:
        raise ValueError("sweep grid is empty")
    points = [_with_value(p, name, x) for x in values]
    if workers <= 1:
        results = [dephasing(q, settings) for q in points]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda q: dephasing(q, settings), points))
    return list(zip(values, results))
