"""Modified Bessel functions of the second kind for the six orders in use.

Orders are half-integers ``nu = twice / 2`` with ``twice`` in 0..5. The
half-integer orders have elementary closed forms; K0 and K1 come from the
Cephes Chebyshev expansions in :mod:`scipy.special` and K2 follows by
recurrence. Everything is computed exponentially scaled first so that
``exp(u) K(u)`` stays representable far beyond the point where K itself
underflows.
"""

from __future__ import annotations

import math
from enum import IntEnum

import numpy as np
from scipy import special

__all__ = [
    "BesselOrder",
    "UNDERFLOW_ARGUMENT",
    "bessel_k",
    "bessel_k_scaled",
    "bessel_k_small",
    "bessel_k_large",
    "small_argument_limit",
]

# exp(-700) ~ 1e-304; beyond this K_nu is reported as an underflowed zero
UNDERFLOW_ARGUMENT = 700.0


class BesselOrder(IntEnum):
    """Order ``nu`` encoded exactly as the integer ``2 nu``."""

    ZERO = 0
    HALF = 1
    ONE = 2
    THREE_HALVES = 3
    TWO = 4
    FIVE_HALVES = 5

    @property
    def nu(self) -> float:
        return self.value / 2.0

    @classmethod
    def from_nu(cls, nu: float | BesselOrder) -> BesselOrder:
        if isinstance(nu, cls):
            return nu
        twice = 2.0 * float(nu)
        if twice != round(twice) or not 0 <= twice <= 5:
            raise ValueError(f"unsupported Bessel order {nu!r}")
        return cls(int(round(twice)))


def _argument(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(u)) or np.any(u <= 0.0):
        raise ValueError("Bessel argument must be positive and finite (K_nu diverges at 0)")
    return u


def _scaled(order: BesselOrder, u: np.ndarray) -> np.ndarray:
    if order is BesselOrder.ZERO:
        return special.k0e(u)
    if order is BesselOrder.ONE:
        return special.k1e(u)
    if order is BesselOrder.TWO:
        return special.k0e(u) + (2.0 / u) * special.k1e(u)
    lead = np.sqrt(np.pi / (2.0 * u))
    if order is BesselOrder.HALF:
        return lead
    if order is BesselOrder.THREE_HALVES:
        return lead * (1.0 + 1.0 / u)
    return lead * (1.0 + 3.0 / u + 3.0 / u**2)


def _shape(values: np.ndarray):
    return float(values) if values.ndim == 0 else values


def bessel_k_scaled(order: BesselOrder | float, u):
    """Return ``exp(u) * K_nu(u)``."""
    return _shape(_scaled(BesselOrder.from_nu(order), _argument(u)))


def bessel_k(order: BesselOrder | float, u, *, return_flag: bool = False):
    """Modified Bessel function ``K_nu(u)`` for ``u > 0``.

    Parameters
    ----------
    order : BesselOrder or float
        One of 0, 1/2, 1, 3/2, 2, 5/2.
    u : array_like
        Positive argument.
    return_flag : bool
        Also return a boolean mask marking arguments above
        ``UNDERFLOW_ARGUMENT``, where the result is set to exactly 0.

    Returns
    -------
    values : float or ndarray
    underflowed : bool or ndarray, optional
    """
    u = _argument(u)
    under = u > UNDERFLOW_ARGUMENT
    values = np.where(under, 0.0, _scaled(BesselOrder.from_nu(order), u) * np.exp(-np.minimum(u, UNDERFLOW_ARGUMENT)))
    if return_flag:
        return _shape(values), (bool(under) if under.ndim == 0 else under)
    return _shape(values)


def small_argument_limit(order_n: float) -> float:
    """Upper end ``sqrt(n + 1)`` of the small-argument validity window."""
    return math.sqrt(float(order_n) + 1.0)


def _small_order(order_n: float) -> float:
    n = float(order_n)
    if not n > 0.0 or 2.0 * n != round(2.0 * n):
        raise ValueError(f"small-argument form needs a positive integer or half-integer order, got {order_n!r}")
    return n


def bessel_k_small(order_n: float, u):
    """Leading small-argument term ``Gamma(n)/2 * (2/u)**n``.

    Valid for ``0 < u <= sqrt(n + 1)`` and ``n > 0``; K0 has no such form.
    """
    n = _small_order(order_n)
    u = _argument(u)
    if np.any(u > small_argument_limit(n)):
        raise ValueError(f"u exceeds the small-argument window sqrt(n+1) = {small_argument_limit(n):.6g}")
    return _shape(0.5 * math.gamma(n) * (2.0 / u) ** n)


def bessel_k_large(order: BesselOrder | float, u):
    """Leading large-argument term ``exp(-u) sqrt(pi / (2u))`` for ``u >= 1``."""
    BesselOrder.from_nu(order)
    u = _argument(u)
    if np.any(u < 1.0):
        raise ValueError("large-argument form requires u >= 1")
    return _shape(np.exp(-u) * np.sqrt(np.pi / (2.0 * u)))
