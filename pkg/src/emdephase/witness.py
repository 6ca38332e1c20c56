"""Entangling phases, dephased two-qubit state and the PPT witness.

Two adjacent interferometers at centre distance ``d`` pick up the static
phase ``phi = tau U(d) / hbar`` and the differential phase

    dphi = (1/hbar) int_0^tau [U(sqrt(d^2 + s(t)^2)) - U(d)] dt

where ``s(t)`` is the arm separation and ``U(r) = -G m^2 / r`` (gravity) or
``U(r) = k q1 q2 / r`` (Coulomb), signs chosen so that the displayed
phases read ``phi = tau G m^2 / (hbar d)`` and ``phi = -tau k q1 q2 / (hbar d)``.

Each phase factor ``exp(i dphi)`` is dressed with the Gaussian average
``E[exp(i delta)] = exp(-Gamma/2)`` of the common dephasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate
from scipy.optimize import brentq

from .core import G_NEWTON, HBAR, K_E, InterferometerConfig
from .trajectory import arm_separation, trajectory_phases

__all__ = [
    "Coupling",
    "EntanglementPhases",
    "Detectability",
    "entangling_phases",
    "averaged_density_matrix",
    "witness_operator",
    "witness_expectation",
    "witness_trace",
    "partial_transpose",
    "min_partial_transpose_eigenvalue",
    "detectable",
    "detection_threshold_root",
]

_I2 = np.eye(2, dtype=complex)
_SX = np.array([[0, 1], [1, 0]], dtype=complex)
_SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = np.array([[1, 0], [0, -1]], dtype=complex)


class Coupling(Enum):
    GRAVITATIONAL = "gravitational"
    COULOMB = "coulomb"


@dataclass(frozen=True)
class EntanglementPhases:
    phi: float
    delta_phi: float
    coupling: Coupling
    separation: float


def _separation_excess(config: InterferometerConfig, d: float) -> float:
    """``int_0^tau [1/sqrt(d^2 + s^2) - 1/d] dt`` without cancellation."""

    def f(t):
        s = arm_separation(config, t)
        r = math.hypot(d, s)
        return -(s * s) / (d * r * (d + r))

    total = 0.0
    for piece in trajectory_phases(config):
        if piece.end > piece.start:
            total += integrate.quad(f, piece.start, piece.end, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return total


def entangling_phases(
    config: InterferometerConfig,
    separation: float,
    *,
    mass: float | None = None,
    charges: tuple[float, float] | None = None,
) -> EntanglementPhases:
    """Static and differential phases of two adjacent interferometers.

    Parameters
    ----------
    config : InterferometerConfig
        Trajectory shared by both interferometers.
    separation : float
        Centre distance ``d`` in m; must exceed the plateau separation.
    mass : float, optional
        Gravitating mass; defaults to ``config.mass``. Ignored if ``charges``
        is given.
    charges : (float, float), optional
        Signed charges ``q1, q2`` in C; selects the Coulomb coupling.
    """
    d = float(separation)
    if not d > config.max_separation:
        raise ValueError("separation must exceed the superposition size")
    excess = _separation_excess(config, d)
    tau = config.total_time
    if charges is not None:
        q1, q2 = charges
        strength = K_E * q1 * q2
        return EntanglementPhases(-tau * strength / (HBAR * d), -strength * excess / HBAR, Coupling.COULOMB, d)
    m = config.mass if mass is None else float(mass)
    strength = G_NEWTON * m * m
    return EntanglementPhases(tau * strength / (HBAR * d), strength * excess / HBAR, Coupling.GRAVITATIONAL, d)


def averaged_density_matrix(delta_phi: float, gamma_n: float) -> np.ndarray:
    """Dephasing-averaged state on the basis ``uu, ud, du, dd``.

    Off-diagonal phase entries carry ``exp(-Gamma/2 -+ i dphi)``, the
    ``uu``/``dd`` coherence ``exp(-2 Gamma)`` and the inner block is 1; all
    entries are divided by 4.
    """
    if gamma_n < 0:
        raise ValueError("dephasing must be non-negative")
    m = math.exp(-gamma_n / 2) * np.exp(-1j * delta_phi)
    c = math.exp(-2 * gamma_n)
    mc = np.conj(m)
    rho = np.array(
        [
            [1, m, m, c],
            [mc, 1, 1, mc],
            [mc, 1, 1, mc],
            [c, m, m, 1],
        ],
        dtype=complex,
    )
    return rho / 4


def witness_operator(sign: float = -1.0) -> np.ndarray:
    """``(1/4)(1x1 - sx x sx - s (sz x sy + sy x sz))`` with ``s = sign(sign)``.

    ``sign = -1`` gives ``(1/4)(1x1 - sx x sx + sz x sy + sy x sz)``, the
    witness matched to the state of :func:`averaged_density_matrix` for
    ``dphi < 0``; ``sign = +1`` is its mirror for ``dphi > 0``.
    """
    s = 1.0 if sign > 0 else -1.0
    return 0.25 * (
        np.kron(_I2, _I2) - np.kron(_SX, _SX) - s * (np.kron(_SZ, _SY) + np.kron(_SY, _SZ))
    )


def witness_expectation(delta_phi: float, gamma_n: float) -> float:
    """Closed form ``(1/8)(1 - exp(-2G)) - (1/2) sin|dphi| exp(-G/2)``."""
    if gamma_n < 0:
        raise ValueError("dephasing must be non-negative")
    return 0.125 * (1 - math.exp(-2 * gamma_n)) - 0.5 * math.sin(abs(delta_phi)) * math.exp(-gamma_n / 2)


def witness_trace(delta_phi: float, gamma_n: float) -> float:
    """``Tr(W rho)`` with the witness matched to the sign of ``dphi``."""
    rho = averaged_density_matrix(delta_phi, gamma_n)
    w = witness_operator(1.0 if delta_phi > 0 else -1.0)
    return float(np.real(np.trace(w @ rho)))


def partial_transpose(rho: np.ndarray) -> np.ndarray:
    """Transpose over the second qubit."""
    r = np.asarray(rho).reshape(2, 2, 2, 2)
    return r.transpose(0, 3, 2, 1).reshape(4, 4)


def min_partial_transpose_eigenvalue(delta_phi: float, gamma_n: float) -> float:
    return float(np.linalg.eigvalsh(partial_transpose(averaged_density_matrix(delta_phi, gamma_n)))[0])


@dataclass(frozen=True)
class Detectability:
    """Witness verdict.

    ``detectable`` follows the sign of the exact ``<W>``; ``threshold_rule``
    is the short-phase approximation ``Gamma < |dphi| / 4`` and ``margin`` is
    ``|dphi| / 4 - Gamma``.
    """

    detectable: bool
    witness: float
    threshold_rule: bool
    margin: float


def detectable(delta_phi: float, gamma_n: float) -> Detectability:
    w = witness_expectation(delta_phi, gamma_n)
    margin = abs(delta_phi) / 4 - gamma_n
    return Detectability(w < 0, w, margin > 0, margin)


def detection_threshold_root(delta_phi: float) -> float:
    """Dephasing at which ``<W>`` changes sign for fixed ``dphi`` in (0, pi)."""
    if not 0 < abs(delta_phi) < math.pi:
        raise ValueError("need 0 < |dphi| < pi")
    hi = 1.0
    while witness_expectation(delta_phi, hi) < 0:
        hi *= 2
    return brentq(lambda g: witness_expectation(delta_phi, g), 0.0, hi, xtol=1e-15, rtol=1e-13)
