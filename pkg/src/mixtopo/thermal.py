"""Thermal density matrices over biorthogonal eigenbases and scalar factors.

Two conventions turn complex energies into Boltzmann exponents:

``"abs"``  each state gets sign * |E|, the sign marking the band (upper +1,
           lower -1, middle 0 for three levels). Default.
``"re"``   the real part Re(E).

Both agree whenever the spectrum is real.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import EigenSystem

CONVENTIONS = ("abs", "re")


class DivergentWeight(ArithmeticError):
    """A restoring weight 1/tanh^k(E/T) blew up (E/T too small)."""


def effective_energies(energies, convention: str = "abs", signs=None) -> np.ndarray:
    """Real Boltzmann exponents for (possibly complex) energies."""
    e = np.asarray(energies)
    if convention == "re":
        return np.real(e).astype(float)
    if convention != "abs":
        raise ValueError(f"unknown weight convention {convention!r}")
    if signs is None:
        re = np.real(e)
        scale = max(1.0, float(np.abs(e).max()))
        signs = np.where(np.abs(re) <= 1e-12 * scale, 0, np.sign(re))
    return np.asarray(signs, dtype=float) * np.abs(e)


def boltzmann_weights(energies, T: float, convention: str = "abs", signs=None) -> np.ndarray:
    """Normalized weights exp(-E_n/T)/Z, one per state (degenerate states repeat)."""
    if not T > 0:
        raise ValueError("temperature must be positive")
    e = effective_energies(energies, convention, signs)
    w = np.exp(-(e - e.min()) / T)
    return w / w.sum()


@dataclass(frozen=True)
class ThermalState:
    T: float
    weights: np.ndarray
    eigsys: EigenSystem
    rho: np.ndarray


def density_matrix(eigsys: EigenSystem, T: float, convention: str = "abs",
                   signs=None) -> ThermalState:
    """rho = sum_n P_n |u_n><u_n^L| with unit trace."""
    w = boltzmann_weights(eigsys.energies, T, convention, signs)
    return ThermalState(T=float(T), weights=w, eigsys=eigsys, rho=eigsys.function(w))


def sech(x):
    x = np.abs(np.asarray(x, dtype=float))
    ex = np.exp(-x)
    return 2 * ex / (1 + ex * ex)


def transport_strength(E, T: float):
    """1 - sech(|E|/T), the off-diagonal transport strength."""
    return 1.0 - sech(np.abs(E) / T)


def transport_strength_dT(E, T: float):
    """Closed-form temperature derivative of ``transport_strength``."""
    x = np.abs(E) / T
    return -sech(x) * np.tanh(x) * np.abs(E) / T ** 2


def three_form_profile(x):
    """Lambda(x) = 2 sqrt2 sinh^2(x/2) sinh(x) / sqrt(cosh(x) (1 + 2 cosh x)^3).

    Written in y = exp(-x) so large arguments do not overflow; tends to 1/2.
    """
    y = np.exp(-np.abs(np.asarray(x, dtype=float)))
    return (1 - y) ** 2 * (1 - y * y) / (2 * np.sqrt((1 + y * y) * (1 + y + y * y) ** 3))


def three_form_closed(E, T: float, alpha):
    """Closed-form Hermitian thermal three-form sin(2 alpha) * Lambda(|E|/T)."""
    return np.sin(2 * np.asarray(alpha)) * three_form_profile(np.abs(E) / T)


def restoring_weight(order: str, E, T: float, extra=None):
    """Temperature weight that restores quantization.

    ``chern1``: 1/tanh^3(|E|/T); ``chern2``: 1/tanh^5(|E|/T);
    ``dd``: 1/(2 Lambda(|E|/T)), the inverse of the Hermitian three-form
    density per unit sin(2 alpha) (``extra`` is accepted for symmetry and
    ignored). All three tend to 1 as T -> 0.
    """
    if not T > 0:
        raise ValueError("temperature must be positive")
    x = np.abs(np.asarray(E)) / T
    t = np.tanh(x)
    if np.any(np.abs(t) < 1e-8):
        raise DivergentWeight("|tanh(E/T)| < 1e-8")
    if order == "chern1":
        return 1.0 / t ** 3
    if order == "chern2":
        return 1.0 / t ** 5
    if order == "dd":
        return 1.0 / (2 * three_form_profile(x))
    raise ValueError(f"unknown weight order {order!r}")
