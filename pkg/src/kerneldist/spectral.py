"""Spectral densities of the fractional fields and their integrability checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import SingularityError, ValidationError


def c_h_constant(d: int, H: float) -> float:
    """Normalizing constant ``C_H`` of the fractional spectral density.

    ``C_H = sqrt(pi) Gamma(H + 1/2) / (2^(d/2) H Gamma(2H) sin(pi H) Gamma(H + d/2))``,
    evaluated through log-gamma.
    """
    if not 0 < H < 1:
        raise ValidationError(f"need 0 < H < 1, got {H}")
    if int(d) != d or d < 1:
        raise ValidationError("dimension must be a positive integer")
    log_c = (
        0.5 * math.log(math.pi)
        + special.gammaln(H + 0.5)
        - 0.5 * d * math.log(2.0)
        - math.log(H)
        - special.gammaln(2.0 * H)
        - math.log(math.sin(math.pi * H))
        - special.gammaln(H + 0.5 * d)
    )
    return float(math.exp(log_c))


@dataclass(frozen=True)
class FractionalIncrement:
    """``phi(w) = |w|^-(d + 2H) / ((2 pi)^(d/2) C_H)``."""

    H: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise ValidationError(f"need 0 < H < 1, got {self.H}")

    @property
    def prefactor(self) -> float:
        return 1.0 / ((2.0 * math.pi) ** (self.d / 2) * c_h_constant(self.d, self.H))

    @property
    def power(self) -> float:
        return self.d + 2.0 * self.H


@dataclass(frozen=True)
class RieszStationary:
    """``phi(w) = |w|^(-2 alpha)`` (unit constant)."""

    alpha: float
    d: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")

    @property
    def prefactor(self) -> float:
        return 1.0

    @property
    def power(self) -> float:
        return 2.0 * self.alpha


def phi_radial(spec, r) -> np.ndarray:
    """Density as a function of ``r = |w| > 0`` (vectorized)."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise SingularityError("spectral density is singular at w = 0")
    return spec.prefactor * r ** (-spec.power)


def phi_eval(spec, omega) -> float:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.shape != (spec.d,):
        raise ValidationError(f"frequency must have dimension {spec.d}")
    return float(phi_radial(spec, np.linalg.norm(omega)))


@dataclass(frozen=True)
class IntegrabilityReport:
    H: float
    kappa: float
    d: int
    inner: float  # int_{|w| <= 1} phi |w|^(2 kappa) dw
    outer: float  # int_{|w| > 1} phi dw

    @property
    def inner_finite(self) -> bool:
        return math.isfinite(self.inner)

    @property
    def outer_finite(self) -> bool:
        return math.isfinite(self.outer)

    @property
    def satisfied(self) -> bool:
        return self.inner_finite and self.outer_finite


def moment_condition_check(spec: FractionalIncrement, kappa: float) -> IntegrabilityReport:
    """Radial integrals deciding whether moments of order ``kappa`` suffice.

    With ``phi ~ r^-(d + 2H)`` the inner integral is ``c S int_0^1 r^(2 kappa - 1 - 2H) dr``,
    finite iff ``kappa > H``; the outer one is ``c S / (2H)``.
    """
    if not isinstance(spec, FractionalIncrement):
        raise ValidationError("the moment criterion applies to fractional increment densities")
    if not 0 <= kappa <= 1:
        raise ValidationError("kappa must lie in [0, 1]")
    d, H = spec.d, spec.H
    sphere = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    c = spec.prefactor * sphere
    inner_exp = 2.0 * kappa - 2.0 * H  # antiderivative power
    inner = c / inner_exp if inner_exp > 0 else math.inf
    outer = c / (2.0 * H)
    return IntegrabilityReport(H=H, kappa=kappa, d=d, inner=inner, outer=outer)


def is_characteristic_for_moments(H: float, kappa: float, d: int = 1) -> bool:
    """Whether finite ``kappa`` moments make the fractional field characteristic."""
    return moment_condition_check(FractionalIncrement(H, d), kappa).satisfied
