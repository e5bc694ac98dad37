"""Closed-form covariance kernels.

Every kernel is a frozen dataclass.  :func:`kernel_eval` evaluates a single
pair, :func:`gram` a whole block; both share the same arithmetic so they agree
bit for bit.

Variogram-type kernels (``Fractional``, ``AdditiveL1``, ``GreenGFF`` with
``d = 1``) have the form ``f(x) + f(y) - rho(x - y) / 2``.  The one-point
terms ``f`` are annihilated by any mass-zero combination, so estimators whose
weights sum to zero may use :func:`reduced_gram` (``-rho / 2`` only) instead.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import SingularityError, ValidationError


@dataclass(frozen=True)
class Fractional:
    """Covariance of fractional Brownian motion, ``(|x|^2H + |y|^2H - |x-y|^2H) / 2``.

    ``H = 1`` is the linear-process limit ``x . y``.
    """

    H: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.H <= 1:
            raise ValidationError(f"Hurst index must lie in (0, 1], got {self.H}")
        _check_dim(self.d)


@dataclass(frozen=True)
class GreenGFF:
    """Whole-space Green function of the Laplacian (``N_d``)."""

    d: int

    def __post_init__(self):
        _check_dim(self.d)


@dataclass(frozen=True)
class RieszGFF:
    """Fractional free field kernel ``sign * |x - y|^(2 alpha - d)``.

    For ``2 alpha < d`` the kernel is positive and singular on the diagonal.
    For ``2 alpha > d`` the Riesz constant changes sign, so the kernel is
    ``-|x - y|^(2 alpha - d)`` (a conditionally positive definite variogram).
    """

    alpha: float
    d: int

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        _check_dim(self.d)
        if 2 * self.alpha - self.d == 0:
            raise ValidationError("2 alpha - d must be nonzero")

    @property
    def exponent(self) -> float:
        return 2.0 * self.alpha - self.d


@dataclass(frozen=True)
class AdditiveL1:
    """Additive Brownian motion kernel ``(|x|_1 + |y|_1 - |x - y|_1) / 2``."""

    d: int = 1

    def __post_init__(self):
        _check_dim(self.d)


@dataclass(frozen=True)
class Discrete:
    """``sum_k 2^-k 1{x = k} 1{y = k}`` on the states ``1..K``."""

    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError("K must be a positive integer")


KernelSpec = Union[Fractional, GreenGFF, RieszGFF, AdditiveL1, Discrete]


def _check_dim(d):
    if int(d) != d or d < 1:
        raise ValidationError(f"dimension must be a positive integer, got {d}")


def is_singular(k) -> bool:
    """True when ``k(x, x)`` is infinite."""
    if isinstance(k, GreenGFF):
        return k.d >= 2
    if isinstance(k, RieszGFF):
        return k.exponent < 0
    return False


def is_variogram(k) -> bool:
    if isinstance(k, (Fractional, AdditiveL1)):
        return True
    if isinstance(k, GreenGFF):
        return k.d == 1
    return isinstance(k, RieszGFF) and k.exponent > 0


def kernel_dim(k) -> int:
    return 1 if isinstance(k, Discrete) else k.d


def _green_const(d: int) -> float:
    # (d - 2) * surface area of the unit sphere S^{d-1}
    area = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return 1.0 / ((d - 2) * area)


def _as_block(a, d) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype.kind not in "fc":
        a = a.astype(float)
    if a.ndim == 1 and d == 1:
        a = a[:, None]
    elif a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != d:
        raise ValidationError(f"points must have dimension {d}, got shape {a.shape}")
    return a


def _norm(diff, p=2):
    if p == 1:
        return np.sum(np.abs(diff), axis=-1)
    if diff.shape[-1] == 1:
        return np.abs(diff[..., 0])
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _pow(r, e):
    # 0 ** e must be exactly 0 for e > 0 (origin pinning)
    with np.errstate(divide="ignore", over="ignore"):
        return np.power(r, e)


def _variogram(k, diff):
    """``rho(x - y)`` for variogram kernels."""
    if isinstance(k, Fractional):
        if k.H == 1:
            return np.sum(diff * diff, axis=-1)
        return _pow(_norm(diff), 2 * k.H)
    if isinstance(k, AdditiveL1):
        return _norm(diff, 1)
    if isinstance(k, GreenGFF):
        return _norm(diff)
    if isinstance(k, RieszGFF):
        return 2.0 * _pow(_norm(diff), k.exponent)
    raise ValidationError(f"{k!r} is not a variogram kernel")


def _one_point(k, a):
    """``f(x)`` with ``k(x, y) = f(x) + f(y) - rho(x - y) / 2``."""
    if isinstance(k, Fractional):
        if k.H == 1:
            return 0.5 * np.sum(a * a, axis=-1)
        return 0.5 * _pow(_norm(a), 2 * k.H)
    if isinstance(k, AdditiveL1):
        return 0.5 * _norm(a, 1)
    if isinstance(k, GreenGFF):
        return 0.5 * _norm(a)
    return np.zeros(a.shape[:-1], dtype=a.dtype)


def _stationary(k, diff, scale, exclude_diagonal):
    r = _norm(diff)
    if not exclude_diagonal and np.any(r == 0):
        raise SingularityError(f"{k!r} is singular at x = y")
    with np.errstate(divide="ignore", over="ignore"):
        logr = np.log(r)
        if isinstance(k, GreenGFF):
            if k.d == 2:
                out = -logr / (2.0 * math.pi)
            else:
                out = _green_const(k.d) * np.exp(-(k.d - 2) * logr)
            return scale * out if scale != 1.0 else out
        # Riesz, negative exponent: log space so that the caller's scale
        # factor can lift values that would otherwise underflow
        return np.exp(k.exponent * logr + math.log(scale))


def kernel_values(k, a, b, scale: float = 1.0, exclude_diagonal: bool = False, reduced: bool = False):
    """Elementwise ``k(a, b)`` over broadcast arrays whose last axis is the dimension.

    ``reduced`` drops the one-point terms of variogram kernels.
    """
    if isinstance(k, Discrete):
        av = a[..., 0]
        same = np.all(a == b, axis=-1)
        valid = (av == np.round(av)) & (av >= 1) & (av <= k.K)
        w = np.where(valid, np.exp2(-np.where(valid, av, 0)), 0)
        out = np.where(same, w, 0).astype(np.result_type(a, b, float))
        return scale * out if scale != 1.0 else out
    diff = a - b
    if is_variogram(k):
        out = -0.5 * _variogram(k, diff)
        if not reduced:
            out = _one_point(k, a) + _one_point(k, b) + out
        return scale * out if scale != 1.0 else out
    return _stationary(k, diff, scale, exclude_diagonal)


def gram(k, a, b, scale: float = 1.0, exclude_diagonal: bool = False) -> np.ndarray:
    """Kernel matrix ``K[i, j] = k(a_i, b_j)``.

    ``scale`` multiplies the kernel (applied in log space for Riesz kernels).
    With ``exclude_diagonal`` a singular kernel returns ``inf`` where
    ``a_i == b_j`` instead of raising; callers must mask those entries.
    """
    d = kernel_dim(k)
    a = _as_block(a, d)
    b = _as_block(b, d)
    return kernel_values(k, a[:, None, :], b[None, :, :], scale=scale, exclude_diagonal=exclude_diagonal)


def reduced_gram(k, a, b, scale: float = 1.0, exclude_diagonal: bool = False) -> np.ndarray:
    """``-rho(a_i - b_j) / 2`` for variogram kernels, the full kernel otherwise."""
    d = kernel_dim(k)
    a = _as_block(a, d)
    b = _as_block(b, d)
    return kernel_values(
        k, a[:, None, :], b[None, :, :], scale=scale, exclude_diagonal=exclude_diagonal, reduced=True
    )


def kernel_eval(k, x, y, scale: float = 1.0) -> float:
    """Evaluate ``k(x, y)`` for a single pair of points."""
    d = kernel_dim(k)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != (d,) or y.shape != (d,):
        raise ValidationError(f"points must have dimension {d}")
    return float(gram(k, x[None, :], y[None, :], scale=scale)[0, 0])


def kernel_psd_check(k, points, weights) -> float:
    """Quadratic form ``sum_ij beta_i beta_j k(x_i, x_j)``."""
    d = kernel_dim(k)
    pts = _as_block(np.asarray(points, dtype=float), d)
    beta = np.asarray(weights, dtype=float).reshape(-1)
    if pts.shape[0] != beta.size or beta.size < 1:
        raise ValidationError("need one weight per point and at least one point")
    K = gram(k, pts, pts)
    return float(beta @ K @ beta)


# ---------------------------------------------------------------------------
# CLI grammar: fractional:H=0.5, green:d=3, riesz:alpha=5,d=16, additive, discrete:K=8

_NAMES = {
    "fractional": (Fractional, {"H": float, "d": int}),
    "green": (GreenGFF, {"d": int}),
    "riesz": (RieszGFF, {"alpha": float, "d": int}),
    "additive": (AdditiveL1, {"d": int}),
    "discrete": (Discrete, {"K": int}),
}


def parse_kernel(text: str, default_dim: int = 1):
    """Parse the kernel selection grammar used on the command line."""
    m = re.fullmatch(r"\s*([a-z]+)\s*(?::(.*))?", text)
    if not m or m.group(1) not in _NAMES:
        raise ValidationError(f"unknown kernel {text!r}; expected one of {sorted(_NAMES)}")
    cls, fields = _NAMES[m.group(1)]
    kwargs = {}
    if m.group(2):
        for item in m.group(2).split(","):
            key, sep, value = item.partition("=")
            key = key.strip()
            if not sep or key not in fields:
                raise ValidationError(f"bad kernel parameter {item!r} for {m.group(1)}")
            try:
                kwargs[key] = fields[key](value.strip())
            except ValueError as exc:
                raise ValidationError(f"bad value for {key}: {value!r}") from exc
    if "d" in fields and "d" not in kwargs:
        kwargs["d"] = default_dim
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValidationError(f"missing parameters for {m.group(1)}: {exc}") from exc


def format_kernel(k) -> str:
    if isinstance(k, Fractional):
        return f"fractional:H={k.H:g},d={k.d}"
    if isinstance(k, GreenGFF):
        return f"green:d={k.d}"
    if isinstance(k, RieszGFF):
        return f"riesz:alpha={k.alpha:g},d={k.d}"
    if isinstance(k, AdditiveL1):
        return f"additive:d={k.d}"
    return f"discrete:K={k.K}"
