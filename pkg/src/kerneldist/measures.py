"""Empirical measures, the distributions used by the experiments, and seeding.

Random streams are counter based: a :class:`SeedSpec` ``(base_seed,
stream_index)`` becomes the 128-bit key of a Philox generator, so any stream
can be reconstructed independently of every other one.  Child streams for
replications or sweep cells are derived with :meth:`SeedSpec.child`.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import NumericalError, ValidationError

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass(frozen=True)
class SeedSpec:
    """Address of one random stream.

    The pair is used verbatim as the Philox key, hence two distinct pairs give
    two non-overlapping, statistically independent streams and the same pair
    always reproduces the same numbers.
    """

    base_seed: int
    stream_index: int = 0

    def __post_init__(self):
        for name in ("base_seed", "stream_index"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or not 0 <= value <= _MASK64:
                raise ValidationError(f"{name} must be a 64-bit unsigned integer, got {value!r}")
            object.__setattr__(self, name, int(value))

    def generator(self) -> np.random.Generator:
        key = self.base_seed | (self.stream_index << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *path: int) -> "SeedSpec":
        """Derive a sub-stream; ``child(a, b)`` equals ``child(a).child(b)``."""
        index = self.stream_index
        for p in path:
            if p < 0:
                raise ValidationError("child stream indices must be non-negative")
            index = _splitmix64(index ^ _splitmix64(int(p) + 1))
        return SeedSpec(self.base_seed, index)


def as_seed(seed: Union[SeedSpec, int, None]) -> SeedSpec:
    if isinstance(seed, SeedSpec):
        return seed
    if seed is None:
        return SeedSpec(0)
    return SeedSpec(int(seed))


class EmpiricalMeasure:
    """Uniform probability measure on a finite list of points in R^d.

    Points are stored as a read-only ``(n, d)`` float array.
    """

    __slots__ = ("_points",)

    def __init__(self, points):
        arr = np.array(points, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise ValidationError("points must be a list of scalars or of equal-length vectors")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValidationError("an empirical measure needs at least one point")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("points must be finite")
        arr.flags.writeable = False
        self._points = arr

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    @property
    def n(self) -> int:
        return self._points.shape[0]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"EmpiricalMeasure(n={self.n}, dim={self.dim})"

    def __eq__(self, other):
        if not isinstance(other, EmpiricalMeasure):
            return NotImplemented
        return self._points.shape == other._points.shape and bool(
            np.array_equal(self._points, other._points)
        )

    __hash__ = None

    def marginal(self, i: int) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self._points[:, i])

    def shifted(self, delta) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self._points + np.asarray(delta, dtype=float))

    def scaled(self, sigma: float) -> "EmpiricalMeasure":
        return EmpiricalMeasure(self._points * sigma)


# ---------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True)
class Gaussian1D:
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if not self.std > 0:
            raise ValidationError("std must be positive")


@dataclass(frozen=True)
class PerturbedGaussian1D:
    """Standard normal with either the mean shifted or the std scaled."""

    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError("scale must be positive")

    @classmethod
    def mean_shift(cls, delta: float) -> "PerturbedGaussian1D":
        return cls(shift=delta)

    @classmethod
    def std_scale(cls, sigma: float) -> "PerturbedGaussian1D":
        return cls(scale=sigma)


@dataclass(frozen=True, eq=False)
class MultivariateStudentT:
    dof: float
    scale: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.dof > 0:
            raise ValidationError("degrees of freedom must be positive")
        gamma = np.atleast_2d(np.array(self.scale, dtype=float))
        if gamma.shape[0] != gamma.shape[1]:
            raise ValidationError("scale matrix must be square")
        if not np.allclose(gamma, gamma.T, rtol=0, atol=1e-12 * np.abs(gamma).max()):
            raise ValidationError("scale matrix must be symmetric")
        try:
            chol = np.linalg.cholesky(gamma)
        except np.linalg.LinAlgError as exc:
            raise ValidationError("scale matrix is not positive definite") from exc
        gamma.flags.writeable = False
        object.__setattr__(self, "scale", gamma)
        object.__setattr__(self, "_chol", chol)

    @property
    def dim(self) -> int:
        return self.scale.shape[0]


@dataclass(frozen=True, eq=False)
class PointMass:
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))


@dataclass(frozen=True, eq=False)
class DiscretePMF:
    """Probabilities ``p[k-1]`` of the states ``k = 1..K``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.probs, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("probabilities must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def levels(self) -> int:
        return self.probs.size


DistributionSpec = Union[Gaussian1D, PerturbedGaussian1D, MultivariateStudentT, PointMass, DiscretePMF]


def _draw(spec, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(spec, Gaussian1D):
        return spec.mean + spec.std * rng.standard_normal(n)
    if isinstance(spec, PerturbedGaussian1D):
        return spec.shift + spec.scale * rng.standard_normal(n)
    if isinstance(spec, MultivariateStudentT):
        z = rng.standard_normal((n, spec.dim)) @ spec._chol.T
        s = rng.chisquare(spec.dof, size=n)
        return z / np.sqrt(s / spec.dof)[:, None]
    if isinstance(spec, PointMass):
        return np.broadcast_to(spec.x, (n, spec.x.size)).copy()
    if isinstance(spec, DiscretePMF):
        return rng.choice(np.arange(1, spec.levels + 1), size=n, p=spec.probs).astype(float)
    raise ValidationError(f"unknown distribution spec {spec!r}")


def sample_array(spec, n: int, seed) -> np.ndarray:
    """Like :func:`sample_distribution` but returns the raw ``(n, d)`` array."""
    if n < 1:
        raise ValidationError("sample size must be at least 1")
    out = _draw(spec, int(n), as_seed(seed).generator())
    return out.reshape(n, -1)


def sample_distribution(spec, n: int, seed) -> EmpiricalMeasure:
    """Draw ``n`` i.i.d. points from ``spec``.

    Multivariate Student-t draws are ``Z / sqrt(S / f)`` with ``Z ~ N(0, Gamma)``
    and ``S ~ chi2(f)``.
    """
    arr = sample_array(spec, n, seed)
    if not np.all(np.isfinite(arr)):
        raise NumericalError("sampled points overflowed", diagnostics={"nonfinite": int(np.sum(~np.isfinite(arr)))})
    return EmpiricalMeasure(arr)


def build_student_scale(d: int, tau: float, sigma) -> np.ndarray:
    """Scale matrix ``sigma_i sigma_j exp(-(|i - j| / (d tau))^2)``."""
    if d < 1:
        raise ValidationError("dimension must be at least 1")
    if not tau > 0:
        raise ValidationError("correlation length tau must be positive")
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (d,))
    if np.any(sigma <= 0):
        raise ValidationError("scales sigma must be positive")
    idx = np.arange(d)
    lag = np.abs(idx[:, None] - idx[None, :]) / (d * tau)
    return np.outer(sigma, sigma) * np.exp(-(lag**2))


# ---------------------------------------------------------------------------
# Functionals of empirical measures


def _require_1d(m: EmpiricalMeasure, name: str):
    if m.dim != 1:
        raise ValidationError(f"{name} must be one dimensional, got dim={m.dim}")


def empirical_cdf_diff_l2(x: EmpiricalMeasure, y: EmpiricalMeasure) -> float:
    """Exact integral of the squared difference of the two step CDFs."""
    _require_1d(x, "x")
    _require_1d(y, "y")
    pts = np.concatenate([x.points[:, 0], y.points[:, 0]])
    # integer jumps: N_x N_y (F_x - F_y) is an exact integer count
    jumps = np.concatenate([np.full(x.n, y.n, dtype=np.int64), np.full(y.n, -x.n, dtype=np.int64)])
    order = np.argsort(pts, kind="stable")
    pts, jumps = pts[order], jumps[order]
    diff = np.cumsum(jumps)[:-1] / (x.n * y.n)
    widths = np.diff(pts)
    return float(np.sum(widths * diff * diff))


def empirical_char_fn(m: EmpiricalMeasure, omega) -> complex:
    """``(1/N) sum_n exp(i omega . x_n)``."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if omega.shape != (m.dim,):
        raise ValidationError(f"frequency has dimension {omega.size}, measure has {m.dim}")
    phase = m.points @ omega
    return complex(np.mean(np.cos(phase)), np.mean(np.sin(phase)))


# ---------------------------------------------------------------------------
# CSV sample files: one point per row, no header


def read_points_csv(source: Union[str, io.TextIOBase]) -> EmpiricalMeasure:
    if isinstance(source, str):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_points_csv(fh)
    rows = []
    for lineno, row in enumerate(csv.reader(source), start=1):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        try:
            values = [float(v) for v in row]
        except ValueError as exc:
            raise ValidationError(f"line {lineno}: non-numeric entry") from exc
        if not all(math.isfinite(v) for v in values):
            raise ValidationError(f"line {lineno}: non-finite entry")
        if rows and len(values) != len(rows[0]):
            raise ValidationError(f"line {lineno}: expected {len(rows[0])} columns")
        rows.append(values)
    if not rows:
        raise ValidationError("sample file contains no points")
    return EmpiricalMeasure(rows)


def write_points_csv(points: Iterable[Sequence[float]], sink: io.TextIOBase) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    for p in np.atleast_2d(np.asarray(points, dtype=float).reshape(len(points), -1)):
        writer.writerow([repr(float(v)) for v in p])
