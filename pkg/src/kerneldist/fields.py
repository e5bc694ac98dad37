"""Gaussian random fields sampled at point sets and on grids, and their pairings.

Batched samplers draw realizations in chunks of :data:`CHUNK`; chunk ``c``
uses the stream ``seed.child(c)``, so a batch can be produced serially or in
parallel and the result is the same.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special
from scipy.integrate import trapezoid

from . import kernels
from .errors import NumericalError, ValidationError
from .measures import EmpiricalMeasure, SeedSpec, as_seed

CHUNK = 4096

JITTER_START = 1e-12
JITTER_STOP = 1e-6
CIRCULANT_TOL = 1e-9


@dataclass(frozen=True)
class FBM:
    H: float
    d: int = 1

    def __post_init__(self):
        if not 0 < self.H < 1:
            raise ValidationError(f"fBm needs 0 < H < 1, got {self.H}")
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError("dimension must be a positive integer")


@dataclass(frozen=True)
class GFFNeumann1D:
    """Neumann free field on [0, 1], truncated after ``K`` cosine modes."""

    K: int = 1000

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError("truncation K must be a positive integer")

    @property
    def d(self) -> int:
        return 1

    def tail_bound(self) -> float:
        """``sum_{k > K} 2 / (k pi)^2``, the variance left out by truncation."""
        return 2.0 / math.pi**2 * float(special.polygamma(1, self.K + 1))


@dataclass(frozen=True)
class AdditiveBM:
    d: int = 1

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise ValidationError("dimension must be a positive integer")


@dataclass(frozen=True)
class DiscreteField:
    """Independent ``D_k ~ N(0, 2^-k)`` on the states ``1..K``."""

    K: int

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValidationError("K must be a positive integer")

    @property
    def d(self) -> int:
        return 1


FieldSpec = Union[FBM, GFFNeumann1D, AdditiveBM, DiscreteField]


@dataclass(frozen=True, eq=False)
class FieldRealization:
    locations: np.ndarray
    values: np.ndarray
    spec: object
    seed: SeedSpec
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        locs = np.array(self.locations, dtype=float)
        if locs.ndim == 1:
            locs = locs[:, None]
        vals = np.array(self.values, dtype=float).reshape(-1)
        if locs.shape[0] != vals.size:
            raise ValidationError("one value per location is required")
        locs.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "values", vals)

    def shifted(self, c: float) -> "FieldRealization":
        return FieldRealization(self.locations, self.values + c, self.spec, self.seed, dict(self.info))


# ---------------------------------------------------------------------------
# Covariances


def matching_kernel(spec):
    """Closed-form kernel equal to the field covariance (``None`` for the GFF)."""
    if isinstance(spec, FBM):
        return kernels.Fractional(spec.H, spec.d)
    if isinstance(spec, AdditiveBM):
        return kernels.AdditiveL1(spec.d)
    if isinstance(spec, DiscreteField):
        return kernels.Discrete(spec.K)
    return None


def _gff_basis(K: int, x: np.ndarray) -> np.ndarray:
    k = np.arange(1, K + 1)[:, None]
    return math.sqrt(2.0) * np.cos(k * math.pi * x[None, :]) / (k * math.pi)


def field_covariance(spec, a, b) -> np.ndarray:
    """Exact covariance matrix ``Cov(U(a_i), U(b_j))`` of the (truncated) field."""
    if isinstance(spec, GFFNeumann1D):
        a = _unit_interval(a)
        b = _unit_interval(b)
        return _gff_basis(spec.K, a).T @ _gff_basis(spec.K, b)
    return kernels.gram(matching_kernel(spec), a, b)


def neumann_green(a, b) -> np.ndarray:
    """Untruncated Neumann Green function ``1/3 - max(x, y) + (x^2 + y^2) / 2``."""
    a = np.asarray(a, dtype=float).reshape(-1)[:, None]
    b = np.asarray(b, dtype=float).reshape(-1)[None, :]
    return 1.0 / 3.0 - np.maximum(a, b) + 0.5 * (a * a + b * b)


def _unit_interval(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise ValidationError("the GFF is one dimensional")
        x = x[:, 0]
    x = x.reshape(-1)
    if np.any((x < 0) | (x > 1)):
        raise ValidationError("GFF locations must lie in [0, 1]; rescale with rescale_to_unit")
    return x


def rescale_to_unit(points, lo: float, hi: float):
    """Affinely map ``[lo, hi]`` onto ``[0, 1]``.

    Returns the mapped points and the factor ``hi - lo`` by which a CDF
    distance computed on the unit interval must be multiplied.
    """
    if not hi > lo:
        raise ValidationError("need hi > lo")
    pts = (np.asarray(points, dtype=float) - lo) / (hi - lo)
    return pts, hi - lo


# ---------------------------------------------------------------------------
# Cholesky with jitter ladder


def cholesky_jitter(cov: np.ndarray):
    """Lower Cholesky factor of ``cov + eps I`` with the smallest eps that works.

    ``eps`` climbs from ``1e-12 * trace / n`` by factors of ten to
    ``1e-6 * trace / n``.  Returns ``(L, eps)``.
    """
    n = cov.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    base = np.trace(cov) / n
    jitter = JITTER_START
    while jitter <= JITTER_STOP * (1 + 1e-9):
        eps = jitter * base
        try:
            return np.linalg.cholesky(cov + eps * np.eye(n)), eps
        except np.linalg.LinAlgError:
            jitter *= 10.0
    min_eig = float(np.linalg.eigvalsh(cov)[0])
    raise NumericalError(
        f"covariance not positive definite after jitter escalation (smallest eigenvalue {min_eig:.3e})",
        min_eigenvalue=min_eig,
    )


@dataclass
class _Factor:
    """Sampling plan for a Gaussian vector at ``unique`` locations."""

    inverse: np.ndarray
    active: np.ndarray
    chol: np.ndarray
    jitter: float
    n_unique: int

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((size, self.chol.shape[0]))
        vals = np.zeros((size, self.n_unique))
        vals[:, self.active] = z @ self.chol.T
        return vals[:, self.inverse]


def _factor(spec, locations: np.ndarray) -> _Factor:
    uniq, inverse = np.unique(locations, axis=0, return_inverse=True)
    cov = field_covariance(spec, uniq, uniq)
    # zero-variance locations (the origin for FBM) are pinned to exactly 0
    active = np.flatnonzero(np.diag(cov) != 0)
    chol, jitter = cholesky_jitter(cov[np.ix_(active, active)])
    return _Factor(inverse.reshape(-1), active, chol, jitter, uniq.shape[0])


def _as_locations(spec, locations) -> np.ndarray:
    locs = np.asarray(locations, dtype=float)
    d = getattr(spec, "d", 1)
    if locs.ndim == 1 and d == 1:
        locs = locs[:, None]
    if locs.ndim != 2 or locs.shape[0] < 1 or locs.shape[1] != d:
        raise ValidationError(f"locations must be a non-empty list of points of dimension {d}")
    return locs


def _chunked(seed: SeedSpec, size: int, draw_chunk, n_jobs: int = 1) -> np.ndarray:
    starts = list(range(0, size, CHUNK))
    jobs = [(c, min(CHUNK, size - s)) for c, s in enumerate(starts)]

    def run(job):
        c, m = job
        return draw_chunk(seed.child(c).generator(), m)

    if n_jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.concatenate(parts, axis=0)


def sample_field_batch(spec, locations, seed, size: int, n_jobs: int = 1):
    """``size`` independent realizations at ``locations`` as a ``(size, n)`` array.

    Also returns an ``info`` dict (jitter used, truncation tail bound, ...).
    """
    if size < 1:
        raise ValidationError("size must be at least 1")
    seed = as_seed(seed)
    locs = _as_locations(spec, locations)
    info = {}
    if isinstance(spec, GFFNeumann1D):
        basis = _gff_basis(spec.K, _unit_interval(locs))
        info["tail_bound"] = spec.tail_bound()

        def draw(rng, m):
            return rng.standard_normal((m, spec.K)) @ basis

    elif isinstance(spec, DiscreteField):
        states = locs[:, 0]
        if np.any((states != np.round(states)) | (states < 1) | (states > spec.K)):
            raise ValidationError(f"discrete field locations must be integers in 1..{spec.K}")
        idx = states.astype(int) - 1
        sd = np.exp2(-np.arange(1, spec.K + 1) / 2.0)

        def draw(rng, m):
            return (rng.standard_normal((m, spec.K)) * sd)[:, idx]

    elif isinstance(spec, AdditiveBM):
        factors = [_factor(FBM(0.5, 1), locs[:, [i]]) for i in range(spec.d)]
        info["jitter"] = max(f.jitter for f in factors)

        def draw(rng, m):
            return sum(f.draw(rng, m) for f in factors)

    elif isinstance(spec, FBM):
        fac = _factor(spec, locs)
        info["jitter"] = fac.jitter

        def draw(rng, m):
            return fac.draw(rng, m)

    else:
        raise ValidationError(f"unknown field spec {spec!r}")
    return _chunked(seed, int(size), draw, n_jobs=n_jobs), info


def sample_field_at(spec, locations, seed) -> FieldRealization:
    """One joint realization of the field at ``locations``."""
    seed = as_seed(seed)
    locs = _as_locations(spec, locations)
    values, info = sample_field_batch(spec, locs, seed, 1)
    return FieldRealization(locs, values[0], spec, seed, info)


# ---------------------------------------------------------------------------
# fBm on a uniform grid via circulant embedding


def fgn_autocovariance(H: float, n: int) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    e = 2.0 * H
    return 0.5 * (np.abs(k + 1) ** e - 2.0 * k**e + np.abs(k - 1) ** e)


def _circulant_sqrt_eigs(H: float, n: int):
    gamma = fgn_autocovariance(H, n)
    m = 2 * n
    j = np.arange(m)
    row = gamma[np.minimum(j, m - j)]
    lam = np.fft.fft(row).real
    if lam.min() < -CIRCULANT_TOL * lam.max():
        return None
    return np.sqrt(np.clip(lam, 0.0, None) / m)


def fbm_grid_batch(H: float, step: float, n_points: int, seed, size: int, n_jobs: int = 1):
    """``size`` fBm paths on ``0, step, ..., (n_points - 1) step``.

    Returns ``(grid, paths, info)``; ``info["fallback"]`` is True when the
    circulant embedding was rejected and Cholesky was used.
    """
    if not 0 < H < 1:
        raise ValidationError(f"need 0 < H < 1, got {H}")
    if n_points < 2:
        raise ValidationError("need at least two grid points")
    if not step > 0:
        raise ValidationError("grid step must be positive")
    seed = as_seed(seed)
    n = n_points - 1
    grid = step * np.arange(n_points, dtype=float)
    sq = _circulant_sqrt_eigs(H, n)
    if sq is None:
        paths, info = sample_field_batch(FBM(H, 1), grid, seed, size, n_jobs=n_jobs)
        info["fallback"] = True
        return grid, paths, info
    scale = step**H

    def draw(rng, m):
        z = rng.standard_normal((m, 2 * n)) + 1j * rng.standard_normal((m, 2 * n))
        noise = np.fft.fft(sq * z, axis=1).real[:, :n] * scale
        out = np.zeros((m, n_points))
        np.cumsum(noise, axis=1, out=out[:, 1:])
        return out

    return grid, _chunked(seed, int(size), draw, n_jobs=n_jobs), {"fallback": False}


def sample_fbm_grid_1d(H: float, step: float, n_points: int, seed) -> FieldRealization:
    """Exact fBm path on a uniform grid starting at 0 (cumulated fGn)."""
    seed = as_seed(seed)
    grid, paths, info = fbm_grid_batch(H, step, n_points, seed, 1)
    return FieldRealization(grid, paths[0], FBM(H, 1), seed, info)


def sample_gff_series(K: int, grid, seed) -> FieldRealization:
    """Truncated Neumann GFF ``sum_k xi_k sqrt(2) cos(k pi x) / (k pi)`` on ``grid``."""
    spec = GFFNeumann1D(K)
    return sample_field_at(spec, grid, seed)


# ---------------------------------------------------------------------------
# Pairings


def pairing_weights(locations: np.ndarray, x: EmpiricalMeasure, y: EmpiricalMeasure) -> np.ndarray:
    """Weights ``w`` with ``<U, mu_x - mu_y> = w . U(locations)``."""
    locs = np.asarray(locations, dtype=float)
    if locs.ndim == 1:
        locs = locs[:, None]
    if x.dim != locs.shape[1] or y.dim != locs.shape[1]:
        raise ValidationError("measure and field dimensions differ")
    index = {tuple(p): i for i, p in enumerate(locs.tolist())}
    w = np.zeros(locs.shape[0])
    for m, sign in ((x, 1.0), (y, -1.0)):
        for p in m.points.tolist():
            try:
                w[index[tuple(p)]] += sign / m.n
            except KeyError:
                raise ValidationError(f"location {p} is not among the field locations") from None
    return w


def pair_field_empirical(f: FieldRealization, x: EmpiricalMeasure, y: EmpiricalMeasure) -> float:
    """``(1/N_x) sum U(X_n) - (1/N_y) sum U(Y_m)``."""
    index = {tuple(p): i for i, p in enumerate(f.locations.tolist())}
    if x.dim != f.locations.shape[1] or y.dim != f.locations.shape[1]:
        raise ValidationError("measure and field dimensions differ")
    try:
        ux = f.values[[index[tuple(p)] for p in x.points.tolist()]]
        uy = f.values[[index[tuple(p)] for p in y.points.tolist()]]
    except KeyError as exc:
        raise ValidationError(f"location {list(exc.args[0])} is not among the field locations") from None
    return float(np.mean(ux) - np.mean(uy))


def unit_grid(resolution: int) -> np.ndarray:
    """Uniform grid of ``resolution`` points on [-1, 1]."""
    if resolution < 2:
        raise ValidationError("resolution must be at least 2")
    return np.linspace(-1.0, 1.0, resolution)


def _check_unit_grid(t: np.ndarray):
    if t.ndim != 1 or t.size < 2:
        raise ValidationError("density pairing needs a one dimensional grid")
    h = np.diff(t)
    if abs(t[0] + 1) > 1e-12 or abs(t[-1] - 1) > 1e-12 or np.ptp(h) > 1e-9 * h.mean():
        raise ValidationError("density pairing needs a uniform grid over [-1, 1]")


def pair_field_density(f: FieldRealization, q) -> float:
    """Trapezoid approximation of ``int U(t) q(t) dt`` on [-1, 1]."""
    if f.locations.shape[1] != 1:
        raise ValidationError("density pairing is one dimensional")
    t = f.locations[:, 0]
    _check_unit_grid(t)
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape != t.shape:
        raise ValidationError("density values must be given on the field grid")
    if not np.all(np.isfinite(q)):
        raise ValidationError("density values must be finite")
    return float(trapezoid(f.values * q, t))


def moment_density(t: np.ndarray, m: int) -> np.ndarray:
    """``q_m(t) = t^m`` on [-1, 1], zero outside."""
    t = np.asarray(t, dtype=float)
    return np.where(np.abs(t) <= 1.0, t**m, 0.0)
