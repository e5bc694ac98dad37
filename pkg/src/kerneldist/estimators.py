"""Finite-sample distance estimators and closed-form oracles.

Three routes to the same squared distance between two empirical measures:

* kernel double sums (:func:`v_statistic_distance` and the U-type estimators),
* Monte Carlo over field realizations (:func:`field_mc_distance`),
* weighted Fourier quadrature (:func:`fourier_distance_1d`).

Unbiased estimators come in two conventions.  ``paper`` is the literal
formula whose expectation is half the distance; ``corrected`` is exactly twice
it and is unbiased for the distance itself.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special

from . import fields as fld
from . import kernels as K
from .errors import SingularityError, UnsupportedKernelError, ValidationError
from .measures import DiscretePMF, EmpiricalMeasure, as_seed, empirical_cdf_diff_l2
from .spectral import FractionalIncrement, phi_radial

ESTIMATORS = (
    "unbiased_paper",
    "unbiased_corrected",
    "biased_paper",
    "v_statistic",
    "field_mc",
    "fourier",
    "cvm",
)


@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    estimator: str
    n_x: int
    n_y: int
    replications: Optional[int] = None
    std_error: Optional[float] = None
    scale_factor: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __float__(self):
        return float(self.value)


def _check_pair(x: EmpiricalMeasure, y: EmpiricalMeasure, k=None):
    if x.dim != y.dim:
        raise ValidationError(f"dimension mismatch: {x.dim} vs {y.dim}")
    if k is not None and K.kernel_dim(k) != x.dim:
        raise ValidationError(f"kernel dimension {K.kernel_dim(k)} does not match data dimension {x.dim}")


_DTYPES = {"double": np.float64, "single": np.float32}


def _off_diagonal_sum(G: np.ndarray) -> np.ndarray:
    """Sum over ``n != m`` of the trailing two axes."""
    n = G.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sum(np.where(mask, G, 0), axis=(-2, -1))


def unbiased_components(X, Y, k, scale: float = 1.0, cross: str = "paired", precision: str = "double"):
    """Within and cross averages shared by both unbiased conventions.

    ``X`` and ``Y`` have shape ``(..., N, d)``.  Returns ``(W, C)`` with
    ``W = mean_{n != m} k(X_n, X_m) + mean_{n != m} k(Y_n, Y_m)`` and ``C`` the
    cross average, so ``corrected = W - 2 C`` and ``paper = W / 2 - C``.
    ``cross`` selects the cross average: ``"paired"`` over ``k(X_n, Y_n)``,
    ``"full"`` over all ``(n, m)``, ``"offdiag"`` over ``n != m``.

    In double precision variogram kernels drop their one-point terms (they
    cancel exactly); ``precision="single"`` evaluates the literal kernel in
    float32 so that overflow shows up as non-finite output.
    """
    dtype = _DTYPES[precision]
    X = np.asarray(X, dtype=dtype)
    Y = np.asarray(Y, dtype=dtype)
    nx, ny = X.shape[-2], Y.shape[-2]
    if nx < 2 or ny < 2:
        raise ValidationError("unbiased estimators need at least two points per sample")
    reduced = precision == "double"
    opts = dict(scale=scale, exclude_diagonal=True, reduced=reduced)
    with np.errstate(invalid="ignore", over="ignore"):
        gxx = K.kernel_values(k, X[..., :, None, :], X[..., None, :, :], **opts)
        gyy = K.kernel_values(k, Y[..., :, None, :], Y[..., None, :, :], **opts)
        W = _off_diagonal_sum(gxx) / (nx * (nx - 1)) + _off_diagonal_sum(gyy) / (ny * (ny - 1))
        if cross == "paired":
            if nx != ny:
                raise ValidationError("the paired cross term needs equal sample sizes; use cross='full'")
            if K.is_singular(k) and np.any(np.all(X == Y, axis=-1)):
                raise SingularityError("paired cross term hits the kernel singularity (X_n == Y_n)")
            C = np.mean(K.kernel_values(k, X, Y, **opts), axis=-1)
        elif cross == "full":
            if K.is_singular(k) and np.any(np.all(X[..., :, None, :] == Y[..., None, :, :], axis=-1)):
                raise SingularityError("cross term hits the kernel singularity (X_n == Y_m)")
            gxy = K.kernel_values(k, X[..., :, None, :], Y[..., None, :, :], **opts)
            C = np.mean(gxy, axis=(-2, -1))
        elif cross == "offdiag":
            if nx != ny:
                raise ValidationError("the off-diagonal cross term needs equal sample sizes")
            gxy = K.kernel_values(k, X[..., :, None, :], Y[..., None, :, :], **opts)
            off = ~np.eye(nx, dtype=bool)
            if K.is_singular(k) and np.any(np.isinf(gxy) & off):
                raise SingularityError("cross term hits the kernel singularity (X_n == Y_m)")
            C = _off_diagonal_sum(gxy) / (nx * (nx - 1))
        else:
            raise ValidationError(f"cross must be 'paired', 'full' or 'offdiag', got {cross!r}")
    return W, C


def combine_unbiased(W, C, convention: str):
    if convention == "corrected":
        return W - 2.0 * C
    if convention == "paper":
        return 0.5 * W - C
    raise ValidationError(f"convention must be 'paper' or 'corrected', got {convention!r}")


def unbiased_kernel_distance(
    x: EmpiricalMeasure,
    y: EmpiricalMeasure,
    k,
    convention: str = "corrected",
    cross: str = "paired",
    scale: float = 1.0,
    precision: str = "double",
) -> DistanceEstimate:
    """Diagonal-free kernel estimate; may be negative and is never clamped."""
    _check_pair(x, y, k)
    W, C = unbiased_components(x.points, y.points, k, scale=scale, cross=cross, precision=precision)
    value = float(combine_unbiased(W, C, convention))
    return DistanceEstimate(
        value=value,
        estimator=f"unbiased_{convention}",
        n_x=x.n,
        n_y=y.n,
        scale_factor=scale,
        metadata={"convention": convention, "cross": cross, "kernel": K.format_kernel(k), "precision": precision},
    )


def v_statistic_value(X, Y, k, scale: float = 1.0) -> float:
    """Exact ``E_U <U, mu_N - nu_N>^2``: full double sums including diagonals."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    gxx = K.reduced_gram(k, X, X, scale=scale)
    gyy = K.reduced_gram(k, Y, Y, scale=scale)
    gxy = K.reduced_gram(k, X, Y, scale=scale)
    return float(gxx.mean() + gyy.mean() - 2.0 * gxy.mean())


def v_statistic_distance(x: EmpiricalMeasure, y: EmpiricalMeasure, k, scale: float = 1.0) -> DistanceEstimate:
    """``(1/Nx^2) sum k(X, X') + (1/Ny^2) sum k(Y, Y') - (2/(Nx Ny)) sum k(X, Y)``."""
    _check_pair(x, y, k)
    if K.is_singular(k):
        raise UnsupportedKernelError(f"the V-statistic needs k(x, x); {K.format_kernel(k)} is singular there")
    value = v_statistic_value(x.points, y.points, k, scale=scale)
    return DistanceEstimate(
        value=value, estimator="v_statistic", n_x=x.n, n_y=y.n, scale_factor=scale,
        metadata={"kernel": K.format_kernel(k)},
    )


def biased_kernel_distance(
    x: EmpiricalMeasure, y: EmpiricalMeasure, k, convention: str = "paper", scale: float = 1.0
) -> DistanceEstimate:
    """The ``1/(2 N^2)`` estimate with paired cross term, evaluated literally.

    Unlike the V-statistic it omits the diagonal terms
    ``k(X_n, X_n) + k(Y_n, Y_n) - 2 k(X_n, Y_n)``; the difference to the
    V-statistic is stored in ``metadata["gap_to_v_statistic"]`` when defined.
    """
    if convention != "paper":
        raise ValidationError("the biased estimate only exists in the 'paper' convention")
    _check_pair(x, y, k)
    if x.n != y.n:
        raise ValidationError("the biased estimate pairs X_n with Y_n and needs equal sample sizes")
    n = x.n
    if K.is_singular(k) and np.any(np.all(x.points == y.points, axis=-1)):
        raise SingularityError("paired cross term hits the kernel singularity (X_n == Y_n)")
    gxx = K.gram(k, x.points, x.points, scale=scale, exclude_diagonal=True)
    gyy = K.gram(k, y.points, y.points, scale=scale, exclude_diagonal=True)
    within = _off_diagonal_sum(gxx) + _off_diagonal_sum(gyy)
    cross = np.mean(K.kernel_values(k, x.points, y.points, scale=scale))
    value = float(within / (2.0 * n * n) - cross)
    meta = {"convention": "paper", "kernel": K.format_kernel(k)}
    if not K.is_singular(k):
        meta["gap_to_v_statistic"] = value - v_statistic_value(x.points, y.points, k, scale=scale)
    return DistanceEstimate(value=value, estimator="biased_paper", n_x=n, n_y=n, scale_factor=scale, metadata=meta)


def field_mc_distance(
    x: EmpiricalMeasure, y: EmpiricalMeasure, spec, M: int, seed, n_jobs: int = 1
) -> DistanceEstimate:
    """Average of ``<U_j, mu_x - mu_y>^2`` over ``M`` joint field realizations at x and y."""
    _check_pair(x, y)
    if M < 2:
        raise ValidationError("need at least two replications")
    if getattr(spec, "d", 1) != x.dim:
        raise ValidationError("field dimension does not match the data")
    seed = as_seed(seed)
    locs = np.unique(np.concatenate([x.points, y.points]), axis=0)
    w = fld.pairing_weights(locs, x, y)
    values, info = fld.sample_field_batch(spec, locs, seed, M, n_jobs=n_jobs)
    sq = (values @ w) ** 2
    mean = float(np.mean(sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(M))
    return DistanceEstimate(
        value=mean, estimator="field_mc", n_x=x.n, n_y=y.n, replications=M, std_error=se,
        metadata={"field": repr(spec), "seed": (seed.base_seed, seed.stream_index), **info},
    )


def cvm_distance(x: EmpiricalMeasure, y: EmpiricalMeasure) -> DistanceEstimate:
    """Squared L2 distance between the empirical CDFs."""
    return DistanceEstimate(value=empirical_cdf_diff_l2(x, y), estimator="cvm", n_x=x.n, n_y=y.n)


# ---------------------------------------------------------------------------
# Fourier route


@dataclass(frozen=True)
class QuadratureConfig:
    nodes: int = 16  # Gauss-Legendre nodes per panel
    panels_per_decade: int = 6  # on the log-spaced low-frequency range
    panels_per_period: int = 2  # on the oscillatory range, per period of the widest pair
    omega_min_factor: float = 1e-6  # omega_min = factor / diameter
    tail_periods: int = 64  # oscillation periods resolved by panels before the tail
    max_tail_pairs: int = 20_000  # beyond this many pairs use the tail bound instead
    tail_tol: float = 1e-5  # relative target for the tail bound fallback
    max_panels: int = 400_000


def _char_diff_sq(z: np.ndarray, w: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """``|sum_j w_j exp(i omega z_j)|^2`` for mass-zero weights ``w``.

    The real part is written as ``-2 sum w sin^2(omega z / 2)`` to avoid the
    cancellation of ``cos - 1`` at small frequencies.
    """
    out = np.empty_like(omega)
    step = max(1, 2_000_000 // max(z.size, 1))
    for s in range(0, omega.size, step):
        ph = np.multiply.outer(omega[s : s + step], z)
        re = -2.0 * (np.sin(0.5 * ph) ** 2) @ w
        im = np.sin(ph) @ w
        out[s : s + step] = re * re + im * im
    return out


def fourier_distance_1d(
    x: EmpiricalMeasure, y: EmpiricalMeasure, H: float, quad: Optional[QuadratureConfig] = None
) -> DistanceEstimate:
    """``int |mu_hat - nu_hat|^2 phi(w) dw`` by quadrature, for 1D data.

    ``2 int_0^inf`` is split into: an analytic piece on ``[0, w_min]`` using
    the leading ``c w^2`` behaviour, log-spaced Gauss panels up to ``pi / D``
    (``D`` the diameter), uniform panels resolving the oscillations up to
    ``W``, and a tail on ``[W, inf)`` where the non-oscillating mean of the
    integrand is integrated exactly and the oscillating rest is bounded.
    """
    if not 0 < H < 1:
        raise ValidationError(f"need 0 < H < 1, got {H}")
    if x.dim != 1 or y.dim != 1:
        raise ValidationError("the Fourier route is implemented in one dimension")
    quad = quad or QuadratureConfig()
    spec = FractionalIncrement(H, 1)
    z = np.concatenate([x.points[:, 0], y.points[:, 0]])
    w = np.concatenate([np.full(x.n, 1.0 / x.n), np.full(y.n, -1.0 / y.n)])
    # merge coincident atoms so that exact cancellation is exact
    z, inv = np.unique(z, return_inverse=True)
    w = np.bincount(inv.reshape(-1), weights=w, minlength=z.size)
    w[np.abs(w) < 1e-15] = 0.0
    keep = w != 0
    z, w = z[keep], w[keep]
    base = {"H": H, "quadrature": "gauss-legendre"}
    if z.size == 0:
        return DistanceEstimate(value=0.0, estimator="fourier", n_x=x.n, n_y=y.n, metadata=base)
    z = z - np.mean(z)
    diam = float(z.max() - z.min())
    gaps = np.diff(np.sort(z))
    dmin = float(gaps.min())
    two_h = 2.0 * H
    c_phi = spec.prefactor

    def integrand(om):
        return _char_diff_sq(z, w, om) * phi_radial(spec, om)

    # low end: |mu_hat - nu_hat|^2 ~ m1^2 w^2 with m1 the first moment of the weights
    om_lo = quad.omega_min_factor / diam
    m1 = float(w @ z)
    low = c_phi * m1 * m1 * om_lo ** (2.0 - two_h) / (2.0 - two_h)

    # beyond W the integrand is sum_ij w_i w_j cos(d_ij w) phi(w): the d = 0
    # level g_inf integrates in closed form, each d > 0 term by a
    # Fourier-weighted quadrature (QAWF); very large point sets fall back to
    # pushing W out until the integration-by-parts bound is small
    g_inf = float(w @ w)
    period = 2.0 * math.pi / diam
    om_mid = math.pi / diam
    iu = np.triu_indices(z.size, k=1)
    dists = np.abs(z[iu[0]] - z[iu[1]])
    coeffs = 2.0 * w[iu[0]] * w[iu[1]]
    warn = None
    if dists.size <= quad.max_tail_pairs:
        om_hi = om_mid + quad.tail_periods * period
        n_osc = quad.tail_periods * quad.panels_per_period
        uniq, inv = np.unique(dists, return_inverse=True)
        csum = np.bincount(inv.reshape(-1), weights=coeffs, minlength=uniq.size)
        osc_tail, osc_err = 0.0, 0.0
        for dist, c in zip(uniq, csum):
            val, err = integrate.quad(
                lambda om: om ** (-1.0 - two_h), om_hi, np.inf, weight="cos", wvar=float(dist),
                epsabs=1e-13, limlst=200,
            )
            osc_tail += c * val
            osc_err += abs(c) * err
        tail = c_phi * (g_inf * om_hi ** (-two_h) / two_h + osc_tail)
        tail_err = c_phi * osc_err
        tail_method = "qawf"
    else:
        # |int_W^inf cos(d w) w^-(1+2H) dw| <= 2 / (d W^(1+2H)) by parts
        pair_bound = float(np.sum(np.abs(coeffs) / dists))
        target = quad.tail_tol * max(g_inf * om_mid ** (-two_h) / two_h, 1e-300)
        om_hi = max(om_mid * 4.0, (2.0 * pair_bound / target) ** (1.0 / (1.0 + two_h)))
        n_osc = int(math.ceil((om_hi - om_mid) / period * quad.panels_per_period))
        if n_osc > quad.max_panels:
            n_osc = quad.max_panels
            om_hi = om_mid + n_osc * period / quad.panels_per_period
            warn = "oscillatory panel cap reached; tail bound exceeds tolerance"
        tail = c_phi * g_inf * om_hi ** (-two_h) / two_h
        tail_err = c_phi * 2.0 * pair_bound * om_hi ** (-1.0 - two_h)
        tail_method = "bound"

    t, wt = np.polynomial.legendre.leggauss(quad.nodes)

    # log-spaced panels on [om_lo, om_mid] in u = log w
    n_log = max(1, int(math.ceil(math.log10(om_mid / om_lo) * quad.panels_per_decade)))
    edges = np.linspace(math.log(om_lo), math.log(om_mid), n_log + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    u = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    wu = (half[:, None] * wt[None, :]).ravel()
    om = np.exp(u)
    log_part = float(np.sum(wu * om * integrand(om)))

    edges = np.linspace(om_mid, om_hi, n_osc + 1)
    half = 0.5 * (edges[1] - edges[0])
    mid = 0.5 * (edges[1:] + edges[:-1])
    om = (mid[:, None] + half * t[None, :]).ravel()
    osc_part = float(half * np.sum(np.tile(wt, n_osc) * integrand(om)))

    value = 2.0 * (low + log_part + osc_part + tail)
    meta = dict(
        base,
        omega_min=om_lo,
        omega_max=om_hi,
        panels=n_log + n_osc,
        tail_bound=2.0 * tail_err,
        tail_method=tail_method,
        min_gap=dmin,
    )
    if warn or 2.0 * tail_err > 1e-3 * max(abs(value), 1.0):
        meta["warning"] = warn or "tail bound exceeds tolerance"
        warnings.warn(meta["warning"], RuntimeWarning, stacklevel=2)
    return DistanceEstimate(value=float(value), estimator="fourier", n_x=x.n, n_y=y.n, std_error=None, metadata=meta)


# ---------------------------------------------------------------------------
# Closed forms


def _abs_moment_normal(m: float, s: float, p: float) -> float:
    """``E|N(m, s^2)|^p``."""
    if p == 1.0:
        return float(
            s * math.sqrt(2.0 / math.pi) * math.exp(-m * m / (2 * s * s)) + m * (2.0 * special.ndtr(m / s) - 1.0)
        )
    return float(
        s**p * 2 ** (p / 2) * special.gamma((p + 1) / 2) / math.sqrt(math.pi)
        * special.hyp1f1(-p / 2, 0.5, -(m * m) / (2 * s * s))
    )


def gaussian_energy_oracle(delta: float, sigma: float, H: float = 0.5) -> float:
    """Fractional distance between ``N(0, 1)`` and ``N(delta, sigma^2)``.

    ``E|X - Y|^2H - E|X - X'|^2H / 2 - E|Y - Y'|^2H / 2`` with every term a
    (non-central) absolute normal moment; ``H = 1/2`` uses the folded-normal
    mean.
    """
    if not sigma > 0:
        raise ValidationError("sigma must be positive")
    if not 0 < H <= 1:
        raise ValidationError("need 0 < H <= 1")
    p = 2.0 * H
    cross = _abs_moment_normal(delta, math.sqrt(1.0 + sigma * sigma), p)
    within_x = _abs_moment_normal(0.0, sigma * math.sqrt(2.0), p)
    within_y = _abs_moment_normal(0.0, math.sqrt(2.0), p)
    return cross - 0.5 * within_x - 0.5 * within_y


def additive_distance(x: EmpiricalMeasure, y: EmpiricalMeasure) -> DistanceEstimate:
    """Sum over coordinates of the one-dimensional energy distances."""
    _check_pair(x, y)
    k1 = K.Fractional(0.5, 1)
    parts = [v_statistic_value(x.points[:, [i]], y.points[:, [i]], k1) for i in range(x.dim)]
    return DistanceEstimate(
        value=float(sum(parts)), estimator="v_statistic", n_x=x.n, n_y=y.n,
        metadata={"kernel": f"additive:d={x.dim}", "marginals": parts},
    )


def discrete_distance(p, q) -> float:
    """``sum_k 2^-k (p_k - q_k)^2`` over the states ``1..K``."""
    p = p.probs if isinstance(p, DiscretePMF) else np.asarray(p, dtype=float)
    q = q.probs if isinstance(q, DiscretePMF) else np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValidationError("probability vectors must have the same number of levels")
    weights = np.exp2(-np.arange(1, p.size + 1, dtype=float))
    return float(np.sum(weights * (p - q) ** 2))


def binary_distance(p: float, q: float) -> float:
    """Two-state field with ``Var D_0 = Var D_1 = 1/2``; equals ``(p - q)^2``."""
    if not (0 <= p <= 1 and 0 <= q <= 1):
        raise ValidationError("probabilities must lie in [0, 1]")
    eta1 = p - q
    eta0 = -eta1  # mass zero: eta(0) = -eta(1)
    return 0.5 * eta0 * eta0 + 0.5 * eta1 * eta1
