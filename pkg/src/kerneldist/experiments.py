"""Desk-scale reproductions of the moment, SNR and Student-t studies.

Every sweep takes a base seed and derives one stream per work item with
:meth:`SeedSpec.child`; results are reduced in cell order so a sweep is
bit-identical whether its cells run serially or on a thread pool.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import __version__
from . import fields as fld
from . import kernels as K
from .errors import ValidationError
from .estimators import (
    combine_unbiased,
    field_mc_distance,
    fourier_distance_1d,
    gaussian_energy_oracle,
    unbiased_components,
    v_statistic_value,
)
from .measures import (
    EmpiricalMeasure,
    MultivariateStudentT,
    SeedSpec,
    as_seed,
    build_student_scale,
    empirical_cdf_diff_l2,
    sample_array,
)

BLOCK = 1024  # replications per random stream in the SNR sweep


@dataclass(frozen=True)
class SweepConfig:
    experiment: str
    axis: tuple
    n: int = 32
    replications: int = 10_000
    fields: int = 10_000
    seed: int = 7
    scale_factors: tuple = ()

    def __post_init__(self):
        for name in ("n", "replications", "fields"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")


@dataclass
class SweepResult:
    columns: list
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name) -> list:
        return [r[name] for r in self.rows]

    def to_csv(self, sink: Optional[io.TextIOBase] = None, columns: Optional[Sequence[str]] = None) -> str:
        """CSV with ``#`` metadata lines; floats are written with ``repr``."""
        out = sink if sink is not None else io.StringIO()
        for key in sorted(self.metadata):
            out.write(f"# {key}={_fmt(self.metadata[key])}\n")
        cols = list(columns or self.columns)
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(cols)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in cols])
        return out.getvalue() if sink is None else ""


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ";".join(_fmt(x) for x in v)
    return str(v)


def parse_grid(text: str) -> list:
    """``a:b:n`` (``n`` evenly spaced values) or a comma separated list."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid {text!r} must look like start:stop:count")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise ValidationError("grid count must be positive")
        return [round(v, 12) for v in np.linspace(a, b, n).tolist()]
    return [float(v) for v in text.split(",") if v.strip()]


def _summarize(values: np.ndarray) -> dict:
    """Mean/std/SNR over finite outcomes plus negativity and non-finite fractions."""
    values = np.asarray(values, dtype=float)
    total = values.size
    finite = values[np.isfinite(values)]
    nonfinite = total - finite.size
    mean = float(np.mean(finite)) if finite.size else math.nan
    std = float(np.std(finite, ddof=1)) if finite.size > 1 else math.nan
    snr = mean / std if finite.size > 1 and std > 0 else math.nan
    return {
        "signal_mean": mean,
        "signal_std": std,
        "snr": snr,
        "negative_frac": float(np.sum(finite < 0)) / total,
        "nonfinite_frac": nonfinite / total,
        "count": total,
    }


def _run_cells(fn, cells, n_jobs):
    if n_jobs > 1 and len(cells) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _check_h_grid(h_grid):
    if not h_grid or any(not 0 < h < 1 for h in h_grid):
        raise ValidationError("H grid must be non-empty and inside (0, 1)")


def _meta(seed: SeedSpec, **extra) -> dict:
    return {"version": __version__, "seed": seed.base_seed, "stream": seed.stream_index, **extra}


# ---------------------------------------------------------------------------
# Moments of fractional motion


def moment_limits(m: int) -> tuple:
    """Limits of ``E <B^H, q_m>^2`` as ``H -> 1`` and ``H -> 0``."""
    high = 4.0 / (m + 2) ** 2 if m % 2 == 1 else 0.0
    low = 2.0 / (m + 1) ** 2 if m % 2 == 0 else 0.0
    return high, low


def _fbm_on_unit_grid(H, resolution, seed, size, n_jobs=1):
    """fBm pinned at 0 on ``resolution`` uniform points of [-1, 1]."""
    t = fld.unit_grid(resolution)
    if resolution % 2 == 1:
        # stationary increments: B(t + 1) - B(1) on [0, 2] is fBm on [-1, 1]
        _, paths, info = fld.fbm_grid_batch(H, 2.0 / (resolution - 1), resolution, seed, size, n_jobs=n_jobs)
        mid = resolution // 2
        return t, paths - paths[:, [mid]], info
    paths, info = fld.sample_field_batch(fld.FBM(H, 1), t, seed, size, n_jobs=n_jobs)
    return t, paths, info


def moment_sweep(h_grid, m_list, resolution: int = 257, M: int = 10_000, seed=7, n_jobs: int = 1) -> SweepResult:
    """``E <B^H, q_m>^2`` estimated from ``M`` fBm paths on [-1, 1] per ``H``."""
    _check_h_grid(h_grid)
    if resolution < 256:
        raise ValidationError("resolution must be at least 256")
    if any(int(m) != m or m < 0 for m in m_list):
        raise ValidationError("moments m must be non-negative integers")
    seed = as_seed(seed)
    t = fld.unit_grid(resolution)
    qs = [fld.moment_density(t, int(m)) for m in m_list]

    def cell(i):
        H = h_grid[i]
        _, paths, info = _fbm_on_unit_grid(H, resolution, seed.child(i), M)
        out = []
        for m, q in zip(m_list, qs):
            pair = trapezoid(paths * q, t, axis=1)
            sq = pair * pair
            out.append(
                {"H": H, "m": int(m), "mean": float(np.mean(sq)), "stderr": float(np.std(sq, ddof=1) / math.sqrt(M))}
            )
        return out, info.get("fallback", False)

    results = _run_cells(cell, list(range(len(h_grid))), n_jobs)
    rows = [r for cell_rows, _ in results for r in cell_rows]
    meta = _meta(seed, experiment="moment", resolution=resolution, fields=M,
                 circulant_fallbacks=sum(fb for _, fb in results))
    return SweepResult(columns=["H", "m", "mean", "stderr"], rows=rows, metadata=meta)


# ---------------------------------------------------------------------------
# SNR sweep against N(0, 1)


def _perturbed(kind: str, size: float, z: np.ndarray) -> np.ndarray:
    if kind == "mean":
        return z + size
    if kind == "std":
        return z * size
    raise ValidationError(f"perturbation must be 'mean' or 'std', got {kind!r}")


def snr_sweep(
    perturbation,
    h_grid,
    N: int = 32,
    R: int = 10_000,
    seed=7,
    convention: str = "corrected",
    n_jobs: int = 1,
) -> SweepResult:
    """SNR of the ``N``-sample unbiased fractional distance between ``N(0,1)`` and a perturbation.

    ``perturbation`` is ``("mean", delta)`` or ``("std", sigma)``.  The same
    ``R`` sample pairs are used for every ``H`` (common random numbers).
    """
    kind, size = perturbation
    size = float(size)
    _check_h_grid(h_grid)
    if N < 2:
        raise ValidationError("N must be at least 2")
    if R < 100:
        raise ValidationError("R must be at least 100")
    seed = as_seed(seed)
    blocks = []
    for b, start in enumerate(range(0, R, BLOCK)):
        rng = seed.child(0, b).generator()
        m = min(BLOCK, R - start)
        y = rng.standard_normal((m, N))
        x = _perturbed(kind, size, rng.standard_normal((m, N)))
        blocks.append((x[..., None], y[..., None]))

    def cell(H):
        k = K.Fractional(H, 1)
        parts = [unbiased_components(x, y, k) for x, y in blocks]
        W = np.concatenate([p[0] for p in parts])
        C = np.concatenate([p[1] for p in parts])
        return W, C

    comps = _run_cells(cell, list(h_grid), n_jobs)
    rows = []
    for H, (W, C) in zip(h_grid, comps):
        stats = _summarize(combine_unbiased(W, C, convention))
        rows.append({"perturbation": f"{kind}:{size:g}", "H": H, **stats,
                     "oracle": gaussian_energy_oracle(size if kind == "mean" else 0.0,
                                                      size if kind == "std" else 1.0, H)
                     * (1.0 if convention == "corrected" else 0.5)})
    meta = _meta(seed, experiment="snr-sweep", convention=convention, n=N, r=R)
    return SweepResult(
        columns=["perturbation", "H", "signal_mean", "signal_std", "snr"], rows=rows, metadata=meta
    )


def snr_argmax(result: SweepResult) -> float:
    """Grid value of ``H`` with the largest finite SNR."""
    best = max((r for r in result.rows if math.isfinite(r["snr"])), key=lambda r: r["snr"])
    return best["H"]


# ---------------------------------------------------------------------------
# Multivariate Student-t: fractional vs Riesz free-field energies


def draw_sigma(d: int, sigma_range, seed: SeedSpec) -> np.ndarray:
    lo, hi = sigma_range
    if not 0 < lo <= hi:
        raise ValidationError("sigma range must satisfy 0 < lo <= hi")
    return seed.generator().uniform(lo, hi, size=d)


def riesz_scale_factor(k: K.RieszGFF, X: np.ndarray, Y: np.ndarray) -> float:
    """``1 / median k`` over the paired points, rounded to a power of two.

    Lifts typical kernel values to order one; a power of two keeps the
    rescaling exact in floating point.
    """
    r = np.linalg.norm(X - Y, axis=-1).ravel()
    r = r[np.isfinite(r) & (r > 0)]
    if r.size == 0:
        return 1.0
    log2_med = -k.exponent * math.log2(float(np.median(r)))
    return float(2.0 ** round(max(min(log2_med, 1000.0), -1000.0)))


def student_t_comparison(
    f_list,
    tau_list,
    d: int = 16,
    alpha: float = 5.0,
    H: float = 0.5,
    N: int = 10_000,
    seed=7,
    batch: int = 32,
    sigma_range=(0.7, 0.8),
    redraw_sigma: bool = False,
    precision: str = "double",
    n_jobs: int = 1,
) -> SweepResult:
    """SNR of unbiased fractional and Riesz distances between Student-t laws.

    Per ``(f, tau)`` cell, ``N`` draws from ``t_f(Gamma_{tau, sigma})`` and
    ``N`` from ``t_f(I_d)`` are split into ``N // batch`` independent
    ``batch``-sample unbiased estimates; SNR is their mean over their std.
    """
    if d < 3:
        raise ValidationError("the Student-t comparison needs d >= 3")
    if batch < 2 or N < batch:
        raise ValidationError("need 2 <= batch <= N")
    seed = as_seed(seed)
    frac = K.Fractional(H, d)
    riesz = K.RieszGFF(alpha, d)
    sigma_fixed = draw_sigma(d, sigma_range, seed.child(1))
    R = N // batch
    n_used = R * batch
    cells = [(i, j) for i in range(len(f_list)) for j in range(len(tau_list))]

    def cell(ij):
        i, j = ij
        f, tau = float(f_list[i]), float(tau_list[j])
        cseed = seed.child(2, i, j)
        sigma = draw_sigma(d, sigma_range, cseed.child(0)) if redraw_sigma else sigma_fixed
        mu = MultivariateStudentT(f, build_student_scale(d, tau, sigma))
        nu = MultivariateStudentT(f, np.eye(d))
        X = sample_array(mu, n_used, cseed.child(1)).reshape(R, batch, d)
        Y = sample_array(nu, n_used, cseed.child(2)).reshape(R, batch, d)
        out = []
        for name, k in (("fractional", frac), ("riesz", riesz)):
            scale = riesz_scale_factor(k, X, Y) if name == "riesz" else 1.0
            W, C = unbiased_components(X, Y, k, scale=scale, precision=precision)
            stats = _summarize(combine_unbiased(W, C, "corrected"))
            out.append(
                {"f": f, "tau": tau, "kernel": name, **stats, "scale_factor": scale,
                 "failed": stats["nonfinite_frac"] == 1.0, "sigma": sigma.tolist()}
            )
        return out

    rows = [r for out in _run_cells(cell, cells, n_jobs) for r in out]
    meta = _meta(
        seed, experiment="student-t", d=d, alpha=alpha, H=H, n=N, batch=batch, replications=R,
        sigma_range=list(sigma_range), redraw_sigma=redraw_sigma, precision=precision, convention="corrected",
        sigma=[] if redraw_sigma else sigma_fixed.tolist(),
    )
    for r in rows:
        if r["kernel"] == "riesz":
            meta[f"scale_factor[f={r['f']:g},tau={r['tau']:g}]"] = r["scale_factor"]
    return SweepResult(
        columns=["f", "tau", "kernel", "snr", "negative_frac", "nonfinite_frac"], rows=rows, metadata=meta
    )


# ---------------------------------------------------------------------------
# H -> 1 and H -> 0 limits


def limit_checks(seed=7, n: int = 1000, replications: int = 200) -> SweepResult:
    """Directional checks of the large-H and small-H limits.

    (a) the V-statistic at ``H = 0.99`` between ``N(delta, 1)`` and ``N(0, 1)``
    samples is close to ``delta^2``; (b) at ``H = 0.01`` the distance between
    ``N(0, 1)`` and ``N(0, 1.3^2)`` is below 10% of its ``H = 0.5`` value.
    """
    seed = as_seed(seed)
    rows = []
    for idx, delta in enumerate((1.0, 0.0)):
        rng = seed.child(0, idx).generator()
        y = rng.standard_normal((n, 1))
        x = rng.standard_normal((n, 1)) + delta
        v = v_statistic_value(x, y, K.Fractional(0.99, 1))
        if delta:
            ok = abs(v - delta**2) <= 0.15 * delta**2
            target = delta**2
        else:
            # near H = 1 the V-statistic is ~ (xbar - ybar)^2 ~ (2 / n) chi2_1;
            # accept up to the chi2_1 level 9 (three standard deviations)
            target = 0.0
            ok = abs(v) <= 9.0 * 2.0 / n
        rows.append({"check": f"H=0.99,delta={delta:g}", "value": v, "target": target, "pass": bool(ok)})

    # (b) unbiased estimates averaged over independent replications
    rng = seed.child(1).generator()
    y = rng.standard_normal((replications, n, 1))
    x = 1.3 * rng.standard_normal((replications, n, 1))
    vals = {}
    for H in (0.01, 0.5):
        est = [
            combine_unbiased(*unbiased_components(x[i : i + 8], y[i : i + 8], K.Fractional(H, 1)), "corrected")
            for i in range(0, replications, 8)
        ]
        vals[H] = float(np.mean(np.concatenate(est)))
    ratio = vals[0.01] / vals[0.5]
    rows.append({"check": "H=0.01 vs H=0.5,sigma=1.3", "value": ratio, "target": 0.1, "pass": bool(ratio < 0.1)})
    oracle_ratio = float(gaussian_energy_oracle(0.0, 1.3, 0.01) / gaussian_energy_oracle(0.0, 1.3, 0.5))
    rows.append({"check": "oracle H=0.01 vs H=0.5,sigma=1.3", "value": oracle_ratio, "target": 0.1,
                 "pass": bool(oracle_ratio < 0.1)})
    meta = _meta(seed, experiment="limits", n=n, replications=replications)
    return SweepResult(columns=["check", "value", "target", "pass"], rows=rows, metadata=meta)


# ---------------------------------------------------------------------------
# Verification suites: the same distance through independent routes

VERIFY_COLUMNS = ["case", "set", "H", "check", "value", "reference", "tolerance", "pass"]


def _random_pair(seed: SeedSpec, max_points: int, lo: float, hi: float):
    rng = seed.generator()
    n_x, n_y = (int(v) for v in rng.integers(1, max_points // 2 + 1, size=2))
    x = rng.uniform(lo, hi, size=n_x)
    y = rng.uniform(lo, hi, size=n_y)
    return EmpiricalMeasure(x), EmpiricalMeasure(y)


def verify_equivalence(seed=7, sets: int = 5, h_values=(0.25, 0.5, 0.75), M: int = 100_000) -> SweepResult:
    """Kernel, Fourier and field-pairing routes on small random 1D point sets.

    Each set has at most 16 points in total.  The Fourier value must match the
    V-statistic to ``1e-3 max(value, 1)``; the field average must lie within
    four standard errors.
    """
    seed = as_seed(seed)
    rows = []
    for s in range(sets):
        x, y = _random_pair(seed.child(0, s), 16, -2.0, 2.0)
        for j, H in enumerate(h_values):
            v = v_statistic_value(x.points, y.points, K.Fractional(H, 1))
            fo = fourier_distance_1d(x, y, H).value
            tol = 1e-3 * max(abs(v), 1.0)
            rows.append({"case": "equivalence", "set": s, "H": H, "check": "fourier", "value": fo,
                         "reference": v, "tolerance": tol, "pass": bool(abs(fo - v) < tol)})
            mc = field_mc_distance(x, y, fld.FBM(H, 1), M, seed.child(1, s, j))
            tol = 4.0 * mc.std_error
            rows.append({"case": "equivalence", "set": s, "H": H, "check": "field_mc", "value": mc.value,
                         "reference": v, "tolerance": tol, "pass": bool(abs(mc.value - v) < tol)})
    return SweepResult(VERIFY_COLUMNS, rows, _meta(seed, experiment="verify-equivalence", fields=M))


def verify_cvm(seed=7, sets: int = 100, max_points: int = 40) -> SweepResult:
    """Energy distance (``H = 1/2``) against the squared CDF difference."""
    seed = as_seed(seed)
    rows = []
    k = K.Fractional(0.5, 1)
    for s in range(sets):
        x, y = _random_pair(seed.child(0, s), max_points, -3.0, 3.0)
        v = v_statistic_value(x.points, y.points, k)
        c = empirical_cdf_diff_l2(x, y)
        tol = 1e-12 * max(abs(c), np.finfo(float).tiny)
        rows.append({"case": "cvm", "set": s, "H": 0.5, "check": "cdf_l2", "value": v, "reference": c,
                     "tolerance": tol, "pass": bool(abs(v - c) <= tol)})
    return SweepResult(VERIFY_COLUMNS, rows, _meta(seed, experiment="verify-cvm"))


def verify_gff(seed=7, sets: int = 5, K_modes: int = 1000, M: int = 100_000, rel_tol: float = 0.03) -> SweepResult:
    """Variance of the truncated Neumann GFF pairing against the squared CDF difference on [0, 1]."""
    seed = as_seed(seed)
    rows = []
    spec = fld.GFFNeumann1D(K_modes)
    for s in range(sets):
        x, y = _random_pair(seed.child(0, s), 16, 0.0, 1.0)
        c = empirical_cdf_diff_l2(x, y)
        mc = field_mc_distance(x, y, spec, M, seed.child(1, s))
        tol = rel_tol * c + 4.0 * mc.std_error
        rows.append({"case": "gff", "set": s, "H": 0.5, "check": "field_mc", "value": mc.value, "reference": c,
                     "tolerance": tol, "pass": bool(abs(mc.value - c) <= tol)})
    return SweepResult(VERIFY_COLUMNS, rows, _meta(seed, experiment="verify-gff", modes=K_modes, fields=M))


VERIFY_CASES = {"equivalence": verify_equivalence, "cvm": verify_cvm, "gff": verify_gff}
