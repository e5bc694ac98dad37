import math

import numpy as np
import pytest

from kerneldist import fields as fld
from kerneldist import kernels as K
from kerneldist.errors import NumericalError, ValidationError
from kerneldist.measures import EmpiricalMeasure, SeedSpec, empirical_cdf_diff_l2

M = 100_000


def _cov_within(samples, target, n_se):
    """Empirical covariance entries within ``n_se`` standard errors of ``target``."""
    n = samples.shape[0]
    c = samples - samples.mean(axis=0)
    for i in range(samples.shape[1]):
        for j in range(samples.shape[1]):
            prod = c[:, i] * c[:, j]
            se = prod.std(ddof=1) / math.sqrt(n)
            assert abs(prod.mean() - target[i, j]) <= n_se * se + 1e-12, (i, j, prod.mean(), target[i, j])


@pytest.mark.parametrize("H", [0.2, 0.7])
def test_origin_is_pinned(H):
    f = fld.sample_field_at(fld.FBM(H), [0.0, 0.5, 1.0], 3)
    assert f.values[0] == 0.0
    grid = fld.sample_fbm_grid_1d(H, 0.1, 50, 3)
    assert grid.values[0] == 0.0


def test_brownian_covariance():
    vals, _ = fld.sample_field_batch(fld.FBM(0.5), [1.0, 2.0], 7, M)
    _cov_within(vals, np.array([[1.0, 1.0], [1.0, 2.0]]), 3)


def test_additive_variance():
    vals, _ = fld.sample_field_batch(fld.AdditiveBM(2), [[1.0, 1.0]], 7, M)
    _cov_within(vals, np.array([[2.0]]), 3)


@pytest.mark.parametrize(
    "spec, locs",
    [
        (fld.FBM(0.3, 2), [[0.5, 0.1], [-1.0, 0.3], [0.2, 2.0], [1.5, -1.5]]),
        (fld.AdditiveBM(2), [[0.5, 0.1], [-1.0, 0.3], [0.2, 2.0], [1.5, -1.5]]),
        (fld.DiscreteField(4), [[1.0], [2.0], [3.0], [4.0]]),
        (fld.GFFNeumann1D(200), [[0.0], [0.3], [0.31], [1.0]]),
    ],
)
def test_covariance_fidelity(spec, locs):
    vals, _ = fld.sample_field_batch(spec, locs, 11, M)
    _cov_within(vals, fld.field_covariance(spec, np.array(locs), np.array(locs)), 4)


def test_gff_series_converges_to_green():
    x = np.array([0.0, 0.25, 0.8, 1.0])
    trunc = fld.field_covariance(fld.GFFNeumann1D(1000), x, x)
    np.testing.assert_allclose(trunc, fld.neumann_green(x, x), atol=fld.GFFNeumann1D(1000).tail_bound() * 1.01)


def test_gff_domain():
    with pytest.raises(ValidationError):
        fld.sample_gff_series(10, [0.5, 1.5], 1)
    pts, factor = fld.rescale_to_unit([2.0, 4.0], 2.0, 6.0)
    assert pts.tolist() == [0.0, 0.5] and factor == 4.0


def test_self_similarity():
    H, sigma = 0.3, 3.0
    vals, _ = fld.sample_field_batch(fld.FBM(H), [0.7, sigma * 0.7], 5, M)
    v = vals.var(axis=0)
    assert v[1] == pytest.approx(sigma ** (2 * H) * v[0], rel=0.05)


@pytest.mark.parametrize("H", [0.25, 0.75])
def test_stationary_increments(H):
    x, y, delta = 0.4, 1.3, 2.7
    vals, _ = fld.sample_field_batch(fld.FBM(H), [x, y, x + delta, y + delta], 9, M)
    a = vals[:, 0] - vals[:, 1]
    b = vals[:, 2] - vals[:, 3]
    diff = a**2 - b**2
    assert abs(diff.mean()) <= 4 * diff.std(ddof=1) / math.sqrt(M)
    assert (a**2).mean() == pytest.approx(abs(x - y) ** (2 * H), rel=0.02)


def test_brownian_grid_increments_independent():
    _, paths, info = fld.fbm_grid_batch(0.5, 1.0, 3, 4, M)
    assert info["fallback"] is False
    inc = np.diff(paths, axis=1)
    r = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
    assert abs(r) < 3 / math.sqrt(M)
    assert inc.var(axis=0) == pytest.approx([1.0, 1.0], rel=0.02)


@pytest.mark.parametrize("H, sign", [(0.9, 1), (0.1, -1)])
def test_increment_correlation_sign(H, sign):
    _, paths, _ = fld.fbm_grid_batch(H, 1.0, 4, 8, M)
    r = np.corrcoef(paths[:, 1] - paths[:, 0], paths[:, 3] - paths[:, 2])[0, 1]
    assert np.sign(r) == sign


@pytest.mark.parametrize("H", [0.1, 0.5, 0.9])
def test_circulant_matches_cholesky_covariance(H):
    grid, paths, _ = fld.fbm_grid_batch(H, 0.25, 5, 2, M)
    _cov_within(paths[:, 1:], K.gram(K.Fractional(H), grid[1:], grid[1:]), 4)


def test_sampling_deterministic_and_chunk_independent():
    a, _ = fld.sample_field_batch(fld.FBM(0.4), [0.1, 0.9], 3, 9000)
    b, _ = fld.sample_field_batch(fld.FBM(0.4), [0.1, 0.9], 3, 9000, n_jobs=4)
    assert a.tobytes() == b.tobytes()
    f1 = fld.sample_field_at(fld.FBM(0.4), [0.1, 0.9], SeedSpec(3, 1))
    f2 = fld.sample_field_at(fld.FBM(0.4), [0.1, 0.9], SeedSpec(3, 1))
    assert f1.values.tobytes() == f2.values.tobytes()


def test_duplicate_locations_share_values():
    f = fld.sample_field_at(fld.FBM(0.6), [0.3, 0.3, 1.0], 2)
    assert f.values[0] == f.values[1]


def test_cholesky_jitter_failure_reports_eigenvalue():
    with pytest.raises(NumericalError) as info:
        fld.cholesky_jitter(np.array([[1.0, 0.0], [0.0, -1.0]]))
    assert info.value.diagnostics["min_eigenvalue"] == pytest.approx(-1.0)


def test_pairing_examples():
    f = fld.sample_field_at(fld.FBM(0.5), [0.0, 1.0, 2.0], 4)
    x = EmpiricalMeasure([0.0, 2.0])
    assert fld.pair_field_empirical(f, x, x) == 0.0
    y = EmpiricalMeasure([1.0])
    assert fld.pair_field_empirical(f.shifted(3.5), x, y) == pytest.approx(fld.pair_field_empirical(f, x, y), abs=1e-14)
    with pytest.raises(ValidationError):
        fld.pair_field_empirical(f, x, EmpiricalMeasure([5.0]))


def test_density_pairing_examples():
    t = fld.unit_grid(257)
    ones = fld.FieldRealization(t, np.ones_like(t), None, SeedSpec(0))
    assert fld.pair_field_density(ones, np.zeros_like(t)) == 0.0
    assert fld.pair_field_density(ones, fld.moment_density(t, 0)) == pytest.approx(2.0, abs=1e-12)
    ident = fld.FieldRealization(t, t, None, SeedSpec(0))
    assert fld.pair_field_density(ident, fld.moment_density(t, 1)) == pytest.approx(2 / 3, abs=1e-4)
    with pytest.raises(ValidationError):
        fld.pair_field_density(fld.FieldRealization(np.linspace(0, 1, 5), np.ones(5), None, SeedSpec(0)), np.ones(5))


def test_gff_pairing_variance_matches_cdf_distance():
    x = EmpiricalMeasure([0.1, 0.45, 0.8])
    y = EmpiricalMeasure([0.3, 0.95])
    locs = np.unique(np.concatenate([x.points, y.points]), axis=0)
    w = fld.pairing_weights(locs, x, y)
    vals, _ = fld.sample_field_batch(fld.GFFNeumann1D(1000), locs, 6, 50_000)
    sq = (vals @ w) ** 2
    ref = empirical_cdf_diff_l2(x, y)
    assert abs(sq.mean() - ref) <= 0.03 * ref + 4 * sq.std(ddof=1) / math.sqrt(sq.size)


@pytest.mark.parametrize("bad", [lambda: fld.FBM(1.0), lambda: fld.FBM(0.0), lambda: fld.GFFNeumann1D(0)])
def test_spec_validation(bad):
    with pytest.raises(ValidationError):
        bad()
