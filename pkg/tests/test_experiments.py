import csv
import io
import math

import numpy as np
import pytest

from kerneldist import experiments as exp
from kerneldist.errors import ValidationError


def _rows(text):
    return list(csv.reader(line for line in io.StringIO(text) if not line.startswith("#")))


def test_parse_grid():
    assert exp.parse_grid("0.1:0.9:9") == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    assert exp.parse_grid("0.25, 3") == [0.25, 3.0]
    with pytest.raises(ValidationError):
        exp.parse_grid("1:2")


def test_moment_limits():
    assert exp.moment_limits(1) == (4 / 9, 0.0)
    assert exp.moment_limits(0) == (0.0, 2.0)
    assert exp.moment_limits(2) == (0.0, 2 / 9)


def test_summarize_counts_nonfinite_separately():
    s = exp._summarize(np.array([1.0, -1.0, 3.0, np.inf, np.nan]))
    assert s["nonfinite_frac"] == 0.4
    assert s["negative_frac"] == 0.2
    assert s["signal_mean"] == 1.0
    assert s["count"] == 5
    assert math.isnan(exp._summarize(np.array([2.0, 2.0]))["snr"])


def test_moment_sweep_small():
    r = exp.moment_sweep([0.5], [0, 1], resolution=257, M=2000, seed=1)
    assert r.columns == ["H", "m", "mean", "stderr"]
    # E <B, q_0>^2 for Brownian motion pinned at 0 on [-1, 1]: 2 * int_0^1 (1 - t)^2 ... = 2/3
    m0 = r.rows[0]
    assert abs(m0["mean"] - 2 / 3) < 4 * m0["stderr"]
    m1 = r.rows[1]
    assert abs(m1["mean"] - 4 / 15) < 4 * m1["stderr"]


def test_moment_sweep_even_resolution_uses_cholesky():
    r = exp.moment_sweep([0.5], [0], resolution=256, M=2000, seed=1)
    assert abs(r.rows[0]["mean"] - 2 / 3) < 4 * r.rows[0]["stderr"]
    with pytest.raises(ValidationError):
        exp.moment_sweep([0.5], [0], resolution=100)
    with pytest.raises(ValidationError):
        exp.moment_sweep([0.5], [-1])


def test_snr_sweep_conventions_agree():
    a = exp.snr_sweep(("mean", 0.5), [0.3, 0.7], N=8, R=500, seed=3, convention="corrected")
    b = exp.snr_sweep(("mean", 0.5), [0.3, 0.7], N=8, R=500, seed=3, convention="paper")
    for ra, rb in zip(a.rows, b.rows):
        assert ra["snr"] == pytest.approx(rb["snr"], rel=1e-9)
    assert exp.snr_argmax(a) == exp.snr_argmax(b)


def test_snr_sweep_unbiased_at_null():
    r = exp.snr_sweep(("mean", 0.0), [0.2, 0.5, 0.8], N=16, R=4000, seed=5)
    for row in r.rows:
        se = row["signal_std"] / math.sqrt(4000)
        assert abs(row["signal_mean"]) < 4 * se


def test_snr_sweep_validation():
    with pytest.raises(ValidationError):
        exp.snr_sweep(("mean", 0.5), [0.5], N=1, R=500)
    with pytest.raises(ValidationError):
        exp.snr_sweep(("mean", 0.5), [0.5], N=8, R=50)
    with pytest.raises(ValidationError):
        exp.snr_sweep(("median", 0.5), [0.5], N=8, R=500)
    with pytest.raises(ValidationError):
        exp.snr_sweep(("mean", 0.5), [1.0], N=8, R=500)


def test_sweep_parallel_is_bit_identical():
    a = exp.snr_sweep(("std", 1.3), [0.2, 0.6], N=8, R=2100, seed=9)
    b = exp.snr_sweep(("std", 1.3), [0.2, 0.6], N=8, R=2100, seed=9, n_jobs=3)
    assert a.to_csv() == b.to_csv()
    c = exp.moment_sweep([0.3, 0.7], [0, 1], M=5000, seed=2)
    d = exp.moment_sweep([0.3, 0.7], [0, 1], M=5000, seed=2, n_jobs=2)
    assert c.to_csv() == d.to_csv()


def test_student_t_small():
    r = exp.student_t_comparison([1.0, 3.0], [0.05], d=8, N=640, seed=4)
    assert r.columns == ["f", "tau", "kernel", "snr", "negative_frac", "nonfinite_frac"]
    assert len(r.rows) == 4
    assert {row["kernel"] for row in r.rows} == {"fractional", "riesz"}
    assert all(row["count"] == 20 for row in r.rows)
    assert "sigma" in r.metadata
    assert any(k.startswith("scale_factor[") for k in r.metadata)
    text = r.to_csv()
    assert _rows(text)[0] == r.columns


def test_student_t_redraw_and_single_precision():
    r = exp.student_t_comparison([0.5], [0.1], d=4, N=320, seed=4, redraw_sigma=True, precision="single")
    assert r.metadata["sigma"] == []
    assert all(0 <= row["nonfinite_frac"] <= 1 for row in r.rows)
    with pytest.raises(ValidationError):
        exp.student_t_comparison([1.0], [0.1], d=2)


def test_riesz_scale_factor_is_power_of_two():
    from kerneldist.kernels import RieszGFF

    X = np.full((4, 3), 10.0)
    Y = np.zeros((4, 3))
    s = exp.riesz_scale_factor(RieszGFF(0.5, 3), X, Y)
    assert math.log2(s) == round(math.log2(s))
    assert s == pytest.approx(2.0 ** round(math.log2(math.sqrt(300.0) ** 2)))


def test_csv_metadata_and_floats_roundtrip():
    r = exp.SweepResult(["a", "b"], [{"a": 0.1, "b": "x"}], {"seed": 7, "version": "0"})
    text = r.to_csv()
    assert text.splitlines()[:2] == ["# seed=7", "# version=0"]
    assert float(_rows(text)[1][0]) == 0.1


def test_verify_cvm_passes():
    r = exp.verify_cvm(seed=3, sets=20)
    assert all(row["pass"] for row in r.rows)
