import csv
import io

import pytest

from kerneldist import cli


def _run(argv, capsys):
    code = cli.run(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _table(text):
    return list(csv.reader(line for line in io.StringIO(text) if not line.startswith("#")))


@pytest.fixture
def points(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("0\n2\n")
    b.write_text("1\n3\n")
    return str(a), str(b)


def test_distance_identical_is_zero(points, capsys):
    a, _ = points
    code, out, _ = _run(["distance", "--x", a, "--y", a, "--kernel", "fractional:H=0.5", "--estimator", "vstat"], capsys)
    assert code == 0
    rows = _table(out)
    assert rows[0] == ["estimator", "kernel", "value", "std_error", "n_x", "n_y", "metadata"]
    assert float(rows[1][2]) == 0.0


@pytest.mark.parametrize("estimator", ["vstat", "fourier", "cvm"])
def test_distance_routes_agree(points, capsys, estimator):
    a, b = points
    code, out, _ = _run(["distance", "--x", a, "--y", b, "--estimator", estimator], capsys)
    assert code == 0
    assert float(_table(out)[1][2]) == pytest.approx(0.5, abs=1e-3)


def test_distance_metadata_header(points, capsys):
    a, b = points
    _, out, _ = _run(["distance", "--x", a, "--y", b, "--estimator", "unbiased", "--convention", "paper"], capsys)
    header = [line for line in out.splitlines() if line.startswith("#")]
    assert "# convention=paper" in header and "# seed=7" in header
    assert any(line.startswith("# version=") for line in header)


def test_distance_field_mc(points, capsys):
    a, b = points
    code, out, _ = _run(["distance", "--x", a, "--y", b, "--estimator", "field-mc", "--replications", "20000"], capsys)
    assert code == 0
    row = _table(out)[1]
    assert abs(float(row[2]) - 0.5) < 4 * float(row[3])


def test_distance_errors(points, capsys, tmp_path):
    a, b = points
    assert _run(["distance", "--x", a, "--y", b, "--kernel", "bogus"], capsys)[0] == 1
    assert _run(["distance", "--x", str(tmp_path / "missing.csv"), "--y", b], capsys)[0] == 1
    assert _run(["distance", "--x", a, "--y", b, "--kernel", "green:d=3"], capsys)[0] == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("1\nnan\n")
    assert _run(["distance", "--x", str(bad), "--y", b], capsys)[0] == 1


def test_unknown_flag_prints_usage(capsys):
    code, _, err = _run(["distance", "--nope"], capsys)
    assert code == 1
    assert "usage:" in err


def test_unknown_subcommand(capsys):
    assert _run(["frobnicate"], capsys)[0] == 1


def test_numerical_failure_exit_code(monkeypatch, capsys):
    from kerneldist.errors import NumericalError

    def boom(args):
        raise NumericalError("matrix not positive definite", min_eigenvalue=-1.0)

    monkeypatch.setattr(cli, "_cmd_verify", boom)
    code, _, err = _run(["verify", "--case", "cvm"], capsys)
    assert code == 2
    assert "min_eigenvalue" in err


def test_sample_field_fbm(capsys, tmp_path):
    out = tmp_path / "f.csv"
    code, _, _ = _run(["sample-field", "--spec", "fbm", "--hurst", "0.3", "--grid", "0:1:1024", "--seed", "7",
                       "--out", str(out)], capsys)
    assert code == 0
    rows = _table(out.read_text())
    assert rows[0] == ["t", "value"]
    assert len(rows) == 1025
    assert float(rows[1][1]) == 0.0


def test_sample_field_other_specs(capsys):
    code, out, _ = _run(["sample-field", "--spec", "additive", "--dim", "2", "--grid", "0:1:3"], capsys)
    assert code == 0
    rows = _table(out)
    assert rows[0] == ["x1", "x2", "value"] and len(rows) == 10
    code, out, _ = _run(["sample-field", "--spec", "gff", "--grid", "0:1:11", "--modes", "50"], capsys)
    assert code == 0 and len(_table(out)) == 12
    code, out, _ = _run(["sample-field", "--spec", "discrete", "--modes", "4"], capsys)
    assert code == 0 and len(_table(out)) == 5
    assert _run(["sample-field", "--spec", "fbm"], capsys)[0] == 1
    assert _run(["sample-field", "--spec", "gff", "--grid", "0:2:5"], capsys)[0] == 1


def test_sample_field_off_origin_grid(capsys):
    code, out, _ = _run(["sample-field", "--spec", "fbm", "--hurst", "0.6", "--grid=-1,0.5,2"], capsys)
    assert code == 0
    assert len(_table(out)) == 4


def test_verify_cvm(capsys):
    code, out, _ = _run(["verify", "--case", "cvm", "--seed", "7"], capsys)
    assert code == 0
    rows = _table(out)
    assert rows[0][-1] == "pass"
    assert all(r[-1] == "True" for r in rows[1:])


def test_experiment_config_and_overrides(tmp_path, capsys):
    conf = tmp_path / "snr.conf"
    conf.write_text("# quick sweep\nexperiment=snr-sweep\nh_grid=0.2:0.8:4\nn=8\nr=300\nseed=1\n")
    code, out1, _ = _run(["experiment", "--config", str(conf)], capsys)
    assert code == 0
    rows = _table(out1)
    assert rows[0] == ["perturbation", "H", "signal_mean", "signal_std", "snr"]
    assert len(rows) == 5
    assert "# seed=1" in out1 and "# convention=corrected" in out1
    code, out2, _ = _run(["experiment", "--config", str(conf), "--set", "r=400", "--seed", "2"], capsys)
    assert code == 0
    assert "# r=400" in out2 and "# seed=2" in out2


def test_experiment_rejects_bad_config(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("experiment=moment\nbogus=1\n")
    assert _run(["experiment", "--config", str(conf)], capsys)[0] == 1
    conf.write_text("experiment=moment\nm_list=0.5\n")
    assert _run(["experiment", "--config", str(conf)], capsys)[0] == 1
    conf.write_text("not a pair\n")
    assert _run(["experiment", "--config", str(conf)], capsys)[0] == 1
    assert _run(["experiment", "--set", "experiment=nope"], capsys)[0] == 1


def test_output_is_byte_identical(tmp_path, capsys):
    args = ["experiment", "--experiment", "moment", "--set", "m=500", "--set", "h_grid=0.4"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.run(args + ["--out", str(a)]) == 0
    assert cli.run(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    for line in a.read_text().splitlines():
        if not line.startswith("#"):
            next(csv.reader([line]))
