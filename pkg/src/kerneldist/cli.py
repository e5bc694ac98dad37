"""Command-line entry point: ``kerneldist {distance,sample-field,verify,experiment}``.

Every command writes CSV to stdout or ``--out``.  Lines starting with ``#``
carry run metadata (version, seed, convention) and are the only non-tabular
content.  Exit codes: 0 success, 1 invalid input or usage, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import estimators as est
from . import experiments as exp
from . import fields as fld
from . import kernels as K
from .errors import NumericalError, UnsupportedKernelError, ValidationError
from .measures import read_points_csv

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

ESTIMATOR_CHOICES = ("unbiased", "biased", "vstat", "field-mc", "fourier", "cvm")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _header(**meta) -> str:
    return "".join(f"# {key}={meta[key]}\n" for key in sorted(meta))


def _json(meta: dict) -> str:
    def default(v):
        if isinstance(v, np.generic):
            return v.item()
        if isinstance(v, (tuple, set)):
            return list(v)
        return repr(v)

    return json.dumps(meta, sort_keys=True, default=default, separators=(",", ":"))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# distance


def field_for_kernel(k):
    """Gaussian field whose covariance is ``k`` (up to one-point terms that pairings cancel)."""
    if isinstance(k, K.Fractional):
        if k.H >= 1:
            raise UnsupportedKernelError("H = 1 has no fractional field; use H < 1")
        return fld.FBM(k.H, k.d)
    if isinstance(k, K.GreenGFF) and k.d == 1:
        return fld.FBM(0.5, 1)
    if isinstance(k, K.AdditiveL1):
        return fld.AdditiveBM(k.d)
    if isinstance(k, K.Discrete):
        return fld.DiscreteField(k.K)
    raise UnsupportedKernelError(f"no pointwise field sampler for {K.format_kernel(k)}")


def _cmd_distance(args) -> str:
    x = read_points_csv(args.x)
    y = read_points_csv(args.y)
    k = K.parse_kernel(args.kernel, default_dim=x.dim)
    name = args.estimator
    if name == "unbiased":
        res = est.unbiased_kernel_distance(x, y, k, convention=args.convention, cross=args.cross)
    elif name == "biased":
        res = est.biased_kernel_distance(x, y, k, convention="paper")
    elif name == "vstat":
        res = est.v_statistic_distance(x, y, k)
    elif name == "field-mc":
        res = est.field_mc_distance(x, y, field_for_kernel(k), args.replications, args.seed)
    elif name == "fourier":
        if not isinstance(k, K.Fractional) or k.d != 1 or k.H >= 1:
            raise UnsupportedKernelError("the Fourier route needs fractional:H<1 on 1D data")
        res = est.fourier_distance_1d(x, y, k.H)
    else:
        res = est.cvm_distance(x, y)
    convention = res.metadata.get("convention", args.convention if name == "unbiased" else "none")
    out = io.StringIO()
    out.write(_header(version=__version__, seed=args.seed, convention=convention))
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["estimator", "kernel", "value", "std_error", "n_x", "n_y", "metadata"])
    writer.writerow(
        [res.estimator, K.format_kernel(k), _fmt(res.value), _fmt(res.std_error), res.n_x, res.n_y,
         _json({**res.metadata, "scale_factor": res.scale_factor, "replications": res.replications})]
    )
    return out.getvalue()


# ---------------------------------------------------------------------------
# sample-field


def _cmd_sample_field(args) -> str:
    grid = np.asarray(exp.parse_grid(args.grid), dtype=float)
    if grid.size < 1:
        raise ValidationError("empty grid")
    info = {}
    if args.spec == "fbm":
        if args.hurst is None:
            raise ValidationError("--hurst is required for fbm")
        spec = fld.FBM(args.hurst, 1)
        step = grid[1] - grid[0] if grid.size > 1 else 1.0
        uniform = grid.size > 1 and step > 0 and np.allclose(np.diff(grid), step, rtol=1e-6, atol=0)
        if grid[0] == 0 and uniform:
            # circulant embedding on the uniform grid anchored at the origin
            real = fld.sample_fbm_grid_1d(args.hurst, float(step), grid.size, args.seed)
            values = real.values
        else:
            real = fld.sample_field_at(spec, grid, args.seed)
            values = real.values
        info = real.info
        locs = grid[:, None]
    elif args.spec == "gff":
        real = fld.sample_gff_series(args.modes, grid, args.seed)
        values, info, locs = real.values, real.info, grid[:, None]
    elif args.spec == "additive":
        axes = np.meshgrid(*([grid] * args.dim), indexing="ij")
        locs = np.stack([a.ravel() for a in axes], axis=1)
        real = fld.sample_field_at(fld.AdditiveBM(args.dim), locs, args.seed)
        values, info = real.values, real.info
    else:
        states = np.arange(1, args.modes + 1, dtype=float)[:, None]
        real = fld.sample_field_at(fld.DiscreteField(args.modes), states, args.seed)
        values, info, locs = real.values, real.info, states
    out = io.StringIO()
    out.write(_header(version=__version__, seed=args.seed, convention="none", spec=args.spec,
                      info=_json(info)))
    writer = csv.writer(out, lineterminator="\n")
    d = locs.shape[1]
    writer.writerow(["t", "value"] if d == 1 else [f"x{i + 1}" for i in range(d)] + ["value"])
    for p, v in zip(locs.tolist(), np.asarray(values).tolist()):
        writer.writerow([_fmt(c) for c in p] + [_fmt(v)])
    return out.getvalue()


# ---------------------------------------------------------------------------
# verify and experiment


def _with_convention(result: exp.SweepResult, default: str = "none") -> exp.SweepResult:
    result.metadata.setdefault("convention", default)
    return result


def _cmd_verify(args):
    result = _with_convention(exp.VERIFY_CASES[args.case](args.seed))
    ok = all(r["pass"] for r in result.rows)
    return result.to_csv(), ok


def _floats(text):
    return exp.parse_grid(text)


def _ints(text):
    values = exp.parse_grid(text)
    if any(v != int(v) for v in values):
        raise ValueError("expected integers")
    return [int(v) for v in values]


def _pair(text):
    lo, hi = (float(v) for v in text.split(","))
    return (lo, hi)


def _perturbation(text):
    kind, sep, size = text.partition(":")
    if not sep:
        raise ValueError("expected kind:size")
    return (kind.strip(), float(size))


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes"):
        return True
    if t in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# config key -> (keyword argument, parser, default)
_EXPERIMENTS = {
    "moment": (exp.moment_sweep, {
        "h_grid": ("h_grid", _floats, "0.05,0.95"),
        "m_list": ("m_list", _ints, "0,1,2"),
        "resolution": ("resolution", int, "257"),
        "m": ("M", int, "10000"),
        "seed": ("seed", int, "7"),
        "n_jobs": ("n_jobs", int, "1"),
    }),
    "snr-sweep": (exp.snr_sweep, {
        "perturbation": ("perturbation", _perturbation, "mean:0.5"),
        "h_grid": ("h_grid", _floats, "0.1:0.9:9"),
        "n": ("N", int, "32"),
        "r": ("R", int, "10000"),
        "seed": ("seed", int, "7"),
        "convention": ("convention", str, "corrected"),
        "n_jobs": ("n_jobs", int, "1"),
    }),
    "student-t": (exp.student_t_comparison, {
        "f_list": ("f_list", _floats, "0.25,0.5,1,2,3"),
        "tau_list": ("tau_list", _floats, "0.01,0.03,0.05,0.1"),
        "d": ("d", int, "16"),
        "alpha": ("alpha", float, "5"),
        "h": ("H", float, "0.5"),
        "n": ("N", int, "10000"),
        "batch": ("batch", int, "32"),
        "sigma_range": ("sigma_range", _pair, "0.7,0.8"),
        "redraw_sigma": ("redraw_sigma", _bool, "false"),
        "precision": ("precision", str, "double"),
        "seed": ("seed", int, "7"),
        "n_jobs": ("n_jobs", int, "1"),
    }),
    "limits": (exp.limit_checks, {
        "n": ("n", int, "1000"),
        "replications": ("replications", int, "200"),
        "seed": ("seed", int, "7"),
    }),
}


def read_config(path: str) -> dict:
    """``key=value`` lines; blank lines and ``#`` comments are ignored."""
    conf = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            conf[key.strip().lower()] = value.strip()
    return conf


def experiment_kwargs(conf: dict):
    """Resolve a merged config into ``(function, kwargs)``; unknown keys are rejected."""
    conf = dict(conf)
    name = conf.pop("experiment", None)
    if name not in _EXPERIMENTS:
        raise ValidationError(f"experiment must be one of {sorted(_EXPERIMENTS)}, got {name!r}")
    fn, table = _EXPERIMENTS[name]
    unknown = sorted(set(conf) - set(table))
    if unknown:
        raise ValidationError(f"unknown keys for {name}: {', '.join(unknown)}")
    kwargs = {}
    for key, (kw, parse, default) in table.items():
        raw = conf.get(key, default)
        try:
            kwargs[kw] = parse(raw)
        except ValueError as exc:
            raise ValidationError(f"bad value for {key}: {raw!r}") from exc
    return name, fn, kwargs


def _cmd_experiment(args) -> str:
    conf = read_config(args.config) if args.config else {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        conf[key.strip().lower()] = value.strip()
    if args.seed is not None:
        conf["seed"] = str(args.seed)
    if args.experiment is not None:
        conf["experiment"] = args.experiment
    name, fn, kwargs = experiment_kwargs(conf)
    default_convention = "corrected" if name == "student-t" else "none"
    return _with_convention(fn(**kwargs), default_convention).to_csv()


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kerneldist", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"kerneldist {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("distance", help="distance between two point files")
    p.add_argument("--x", required=True, help="CSV of points, one per row, no header")
    p.add_argument("--y", required=True)
    p.add_argument("--kernel", default="fractional:H=0.5", help="e.g. fractional:H=0.5, riesz:alpha=5,d=16")
    p.add_argument("--estimator", choices=ESTIMATOR_CHOICES, default="vstat")
    p.add_argument("--convention", choices=("paper", "corrected"), default="corrected")
    p.add_argument("--cross", choices=("paired", "full", "offdiag"), default="paired",
                   help="cross term of the unbiased estimate")
    p.add_argument("--replications", type=int, default=10_000, help="fields for field-mc")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out")

    p = sub.add_parser("sample-field", help="one field realization on a grid")
    p.add_argument("--spec", choices=("fbm", "gff", "additive", "discrete"), required=True)
    p.add_argument("--hurst", type=float)
    p.add_argument("--grid", default="0:1:1024", help="start:stop:count or comma list")
    p.add_argument("--dim", type=int, default=2, help="dimension of the additive field")
    p.add_argument("--modes", type=int, default=1000, help="GFF series length or number of discrete states")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out")

    p = sub.add_parser("verify", help="cross-check the distance representations")
    p.add_argument("--case", choices=sorted(exp.VERIFY_CASES), default="equivalence")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out")

    p = sub.add_parser("experiment", help="run a sweep from a key=value config")
    p.add_argument("--config")
    p.add_argument("--experiment", choices=sorted(_EXPERIMENTS))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config value")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    return parser


def _emit(text: str, out: Optional[str]):
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        ok = True
        if args.command == "distance":
            text = _cmd_distance(args)
        elif args.command == "sample-field":
            text = _cmd_sample_field(args)
        elif args.command == "verify":
            text, ok = _cmd_verify(args)
        else:
            text = _cmd_experiment(args)
        _emit(text, args.out)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {_json(exc.diagnostics)}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if not ok:
        print("verification failed", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
