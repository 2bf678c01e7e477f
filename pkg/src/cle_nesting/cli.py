"""Command-line front end.

Subcommands::

    constants     nesting constants for one κ
    curve         dimension spectrum ν ↦ (γ_κ(ν), 2 - γ_κ(ν)) as CSV or JSON
    gff-profile   the κ = 4 thick-point profile α ↦ (ν(α), dim(α))
    simulate      Monte Carlo window probability, JSON report
    legendre      Fenchel-Legendre transform of a built-in or atomic law

Every subcommand accepts ``--config FILE`` with flat ``key = value`` lines
whose keys are the long flag names (``nu-lo = 0.5``).  Command-line flags
override the file.  ``CLE_NESTING_SEED`` sets the default ``--seed``.

Exit codes: 0 on success, 2 on usage or configuration errors, 1 on runtime
failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DomainError
from .ldp import gaussian_mgf, legendre_transform, symmetric_bernoulli_mgf
from .montecarlo import ESTIMATORS, SimConfig, simulate_weighted_window, simulate_window
from .nesting import EMPTY, curve_parametric, default_lambda_grid, dim_phi, gamma_nu, nu_max, nu_typical
from .radius_law import KappaParam, mean_T, radius_law
from .weighted import GFF_SIGMA, WeightLaw, gff_dim_closed, GffParams, gff_nu_profile

SEED_ENV = "CLE_NESTING_SEED"
CURVE_COLUMNS = ("nu", "gamma", "dim", "nu_parametric", "gamma_parametric")
CONSTANT_COLUMNS = ("kappa", "nu_typical", "nu_max", "lambda_crit", "gasket_dim", "mean_T")
GFF_COLUMNS = ("alpha", "nu", "dim", "nu_max_kappa4")


class UsageError(Exception):
    """Bad flags or configuration; reported with exit code 2."""


# -- formatting ------------------------------------------------------------------

def format_value(v, precision: int) -> str:
    """Fixed-point in ``[1e-3, 1e7)``, scientific otherwise, ``precision`` digits."""
    if v is EMPTY:
        return "empty"
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    if v == 0.0 or 1e-3 <= abs(v) < 1e7:
        return f"{v:.{precision}f}"
    return f"{v:.{precision}e}"


def _json_value(v, precision: int):
    text = format_value(v, precision)
    try:
        out = float(text)
    except ValueError:
        return text
    return text if math.isinf(out) else out


def _emit(rows, columns, fmt: str, precision: int, out):
    if fmt == "csv":
        out.write(",".join(columns) + "\n")
        for row in rows:
            out.write(",".join(format_value(v, precision) for v in row) + "\n")
    else:
        records = [{c: _json_value(v, precision) for c, v in zip(columns, row)} for row in rows]
        json.dump(records if len(records) != 1 else records[0], out, indent=2)
        out.write("\n")


def _open_output(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", encoding="utf-8", newline=""), True
    except OSError as exc:
        raise UsageError(f"cannot open output {path!r}: {exc}") from exc


# -- argument types -----------------------------------------------------------------

def _kappa(text: str) -> float:
    try:
        k = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid kappa {text!r}")
    if not 8.0 / 3.0 < k < 8.0:
        raise argparse.ArgumentTypeError("kappa must lie in (8/3, 8)")
    return k


def _precision(text: str) -> int:
    try:
        p = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid precision {text!r}")
    if not 1 <= p <= 17:
        raise argparse.ArgumentTypeError("precision must lie in [1, 17]")
    return p


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer {text!r}")
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _seed(text: str) -> int:
    try:
        s = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}")
    if not 0 <= s < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return s


def _tilt(text: str):
    if text in ("auto", "off"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("tilt must be auto, off or a number")


def _finite_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number {text!r}")
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError("value must be finite")
    return v


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return 0
    try:
        return _seed(raw.strip())
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"{SEED_ENV}: {exc}") from exc


# -- subcommands ------------------------------------------------------------------

def cmd_constants(args, out):
    p = KappaParam(args.kappa)
    row = (p.kappa, nu_typical(p), nu_max(p), p.lambda_crit, p.gasket_dim, mean_T(p))
    _emit([row], CONSTANT_COLUMNS, args.format, args.precision, out)


def curve_rows(kappa: float, n_points: int = 512, nu_min: Optional[float] = None,
               nu_hi: Optional[float] = None):
    """Rows ``(ν, γ, dim, ν_param, γ_param)`` ordered by ν, plus the gasket row at ν = 0."""
    p = KappaParam(kappa)
    rows = [(0.0, p.lambda_crit, dim_phi(p, 0.0), 0.0, p.lambda_crit)]
    pts = curve_parametric(p, default_lambda_grid(p, n_points))
    for nu, g_par in sorted(pts):
        rows.append((nu, gamma_nu(p, nu), dim_phi(p, nu), nu, g_par))
    if nu_min is not None:
        rows = [r for r in rows if r[0] >= nu_min]
    if nu_hi is not None:
        rows = [r for r in rows if r[0] <= nu_hi]
    return rows


def cmd_curve(args, out):
    rows = curve_rows(args.kappa, args.n_points, args.nu_min, args.nu_max)
    _emit(rows, CURVE_COLUMNS, args.format, args.precision, out)


def gff_rows(n_points: int = 201, sigma: float = GFF_SIGMA):
    """Rows ``(α, ν(α), dim(α), ν_max(κ=4))`` on a symmetric grid including 0 and ±2σ/π."""
    half = 2.0 * sigma / math.pi
    if n_points % 2 == 0:
        n_points += 1
    alphas = np.linspace(-half, half, n_points)
    alphas[n_points // 2] = 0.0
    g = GffParams(sigma)
    ref = nu_max(4.0)
    return [(float(a), gff_nu_profile(float(a), sigma), gff_dim_closed(g, float(a)), ref) for a in alphas]


def cmd_gff_profile(args, out):
    if not args.sigma > 0.0:
        raise UsageError("sigma must be positive")
    _emit(gff_rows(args.n_points, args.sigma), GFF_COLUMNS, args.format, args.precision, out)


def _sim_config(args) -> SimConfig:
    tilt = None if args.tilt == "off" else args.tilt
    weight = None
    alpha_window = None
    if args.weight_atoms is not None:
        try:
            weight = WeightLaw.parse_atoms(args.weight_atoms)
        except ValueError as exc:
            raise UsageError(f"--weight-atoms: {exc}") from exc
        if args.alpha_lo is None or args.alpha_hi is None:
            raise UsageError("--weight-atoms requires --alpha-lo and --alpha-hi")
        alpha_window = (args.alpha_lo, args.alpha_hi)
    elif args.alpha_lo is not None or args.alpha_hi is not None:
        raise UsageError("--alpha-lo/--alpha-hi require --weight-atoms")
    seed = args.seed if args.seed is not None else _default_seed()
    return SimConfig(
        kappa=args.kappa, r=args.r, window=(args.nu_lo, args.nu_hi), n_samples=args.samples,
        seed=seed, tilt=tilt, weight=weight, alpha_window=alpha_window, workers=args.workers,
        estimator=args.estimator,
    )


def cmd_simulate(args, out):
    cfg = _sim_config(args)
    report = simulate_weighted_window(cfg) if cfg.weight is not None else simulate_window(cfg)
    out.write(report.to_json(indent=2) + "\n")


def cmd_legendre(args, out):
    name = args.mgf
    if args.atoms is not None:
        try:
            mgf = WeightLaw.parse_atoms(args.atoms).mgf
        except ValueError as exc:
            raise UsageError(f"--atoms: {exc}") from exc
    elif name == "gaussian":
        mgf = gaussian_mgf(args.mean, args.var)
    elif name == "bernoulli":
        mgf = symmetric_bernoulli_mgf(args.sigma)
    elif name == "cle":
        if args.kappa is None:
            raise UsageError("--mgf cle requires --kappa")
        mgf = radius_law(args.kappa).as_mgf
    else:
        raise UsageError("give --mgf or --atoms")
    res = legendre_transform(mgf, args.x)
    out.write(format_value(res.value, args.precision) + "\n")


# -- parser ------------------------------------------------------------------------

def _add_output(sp, formats=("csv", "json"), default="csv"):
    sp.add_argument("--format", choices=formats, default=default)
    sp.add_argument("--output", "-o", default=None, help="output path (default stdout)")
    sp.add_argument("--precision", type=_precision, default=9, help="decimal digits, 1..17")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cle-nesting", description="CLE nesting statistics")
    parser.add_argument("--config", default=None, help="flat key=value file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("constants", help="nu_typical, nu_max, lambda_c, gasket dimension, E[T]")
    sp.add_argument("--kappa", type=_kappa, required=True)
    _add_output(sp)
    sp.set_defaults(func=cmd_constants)

    sp = sub.add_parser("curve", help="dimension spectrum of the nesting density")
    sp.add_argument("--kappa", type=_kappa, required=True)
    sp.add_argument("--n-points", type=_positive_int, default=512)
    sp.add_argument("--nu-min", type=_finite_float, default=None)
    sp.add_argument("--nu-max", type=_finite_float, default=None)
    _add_output(sp)
    sp.set_defaults(func=cmd_curve)

    sp = sub.add_parser("gff-profile", help="kappa = 4 thick-point profile")
    sp.add_argument("--n-points", type=_positive_int, default=201)
    sp.add_argument("--sigma", type=_finite_float, default=GFF_SIGMA)
    _add_output(sp)
    sp.set_defaults(func=cmd_gff_profile)

    sp = sub.add_parser("simulate", help="Monte Carlo window probability")
    sp.add_argument("--kappa", type=_kappa, required=True)
    sp.add_argument("--r", type=_finite_float, required=True)
    sp.add_argument("--nu-lo", type=_finite_float, required=True)
    sp.add_argument("--nu-hi", type=_finite_float, required=True)
    sp.add_argument("--samples", type=_positive_int, default=100_000)
    sp.add_argument("--seed", type=_seed, default=None)
    sp.add_argument("--tilt", type=_tilt, default="auto")
    sp.add_argument("--weight-atoms", default=None)
    sp.add_argument("--alpha-lo", type=_finite_float, default=None)
    sp.add_argument("--alpha-hi", type=_finite_float, default=None)
    sp.add_argument("--workers", type=_positive_int, default=1)
    sp.add_argument("--estimator", choices=ESTIMATORS, default="conditional")
    sp.add_argument("--output", "-o", default=None)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("legendre", help="Fenchel-Legendre transform at x")
    sp.add_argument("--mgf", choices=("gaussian", "bernoulli", "cle"), default=None)
    sp.add_argument("--atoms", default=None, help='atomic law "v:p,v:p"')
    sp.add_argument("--x", type=_finite_float, required=True)
    sp.add_argument("--kappa", type=_kappa, default=None)
    sp.add_argument("--mean", type=_finite_float, default=0.0)
    sp.add_argument("--var", type=_finite_float, default=1.0)
    sp.add_argument("--sigma", type=_finite_float, default=1.0)
    sp.add_argument("--precision", type=_precision, default=9)
    sp.set_defaults(func=cmd_legendre)
    return parser


def read_config(path: str) -> dict:
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value")
        out[key.strip().lstrip("-")] = value.strip()
    return out


def _config_argv(parser: argparse.ArgumentParser, command: str, values: dict) -> list[str]:
    """Turn config entries into flag tokens for ``command``, rejecting unknown keys."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = sub.choices[command]
    known = {opt[2:] for act in sp._actions for opt in act.option_strings if opt.startswith("--")}
    argv = []
    for key, value in values.items():
        flag = key.replace("_", "-")
        if flag in ("config", "help"):
            raise UsageError(f"config key {key!r} is not allowed")
        if flag not in known:
            raise UsageError(f"unknown config key {key!r} for {command}")
        argv += [f"--{flag}", value]
    return argv


def _parse(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    ns, _ = pre.parse_known_args(argv)
    if ns.config is None:
        return parser.parse_args(argv)
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    idx = next((i for i, tok in enumerate(argv) if tok in sub.choices), None)
    if idx is None:
        return parser.parse_args(argv)
    extra = _config_argv(parser, argv[idx], read_config(ns.config))
    # Config entries go first so explicit flags, parsed later, take precedence.
    return parser.parse_args(argv[:idx + 1] + extra + argv[idx + 1:])


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out, close = None, False
    try:
        out, close = _open_output(getattr(args, "output", None))
        args.func(args, out)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        # Downstream reader closed early (e.g. ``| head``); not a failure.
        sys.stdout = open(os.devnull, "w")
        return 0
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    finally:
        if close:
            out.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
