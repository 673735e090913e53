"""Command-line entry point ``mh``.

Exit codes: 0 success, 2 identity failure, 3 hypothesis or rank refusal,
4 configuration error, 1 any other toolkit error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .atoms import AtomSpec, Ball, make_atom, validate_atom
from .errors import (
    ExpressionError,
    InvalidPolynomialError,
    MHError,
    ParameterError,
    RankError,
)
from .field_core import PeriodicGrid, build_field, load_field, save_field
from .harness import ConfigError, ExperimentConfig, check_config, emit_report, run_experiment
from .maximal import (
    SampledKernel,
    default_dictionary,
    grand_maximal,
    hardy_littlewood,
    poisson_maximal,
    q_order_maximal,
    radial_maximal,
    smoothed_nontangential,
)
from .multipliers import MultiplierFunction, RieszWord, apply_multiplier, compose_riesz
from .musielak import critical_indices, phi_from_spec
from .weights import weight_diagnostics

EXIT_OK, EXIT_ERROR, EXIT_IDENTITY, EXIT_REFUSED, EXIT_CONFIG = 0, 1, 2, 3, 4


def _phi(text: str):
    """A growth-function spec: JSON object, or an expression in x and t."""
    text = text.strip()
    spec = json.loads(text) if text.startswith("{") else text
    return phi_from_spec(spec)


def _grid(args) -> PeriodicGrid:
    return PeriodicGrid(args.dim, args.L, args.N, args.offset)


def _add_grid(p, dim=1, N=256, L=8.0, offset=0.0):
    p.add_argument("--dim", type=int, default=dim)
    p.add_argument("--N", type=int, default=N, help="points per axis")
    p.add_argument("--L", type=float, default=L, help="half-width of the periodic cell")
    p.add_argument("--offset", type=float, default=offset, help="node offset in units of h")


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    rep = run_experiment(cfg, workers=args.workers)
    _write(emit_report(rep, args.format), args.out)
    return EXIT_IDENTITY if rep.failed else EXIT_OK


def cmd_check(args) -> int:
    rep = run_experiment(check_config(args.dim, args.N))
    _write(emit_report(rep, args.format), args.out)
    return EXIT_IDENTITY if rep.failed else EXIT_OK


def cmd_weights(args) -> int:
    grid = _grid(args)
    w = build_field(grid, args.weight)
    qs = np.round(np.arange(args.q_min, args.q_max + args.q_step / 2, args.q_step), 10)
    diag = weight_diagnostics(w, [float(q) for q in qs], j_max=args.jmax)
    _write(_dump(diag.to_dict()), args.out)
    return EXIT_OK


def cmd_musielak(args) -> int:
    idx = critical_indices(_phi(args.phi), _grid(args))
    _write(_dump(idx.to_dict()), args.out)
    return EXIT_OK


def cmd_riesz(args) -> int:
    f = load_field(args.field)
    if args.symbol:
        g = apply_multiplier(f, MultiplierFunction.from_expression(args.symbol, f.grid.dim))
    else:
        g = compose_riesz(f, RieszWord.parse(args.word, f.grid.dim))
    save_field(g, args.out)
    return EXIT_OK


def cmd_maximal(args) -> int:
    f = load_field(args.field)
    kernel = SampledKernel(args.kernel, f.grid.dim) if args.kernel else None
    op = args.op
    if op == "hl":
        g = hardy_littlewood(f)
    elif op == "qorder":
        g = q_order_maximal(f, args.q)
    elif op == "radial":
        g = radial_maximal(f, kernel)
    elif op == "nt":
        g = smoothed_nontangential(f, kernel, aperture=args.aperture)
    elif op == "poisson":
        g = poisson_maximal(f, aperture=args.aperture)
    else:
        g = grand_maximal(f, default_dictionary(f.grid.dim, args.m), aperture=args.aperture)
    save_field(g, args.out)
    return EXIT_OK


def cmd_atoms(args) -> int:
    parts = [float(v) for v in args.ball.split(",")]
    if len(parts) < 2:
        raise ConfigError("--ball needs center coordinates followed by the radius")
    ball = Ball(tuple(parts[:-1]), parts[-1])
    args.dim = ball.dim
    q = math.inf if args.q in ("inf", "infinity") else float(args.q)
    spec = AtomSpec(ball, q, args.s)
    phi = _phi(args.phi)
    a = make_atom(spec, phi, _grid(args))
    save_field(a, args.out)
    report = {"spec": spec.to_dict(), "validation": validate_atom(a, spec, phi, args.tol).to_dict()}
    _write(_dump(report), args.report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mh", description="Riesz transform and maximal function experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="json")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="run the identity suite")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--format", choices=["json", "csv", "markdown"], default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("weights", help="weight diagnostics")
    wsub = p.add_subparsers(dest="action", required=True)
    d = wsub.add_parser("diag")
    d.add_argument("--weight", required=True, help="expression in x1..xn and |x|")
    d.add_argument("--q-min", type=float, default=1.0)
    d.add_argument("--q-max", type=float, default=3.0)
    d.add_argument("--q-step", type=float, default=0.1)
    d.add_argument("--jmax", type=int, default=None)
    d.add_argument("--out")
    _add_grid(d, N=1024, L=1.0, offset=0.5)
    d.set_defaults(func=cmd_weights)

    p = sub.add_parser("musielak", help="growth-function indices")
    msub = p.add_subparsers(dest="action", required=True)
    d = msub.add_parser("indices")
    d.add_argument("--phi", required=True, help="JSON spec or expression in x, t")
    d.add_argument("--out")
    _add_grid(d)
    d.set_defaults(func=cmd_musielak)

    p = sub.add_parser("riesz", help="Riesz transforms of a field file")
    rsub = p.add_subparsers(dest="action", required=True)
    d = rsub.add_parser("apply")
    d.add_argument("--field", required=True)
    d.add_argument("--word", default="1", help="comma-separated indices, 0 for identity")
    d.add_argument("--symbol", help="multiplier expression in xi1..xin on the unit sphere")
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_riesz)

    p = sub.add_parser("maximal", help="maximal functions of a field file")
    p.add_argument("--op", required=True, choices=["hl", "radial", "nt", "poisson", "grand", "qorder"])
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--q", type=float, default=1.0, help="order for qorder")
    p.add_argument("--aperture", type=float, default=1.0)
    p.add_argument("--kernel", help="kernel expression in x (radial and nt)")
    p.add_argument("--m", type=int, default=1, help="order of the grand maximal dictionary")
    p.set_defaults(func=cmd_maximal)

    p = sub.add_parser("atoms", help="atom construction")
    asub = p.add_subparsers(dest="action", required=True)
    d = asub.add_parser("make")
    d.add_argument("--ball", required=True, help="c1,...,cn,radius")
    d.add_argument("--q", default="inf")
    d.add_argument("--s", type=int, default=0)
    d.add_argument("--phi", default="t")
    d.add_argument("--tol", type=float, default=1e-8)
    d.add_argument("--out", required=True)
    d.add_argument("--report", help="validation JSON path (stdout if omitted)")
    _add_grid(d)
    d.set_defaults(func=cmd_atoms)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (RankError, InvalidPolynomialError) as exc:
        print(f"mh: refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except (ConfigError, ExpressionError, json.JSONDecodeError, OSError) as exc:
        print(f"mh: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"mh: invalid parameter: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MHError as exc:
        print(f"mh: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
