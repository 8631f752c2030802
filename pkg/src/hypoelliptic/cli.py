"""Command-line interface.

Exit codes: 0 success, 1 a verification suite failed, 2 invalid input,
3 a hypothesis guard refused the computation (not hypoelliptic, α ≥ D_∞,
tr B < 0 where required, dimension above 4).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional, Sequence

import numpy as np

from .dimensions import growth_classify, table_reproduce, volume_curve
from .errors import GuardError, InvalidSystemError
from .frac_calc import fractional_power, poisson_apply, riesz_apply
from .harness import DEFAULT_SEED, SUITES, load_function, run_suite, to_json
from .heat_kernel import GaussianExpFn, as_field, kernel_eval
from .numerics import QuadSpec
from .ou_model import BUILTIN_NAMES, load_system, structure_report

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_GUARD = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_INPUT)


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ValueError(f"cannot parse {text!r} as comma-separated numbers") from exc


def _points(text: str) -> np.ndarray:
    """Points as "x1,x2;y1,y2;..."."""
    rows = [_vector(part) for part in text.split(";") if part.strip()]
    if not rows or len({r.size for r in rows}) != 1:
        raise ValueError("points must be non-empty and of equal length")
    return np.stack(rows)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quad-order", type=int, default=None,
                        help="Gauss-Hermite order per axis for space integrals")
    common.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED,
                        help="seed for random sample points (default 0xC0FFEE)")
    common.add_argument("--tol", type=float, default=None,
                        help="relative tolerance of the time quadratures")
    common.add_argument("--format", choices=("json", "csv"), default=None)
    common.add_argument("--n", type=int, default=1, help="block size n of the 2n-dimensional families")
    common.add_argument("--dim", type=int, default=None, help="dimension N for heat/ou")

    p = _Parser(prog="hypoelliptic", description="Kolmogorov-type operators: kernels, volumes, "
                                                 "fractional calculus and verification suites")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", parents=[common], help="structure report of a system")
    c.add_argument("system")

    v = sub.add_parser("volume", parents=[common], help="volume curve V(t)")
    v.add_argument("system")
    v.add_argument("--t-min", type=float, default=1e-2)
    v.add_argument("--t-max", type=float, default=1e2)
    v.add_argument("--points", type=int, default=17)
    v.add_argument("--log", action="store_true", help="log-spaced grid")

    d = sub.add_parser("dims", parents=[common], help="intrinsic dimensions and growth class")
    d.add_argument("system")
    d.add_argument("--t-max", type=float, default=None)

    k = sub.add_parser("kernel", parents=[common], help="fundamental solution p(X, Y, t)")
    k.add_argument("system")
    k.add_argument("--t", type=float, required=True)
    k.add_argument("--x", required=True)
    k.add_argument("--y", required=True)

    a = sub.add_parser("apply", parents=[common], help="apply an operator to a Gaussian test function")
    a.add_argument("system")
    a.add_argument("--op", choices=("heat", "poisson", "frac", "riesz"), required=True)
    a.add_argument("--param", type=float, required=True, help="t, z, s or alpha")
    a.add_argument("--fn", default=None, help="function JSON file (default: unit Gaussian)")
    a.add_argument("--at", required=True, help='evaluation points "x1,x2;y1,y2"')

    r = sub.add_parser("verify", parents=[common], help="run a verification suite")
    r.add_argument("system")
    r.add_argument("--suite", choices=sorted(SUITES), required=True)
    r.add_argument("--s", type=float, default=None)
    r.add_argument("--p", type=float, default=None)

    t = sub.add_parser("table", parents=[common], help="volume table against closed forms")
    t.add_argument("--id", default=None, choices=BUILTIN_NAMES)
    t.add_argument("--t", default="0.1,1,5,10", help="comma-separated sample times")
    return p


def _system(args, dim_hint: Optional[int] = None):
    dim = args.dim
    if dim is None and dim_hint is not None and args.system in ("heat", "ou"):
        dim = dim_hint
    return load_system(args.system, n=args.n, dim=dim)


def _spec(args) -> Optional[QuadSpec]:
    kw = {}
    if args.quad_order is not None:
        kw["gh_order"] = args.quad_order
    if args.tol is not None:
        kw["rel_tol"] = args.tol
    return QuadSpec(**kw) if kw else None


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format(float(x), ".17g") if not isinstance(x, str) else x for x in row])
    return buf.getvalue()


def _emit(text: str, out):
    out.write(text if text.endswith("\n") else text + "\n")


def _run(args, out) -> int:
    fmt = args.format
    cmd = args.command
    if cmd == "check":
        rep = structure_report(_system(args))
        _emit(to_json(rep), out)
        return EXIT_OK
    if cmd == "volume":
        tab = volume_curve(_system(args), args.t_min, args.t_max, args.points, log_spacing=args.log)
        if fmt == "json":
            _emit(to_json({"t": tab.t, "V": tab.V, "logt": tab.logt, "logV": tab.logV}), out)
        else:
            _emit(tab.to_csv(), out)
        return EXIT_OK
    if cmd == "dims":
        from .dimensions import DimensionConfig

        cfg = DimensionConfig() if args.t_max is None else DimensionConfig(t_max=args.t_max)
        _emit(to_json(growth_classify(_system(args), config=cfg)), out)
        return EXIT_OK
    if cmd == "kernel":
        X, Y = _vector(args.x), _vector(args.y)
        sys_ = _system(args, X.size)
        if X.size != sys_.dim or Y.size != sys_.dim:
            raise ValueError(f"points must have {sys_.dim} coordinates")
        if not args.t > 0:
            raise ValueError("t must be positive")
        val = float(np.ravel(kernel_eval(sys_, args.t, X, Y))[0])
        if fmt == "csv":
            _emit(_csv(["t", "p"], [(args.t, val)]), out)
        else:
            _emit(to_json({"system": sys_.name, "t": args.t, "x": X, "y": Y, "p": val}), out)
        return EXIT_OK
    if cmd == "apply":
        X = _points(args.at)
        sys_ = _system(args, X.shape[1])
        if X.shape[1] != sys_.dim:
            raise ValueError(f"points must have {sys_.dim} coordinates")
        f = load_function(args.fn, sys_.dim) if args.fn else GaussianExpFn.unit(sys_.dim)
        spec = _spec(args)
        if args.op == "heat":
            if not args.param >= 0:
                raise ValueError("t must be non-negative")
            vals = as_field(sys_, f).flow(X, np.array([args.param]))[:, 0]
        elif args.op == "poisson":
            vals = poisson_apply(sys_, args.param, f, X, spec)
        elif args.op == "frac":
            vals = fractional_power(sys_, args.param, f, X, spec)
        else:
            vals = riesz_apply(sys_, args.param, f, X, spec)
        vals = np.atleast_1d(vals)
        if fmt == "csv":
            _emit(_csv([f"x{i}" for i in range(X.shape[1])] + ["value"],
                       [tuple(x) + (v,) for x, v in zip(X, vals)]), out)
        else:
            _emit(to_json({"system": sys_.name, "op": args.op, "param": args.param,
                           "points": X, "values": vals}), out)
        return EXIT_OK
    if cmd == "verify":
        sys_ = _system(args)
        spec = _spec(args)
        res = run_suite(args.suite, sys_, s=args.s, p=args.p, spec=spec, seed=args.seed)
        if fmt == "csv":
            rows = [(c.description, "" if c.measured is None else str(c.measured),
                     "" if c.target is None else str(c.target), c.status)
                    for c in sorted(res.checks, key=lambda c: c.description)]
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["description", "measured", "target", "status"])
            w.writerows(rows)
            _emit(buf.getvalue(), out)
        else:
            _emit(to_json(res), out)
        return EXIT_OK if res.passed else EXIT_FAIL
    if cmd == "table":
        ids = [args.id] if args.id else list(BUILTIN_NAMES)
        ts = _vector(args.t)
        rows = []
        for name in ids:
            tab = table_reproduce(name, ts, n=args.n, dim=args.dim if name in ("heat", "ou") else None)
            rows += [(name,) + r for r in tab.rows()]
        if fmt == "json":
            keys = ("id", "t", "V", "logt", "logV", "closed_form", "rel_err")
            _emit(to_json([dict(zip(keys, r)) for r in rows]), out)
        else:
            _emit(_csv(["id", "t", "V", "logt", "logV", "closed_form", "rel_err"], rows), out)
        return EXIT_OK
    raise ValueError(f"unknown command {cmd!r}")


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return _run(args, out)
    except GuardError as exc:
        sys.stderr.write(f"guard: {exc}\n")
        return EXIT_GUARD
    except (InvalidSystemError, ValueError, KeyError, OSError, json.JSONDecodeError, TypeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
