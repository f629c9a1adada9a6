"""Command-line front end.

Exit codes: 0 success, 1 numerical failure, 2 input error, 3 precondition
violation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import InputError, NumericalFailure, PreconditionViolated
from .exprfn import MatrixFunction
from .fracops import DEFAULT_CONFIG, OperatorConfig, d_m_many, j_m_many
from .gammafn import mat_beta, mat_gamma
from .matcore import as_matrix, matrix_from_json, matrix_to_json
from .quad import QuadSpec
from .solvers import SystemSolution, parse_grid, solve_request
from .verify import SUITES, run

EXIT_OK, EXIT_NUMERICAL, EXIT_INPUT, EXIT_PRECONDITION = 0, 1, 2, 3
REL_TOL_ENV = "MOFRAC_REL_TOL"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _read_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _read_matrix(path: str) -> np.ndarray:
    return matrix_from_json(_read_json(path))


def _default_rel_tol() -> float:
    raw = os.environ.get(REL_TOL_ENV)
    if raw is None:
        return DEFAULT_CONFIG.quad.rel_tol
    try:
        v = float(raw)
    except ValueError:
        raise InputError(f"{REL_TOL_ENV}={raw!r} is not a number") from None
    if not v > 0:
        raise InputError(f"{REL_TOL_ENV} must be positive")
    return v


def _config(args) -> OperatorConfig:
    rel = args.rel_tol if args.rel_tol is not None else _default_rel_tol()
    try:
        quad = QuadSpec(
            rel_tol=rel,
            abs_tol=args.abs_tol if args.abs_tol is not None else DEFAULT_CONFIG.quad.abs_tol,
            max_refinements=args.max_refinements if args.max_refinements is not None else DEFAULT_CONFIG.quad.max_refinements,
        )
        return OperatorConfig(
            quad=quad,
            fd_step_scale=getattr(args, "fd_step_scale", None) or DEFAULT_CONFIG.fd_step_scale,
            fd_order=getattr(args, "fd_order", None) or DEFAULT_CONFIG.fd_order,
            cheb_nodes=getattr(args, "cheb_nodes", None) or DEFAULT_CONFIG.cheb_nodes,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _component_names(prefix, shape):
    return [f"{prefix}[{i}][{j}].{part}" for i in range(shape[0]) for j in range(shape[1]) for part in ("re", "im")]


def _component_values(mat):
    out = []
    for z in np.asarray(mat).reshape(-1):
        out += [_fmt(z.real), _fmt(z.imag)]
    return out


def _csv(header, rows) -> str:
    lines = [",".join(header)] + [",".join(r) for r in rows]
    return "\n".join(lines) + "\n"


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# --------------------------------------------------------------------------- commands


def cmd_gamma(args) -> int:
    _emit(_dump(matrix_to_json(mat_gamma(_read_matrix(args.matrix)))), args.output)
    return EXIT_OK


def cmd_beta(args) -> int:
    _emit(_dump(matrix_to_json(mat_beta(_read_matrix(args.m), _read_matrix(args.n)))), args.output)
    return EXIT_OK


def _function(exprs, n) -> MatrixFunction:
    if len(exprs) == 1:
        text = exprs[0]
        if text.lstrip().startswith("["):
            try:
                F = MatrixFunction.parse(json.loads(text))
            except json.JSONDecodeError as exc:
                raise InputError(f"function list is not valid JSON: {exc.msg}") from None
        else:
            # a single expression applies to every row
            F = MatrixFunction.parse([text] * n)
    else:
        F = MatrixFunction.parse(list(exprs))
    return F


def cmd_operator(args) -> int:
    M = as_matrix(_read_matrix(args.order), square=True)
    cfg = _config(args)
    F = _function(args.fn, M.shape[0])
    xs = parse_grid(args.grid)
    if args.command == "integrate":
        values, errs, _ = j_m_many(M, F, xs, cfg)
    else:
        values, errs, _ = d_m_many(M, F, xs, cfg)
    if args.format == "json":
        out = {
            "operator": args.command,
            "grid": [float(x) for x in xs],
            "values": [matrix_to_json(v) for v in values],
            "err_estimate": [float(e) for e in errs],
        }
        _emit(_dump(out), args.output)
    else:
        header = ["x"] + _component_names("F", values.shape[1:]) + ["err_estimate"]
        rows = [[_fmt(x)] + _component_values(v) + [_fmt(e)] for x, v, e in zip(xs, values, errs)]
        _emit(_csv(header, rows), args.output)
    return EXIT_OK


def _residual_text(r) -> str:
    return _fmt(r) if np.isfinite(r) else "nan"


def _solution_csv(sol) -> str:
    if isinstance(sol, SystemSolution):
        F, G = sol.F, sol.G
        header = (
            ["x"] + _component_names("F", F.values.shape[1:]) + _component_names("G", G.values.shape[1:])
            + ["residual_F", "residual_G"]
        )
        rows = [
            [_fmt(x)] + _component_values(f) + _component_values(g) + [_residual_text(rf), _residual_text(rg)]
            for x, f, g, rf, rg in zip(F.grid, F.values, G.values, F.residuals, G.residuals)
        ]
        return _csv(header, rows)
    if sol.grid_y is not None:
        header = ["x", "y"] + _component_names("F", sol.values.shape[2:]) + ["residual"]
        rows = [
            [_fmt(x), _fmt(y)] + _component_values(sol.values[i, j]) + [_residual_text(sol.residuals[i, j])]
            for i, x in enumerate(sol.grid)
            for j, y in enumerate(sol.grid_y)
        ]
        return _csv(header, rows)
    header = ["x"] + _component_names("F", sol.values.shape[1:]) + ["residual"]
    rows = [[_fmt(x)] + _component_values(v) + [_residual_text(r)] for x, v, r in zip(sol.grid, sol.values, sol.residuals)]
    return _csv(header, rows)


def cmd_solve(args) -> int:
    req = _read_json(args.request)
    sol = solve_request(req, _config(args))
    _emit(_dump(sol.to_json()) if args.format == "json" else _solution_csv(sol), args.output)
    return EXIT_OK if sol.passed else EXIT_NUMERICAL


def cmd_verify(args) -> int:
    if args.trials is not None and args.trials < 1:
        raise InputError("--trials must be at least 1")
    if args.seed < 0:
        raise InputError("--seed must be nonnegative")
    report = run(args.suite, args.trials, args.seed, _config(args))
    _emit(_dump(report), args.output)
    return EXIT_OK if report["passed"] else EXIT_NUMERICAL


# --------------------------------------------------------------------------- parser


def _add_tolerances(p):
    p.add_argument("--rel-tol", type=float, help=f"quadrature relative tolerance (default ${REL_TOL_ENV} or 1e-8)")
    p.add_argument("--abs-tol", type=float, help="quadrature absolute tolerance (default 1e-12)")
    p.add_argument("--max-refinements", type=int, help="maximum quadrature refinements (default 20)")


def _add_operator_flags(p):
    p.add_argument("--fd-order", type=int, choices=(2, 4), help="finite-difference stencil order (default 4)")
    p.add_argument("--fd-step-scale", type=float, help="stencil step relative to x (default 1e-3)")
    p.add_argument("--cheb-nodes", type=int, help="Chebyshev nodes for nested operators (default 64)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mofrac", description="Matrix-order fractional calculus toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gamma", help="matrix gamma function of a matrix file")
    p.add_argument("matrix")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gamma)

    p = sub.add_parser("beta", help="matrix beta function B(M, N)")
    p.add_argument("m")
    p.add_argument("n")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_beta)

    for name, text in (("integrate", "matrix-order integral J^M F"), ("differentiate", "matrix-order derivative D^M F")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--order", required=True, help="order matrix file")
        p.add_argument(
            "--fn",
            required=True,
            action="append",
            help="expression in t; repeat for each row, or pass a JSON list of lists",
        )
        p.add_argument("--grid", required=True, help="start:stop:count")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("-o", "--output")
        _add_tolerances(p)
        _add_operator_flags(p)
        p.set_defaults(func=cmd_operator)

    p = sub.add_parser("solve", help="run a solver from a JSON request")
    p.add_argument("request")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("-o", "--output")
    _add_tolerances(p)
    _add_operator_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="seeded randomized verification suites")
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("-o", "--output")
    _add_tolerances(p)
    _add_operator_flags(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PreconditionViolated as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
