"""``vmcoal`` command-line front end.

Exit codes: 0 success, 1 a validate suite failed, 2 invalid input,
3 a solver did not converge, 64 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import io as vio
from .compositions import as_composition, format_composition, graded, parse_composition
from .errors import ConvergenceError, ValidationError
from .inversion import invert_minimal
from .kinetics import critical_time, gelation_time, second_moments, total_mass, zeta_closed
from .mst import mst_monte_carlo, mst_series
from .simulator import SimConfig, simulate, trajectory_rows
from .trees import TreeMethod, all_methods, relative_error
from .validation import CSV_HEADER, DEFAULT_SEED, SUITES, run_suite

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_VALIDATION = 2
EXIT_CONVERGENCE = 3
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_matrix(text: str) -> list[list[float]]:
    """``"0,1;1,0"`` -> ``[[0, 1], [1, 0]]``."""
    try:
        return [[float(v) for v in row.split(",")] for row in text.strip().split(";")]
    except ValueError as exc:
        raise ValidationError(f"bad matrix {text!r}; use rows separated by ';' and entries by ','") from exc


def parse_vector(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad vector {text!r}") from exc


def default_threads() -> int:
    env = os.environ.get("VMCOAL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValidationError(f"VMCOAL_THREADS must be an integer, got {env!r}") from exc
        if n < 1:
            raise ValidationError("VMCOAL_THREADS must be positive")
        return n
    return os.cpu_count() or 1


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", metavar="PATH", help="JSON run config; inline flags override it")
    g.add_argument("--out", metavar="PATH", help="write results to this file")
    g.add_argument("--format", choices=("csv", "json"), default="csv", help="file format for --out")
    g.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    g.add_argument("--threads", type=int, help="worker threads (default: $VMCOAL_THREADS or CPU count)")
    g.add_argument("--tol", type=float, help="solver tolerance")
    g.add_argument("--V", dest="V", metavar="ROWS", help='weight matrix, e.g. "0,1;1,0"')
    g.add_argument("--alpha", metavar="VEC", help='initial densities, e.g. "1,1"')
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="vmcoal", description="Vector-multiplicative coalescent toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")
    sub.required = True

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text, description=help_text)

    p = add("invert", "minimal y with psi(y) = psi(z)")
    p.add_argument("--z", metavar="VEC")
    p.add_argument("--method", choices=("auto", "fixed_point", "ode"), default="auto")

    p = add("curve", "y(t) for a list of times")
    p.add_argument("--t", metavar="LIST", help="comma-separated times")

    p = add("trees", "spanning-tree enumerator T_x by every method")
    p.add_argument("--x", metavar="X", help='composition, e.g. "2:2"')

    p = add("zeta", "closed-form cluster densities")
    p.add_argument("--x", metavar="X", help="one composition (default: all with n_x <= n_max)")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--t", metavar="LIST")

    add("gelation", "gelation time T_gel = 1 / rho(V D[alpha])")

    p = add("mass", "total mass y(t)/t")
    p.add_argument("--t", metavar="LIST")

    p = add("moments", "second moments A(t) before gelation")
    p.add_argument("--t", metavar="T", type=float)

    p = add("simulate", "one trajectory of the finite coalescent")
    p.add_argument("--n", type=int)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--record-times", dest="record_times", metavar="LIST")
    p.add_argument("--replica", type=int)

    p = add("mst-series", "limit of the mean MST length as a truncated series")
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--tail-tol", dest="tail_tol", type=float)

    p = add("mst-mc", "Monte-Carlo mean MST length")
    p.add_argument("--n", type=int)
    p.add_argument("--replicas", type=int)

    p = add("validate", "run a property suite")
    p.add_argument("suite", choices=SUITES + ("all",))
    return parser


# ---------------------------------------------------------------- helpers


def _config(args) -> vio.RunConfig:
    cfg = vio.load_config(args.config) if args.config else vio.RunConfig()
    over = {}
    if args.V is not None:
        over["V"] = parse_matrix(args.V)
    if args.alpha is not None:
        over["alpha"] = parse_vector(args.alpha)
    for key in ("seed", "tol", "n", "n_max", "replicas", "replica", "t_max", "tail_tol"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = val
    for key in ("z", "record_times"):
        val = getattr(args, key, None)
        if val is not None:
            over[key] = parse_vector(val)
    t = getattr(args, "t", None)
    if t is not None:
        over["t" if isinstance(t, float) else "t_grid"] = t if isinstance(t, float) else parse_vector(t)
    x = getattr(args, "x", None)
    if x is not None:
        over["x"] = list(parse_composition(x))
    return cfg.merged(over)


def _times(cfg: vio.RunConfig) -> list[float]:
    if cfg.get("t_grid") is not None:
        return list(cfg.get("t_grid"))
    if cfg.get("t") is not None:
        return [float(cfg.get("t"))]
    raise ValidationError("need times: --t or t_grid / t in the config")


def _threads(args) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise ValidationError("--threads must be positive")
        return args.threads
    return default_threads()


def _emit(args, header, rows, meta=None):
    rows = list(rows)
    widths = [max(len(str(h)), *(len(vio.format_value(r[i])) for r in rows)) if rows else len(str(h)) for i, h in enumerate(header)]
    print("  ".join(str(h).ljust(w) for h, w in zip(header, widths)))
    for r in rows:
        print("  ".join(vio.format_value(v).ljust(w) for v, w in zip(r, widths)))
    if args.out:
        vio.write_table(args.out, header, rows, args.format, meta)


def _seed(cfg) -> int:
    s = cfg.get("seed")
    return DEFAULT_SEED if s is None else int(s)


# ---------------------------------------------------------------- commands


def cmd_invert(args, cfg):
    V = cfg.require("V")
    z = np.asarray(cfg.require("z"), dtype=float)
    tol = cfg.get("tol", 1e-10)
    res = invert_minimal(z, V, tol=tol, method=args.method)
    print(f"region={res.region_of_input.value} method={res.method.value} iterations={res.iterations} residual={res.residual:.3e}")
    _emit(args, ("j", "z", "y"), [(j, float(z[j]), float(res.y[j])) for j in range(len(z))],
          {"region": res.region_of_input.value, "method": res.method.value, "residual": res.residual})
    return EXIT_OK


def cmd_curve(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    rows = []
    for t in _times(cfg):
        res = invert_minimal(np.asarray(alpha) * t, V)
        rows.append((t, res.region_of_input.value, *[float(v) for v in res.y]))
    _emit(args, ("t", "region", *[f"y{j + 1}" for j in range(len(alpha))]), rows)
    return EXIT_OK


def cmd_trees(args, cfg):
    V = cfg.require("V")
    x = as_composition(cfg.require("x"), len(V))
    reps = all_methods(x, V)
    ref = reps[TreeMethod.COFACTOR].value
    rows = [
        (m.value, r.value_log, r.value if r.value is not None else float("nan"),
         "" if r.exact is None else r.exact, relative_error(ref, r.value) if r.value is not None else float("nan"))
        for m, r in reps.items()
    ]
    print(f"T_{format_composition(x)} = {vio.format_value(reps[TreeMethod.CLOSED_FORM].value)}")
    _emit(args, ("method", "log_T", "T", "exact", "rel_diff_vs_cofactor"), rows)
    return EXIT_OK


def cmd_zeta(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    if cfg.get("x") is not None:
        keys = [as_composition(cfg.get("x"), len(alpha))]
    else:
        keys = graded(len(alpha), int(cfg.get("n_max", 4)))
    rows = [(t, format_composition(x), float(zeta_closed(x, alpha, V, t))) for t in _times(cfg) for x in keys]
    _emit(args, ("t", "composition", "zeta"), rows)
    return EXIT_OK


def cmd_gelation(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    tg = gelation_time(alpha, V)
    print(f"T_gel = {tg!r}")
    _emit(args, ("T_gel", "t_c"), [(tg, critical_time(alpha, V))])
    return EXIT_OK


def cmd_mass(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    rows = [(t, *[float(v) for v in total_mass(alpha, V, t)]) for t in _times(cfg)]
    _emit(args, ("t", *[f"m{j + 1}" for j in range(len(alpha))]), rows)
    return EXIT_OK


def cmd_moments(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    t = float(cfg.require("t"))
    A = second_moments(alpha, V, t).A
    rows = [(t, i + 1, *[float(v) for v in A[i]]) for i in range(A.shape[0])]
    _emit(args, ("t", "row", *[f"A{i + 1}" for i in range(A.shape[0])]), rows)
    return EXIT_OK


def cmd_simulate(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    t_max = float(cfg.require("t_max"))
    rec = cfg.get("record_times") or [t_max]
    sim = SimConfig(alpha, int(cfg.require("n")), V, t_max, seed=_seed(cfg), record_times=tuple(rec))
    traj = simulate(sim, replica=int(cfg.get("replica", 0)))
    _emit(args, ("t", "composition", "count"), trajectory_rows(traj), {"seed": sim.seed, "n": sim.n})
    return EXIT_OK


def cmd_mst_series(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    rep = mst_series(alpha, V, n_max=cfg.get("n_max"), tail_tol=cfg.get("tail_tol", 1e-6))
    cum = np.cumsum(rep.shells)
    print(f"partial_sum = {rep.partial_sum!r} n_max = {rep.n_max} last_shell = {rep.last_shell:.3e} tail_ok = {rep.tail_flag}")
    _emit(args, ("n_max", "partial_sum", "last_shell"), [(n + 1, float(cum[n]), float(rep.shells[n])) for n in range(rep.n_max)])
    return EXIT_OK


def cmd_mst_mc(args, cfg):
    V, alpha = cfg.require("V"), cfg.require("alpha")
    rep = mst_monte_carlo(alpha, V, int(cfg.require("n")), int(cfg.get("replicas", 100)), seed=_seed(cfg), threads=_threads(args))
    print(f"mean = {rep.mean!r} +/- {rep.se!r} (n = {rep.n}, replicas = {len(rep.lengths)})")
    _emit(args, ("replica", "length"), [(r, float(v)) for r, v in enumerate(rep.lengths)])
    return EXIT_OK


def cmd_validate(args, cfg):
    checks = run_suite(args.suite, seed=_seed(cfg), threads=_threads(args))
    _emit(args, CSV_HEADER, [c.row() for c in checks])
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_OK if not failed else EXIT_FAILED


COMMANDS = {
    "invert": cmd_invert,
    "curve": cmd_curve,
    "trees": cmd_trees,
    "zeta": cmd_zeta,
    "gelation": cmd_gelation,
    "mass": cmd_mass,
    "moments": cmd_moments,
    "simulate": cmd_simulate,
    "mst-series": cmd_mst_series,
    "mst-mc": cmd_mst_mc,
    "validate": cmd_validate,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
