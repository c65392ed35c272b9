"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import PROFILES, default_config, load_config, serialize_config
from .discretization import SECONDS_PER_YEAR
from .errors import ConfigError, NumericalFailure, StepFailure

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3
JACOBIAN_TOL = 1e-6
AGREEMENT_TOL = 1e-8


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _build_parser():
    p = _Parser(prog="ncpflow", description="Two-phase hydrogen migration with a Newton-min solver.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run a simulation and write CSV, logs and figures")
    r.add_argument("--config", help="config file (default: built-in profile)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--profile", choices=sorted(PROFILES), help="base parameter profile")
    r.add_argument("--no-figures", action="store_true", help="skip the matplotlib PNGs")

    j = sub.add_parser("check-jacobian", help="compare the analytic Jacobian with finite differences")
    j.add_argument("--config", help="config file (default: benchmark profile)")
    j.add_argument("--samples", type=int, default=20)
    j.add_argument("--seed", type=int, default=0)

    n = sub.add_parser("solve-ncp", help="solve a small affine NCP from JSON and cross-check it")
    n.add_argument("--file", required=True, help="JSON problem file")

    sub.add_parser("version", help="print the version")
    return p


def _load(path, profile=None):
    if path is None:
        return default_config(profile or "benchmark")
    return load_config(path, profile=profile)


def _cmd_run(args, out, err):
    from .io import (
        emit_plot_script,
        snapshot_filename,
        write_convergence_log,
        write_event_log,
        write_snapshot_csv,
        write_steps_csv,
    )
    from .simulation import run

    cfg = _load(args.config, args.profile)
    os.makedirs(args.out, exist_ok=True)
    sc = cfg.schedule
    print(f"ncpflow {__version__}: profile={cfg.profile} N={cfg.grid.n_cells} "
          f"dt={sc.dt_years:g} y total={sc.total_years:g} y "
          f"(1 year = {SECONDS_PER_YEAR:.8g} s)", file=out)
    status = EXIT_OK
    try:
        result = run(cfg, stop_at_stationarity=False)
    except StepFailure as exc:
        print(f"numerical failure: {exc}", file=err)
        result = exc.partial
        status = EXIT_NUMERIC
        if result is None:
            return status

    def target(name):
        return os.path.join(args.out, name)

    with open(target("config.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_config(cfg))
    names = []
    for i, snap in enumerate(result.snapshots):
        name = snapshot_filename(i, snap)
        write_snapshot_csv(snap, target(name))
        names.append(name)
    write_convergence_log(result.steps, target("convergence.csv"))
    write_event_log(result.events, target("events.csv"))
    write_steps_csv(result.steps, target("steps.csv"))
    emit_plot_script(result, args.out, names)
    if not args.no_figures:
        from .plotting import plot_iterations, plot_profiles

        plot_profiles(result.snapshots, target("profiles.png"))
        plot_iterations(result.steps, target("iterations.png"))

    iters = [st.report.iterations for st in result.steps]
    print(f"steps: {len(result.steps)}  newton iterations: {sum(iters)} (max {max(iters, default=0)})",
          file=out)
    for name, t in result.events.items():
        print(f"event {name}: {'none' if t is None else f'{t:g} y'}", file=out)
    print(f"output written to {args.out}", file=out)
    return status


def _cmd_check_jacobian(args, out, err):
    from .verification import check_jacobian

    if args.samples < 1:
        raise UsageError("--samples must be >= 1")
    cfg = _load(args.config)
    res = check_jacobian(cfg, samples=args.samples, seed=args.seed)
    w = res.worst
    print(f"samples: {res.samples}  redrawn near upwind switches: {res.skipped}", file=out)
    print(f"max relative error: {res.max_rel_error:.3e} at (row {w.location[0]}, col {w.location[1]}) "
          f"analytic {w.analytic:.6e} fd {w.fd:.6e}", file=out)
    ok = res.max_rel_error <= JACOBIAN_TOL
    print("PASS" if ok else f"FAIL (tolerance {JACOBIAN_TOL:g})", file=out)
    return EXIT_OK if ok else EXIT_NUMERIC


def _problem_from_json(data):
    """``{"M": .., "q": ..}`` for an LCP, otherwise affine ``F``, ``G`` and optional
    ``H`` given as ``{"A": matrix, "b": vector}``; optional ``x0``."""
    from .ncp import AffineNcp

    if "M" in data:
        prob = AffineNcp.lcp(data["M"], data["q"])
    else:
        H = data.get("H")
        prob = AffineNcp(data["F"]["A"], data["F"]["b"], data["G"]["A"], data["G"]["b"],
                         None if H is None else H["A"], None if H is None else H["b"])
    x0 = np.asarray(data.get("x0", np.zeros(prob.n)), dtype=float)
    if x0.shape != (prob.n,):
        raise ValueError(f"x0 must have length {prob.n}")
    return prob, x0


def _cmd_solve_ncp(args, out, err):
    from .ncp import newton_min_solve
    from .verification import brute_force_ncp

    with open(args.file, encoding="utf-8") as fh:
        text = fh.read()
    try:
        prob, x0 = _problem_from_json(json.loads(text))
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"invalid problem file {args.file}: {exc}") from exc
    bf = brute_force_ncp(prob, x0)
    print(f"brute force: {len(bf.solutions)} solution(s) over {2**prob.n_comp} patterns", file=out)
    for pat, x in zip(bf.patterns, bf.solutions):
        print(f"  F-active {list(pat)}: x = {np.array2string(x, precision=10)}", file=out)
    x, rep = newton_min_solve(prob, x0, eps=1e-12, max_iter=100)
    print(f"newton-min: x = {np.array2string(x, precision=10)} after {rep.iterations} iteration(s)", file=out)
    if bf.unique:
        dist = float(np.abs(x - bf.solutions[0]).max())
        print(f"distance to brute-force solution: {dist:.3e}", file=out)
        if dist > AGREEMENT_TOL:
            print("MISMATCH", file=out)
            return EXIT_NUMERIC
    print("AGREE" if bf.unique else "brute-force set is not a singleton; no comparison", file=out)
    return EXIT_OK


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = _build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.verbose:
        logging.basicConfig(level=logging.INFO, stream=err, format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run": _cmd_run,
        "check-jacobian": _cmd_check_jacobian,
        "solve-ncp": _cmd_solve_ncp,
    }
    if args.command == "version":
        print(f"ncpflow {__version__}", file=out)
        return EXIT_OK
    try:
        return handlers[args.command](args, out, err)
    except UsageError as exc:
        print(exc, file=err)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=err)
        return EXIT_USAGE
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=err)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
