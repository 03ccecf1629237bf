"""Command-line front end.

Subcommands: ``grid``, ``sample``, ``analyze``, ``synth``, ``spectrum``,
``study`` and ``bench``. Exit status is 0 on success, 2 on bad arguments or
unreadable inputs and 3 when a numerical iteration fails to converge.
Set ``HP2SPH_LOG=info`` or ``HP2SPH_LOG=debug`` for stage logs on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import scipy.fft as sfft

from . import formats
from .baseline import (
    MapValues,
    SpectralRadiusError,
    analyze_equal_weight,
    default_ell_max,
    richardson_refine,
    synthesize_direct,
)
from .nufft import CGNonConvergence
from .pipeline import (
    HP2SPHPlan,
    LatitudeSolveError,
    add_harmonics,
    convergence_study,
    load_spline,
    load_terms,
    potential_spline_eval,
    power_spectrum,
    run_method,
)
from .sphgrid import build_grid

__all__ = ["main", "run", "build_parser"]

log = logging.getLogger("hp2sph")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3

BUILTIN = "builtin"


class UsageError(Exception):
    pass


def _nside(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid n_side {text!r}") from None
    if n < 1 or n & (n - 1):
        raise argparse.ArgumentTypeError(f"n_side must be a power of two, got {n}")
    return n


def _method(text: str) -> str:
    if text not in ("hp2sph", "equal", "richardson"):
        raise argparse.ArgumentTypeError(f"unknown method {text!r}")
    return text


def _study_method(text: str) -> str:
    base, _, k = text.partition(":")
    if base not in ("hp2sph", "equal", "richardson") or (k and (base != "richardson" or not k.isdigit())):
        raise argparse.ArgumentTypeError(f"unknown method {text!r}")
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hp2sph", description="Spherical harmonic analysis of HEALPix maps.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap on worker threads/processes (default: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="write the ring table of a grid")
    p.add_argument("--nside", type=_nside, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="sample a test field into an HPXM map")
    p.add_argument("--nside", type=_nside, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spline", nargs="?", const=BUILTIN, metavar="SPEC.json",
                     help="potential spline spec (bundled 3-center fixture if no path)")
    src.add_argument("--constant", type=float, metavar="VALUE")
    p.add_argument("--add-harmonics", nargs="?", const=BUILTIN, metavar="TERMS.json",
                   help="add sqrt(2) Re Y_l^m for each listed term (bundled 15-term table if no path)")
    p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="spherical harmonic coefficients of a map")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--method", type=_method, default="hp2sph")
    p.add_argument("--iters", type=int, default=None, help="Richardson iterations (default 3)")
    p.add_argument("--lmax", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="synthesize a map from coefficients")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--nside", type=_nside, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("spectrum", help="angular power spectrum of coefficients")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--scaled", action="store_true", help="emit l(l+1) C_l / 2 pi")
    p.add_argument("--out", required=True)

    p = sub.add_parser("study", help="convergence study against exact spline coefficients")
    p.add_argument("--spline", nargs="?", const=BUILTIN, default=BUILTIN, metavar="SPEC.json")
    p.add_argument("--add-harmonics", nargs="?", const=BUILTIN, metavar="TERMS.json")
    p.add_argument("--tmin", type=int, default=2)
    p.add_argument("--tmax", type=int, default=6)
    p.add_argument("--methods", default="hp2sph,equal,richardson:3",
                   help="comma separated: hp2sph, equal, richardson[:K]")
    p.add_argument("--out", required=True)

    p = sub.add_parser("bench", help="time one analysis with a stage breakdown")
    p.add_argument("--nside", type=_nside, required=True)
    p.add_argument("--method", type=_study_method, default="hp2sph")
    p.add_argument("--repeat", type=int, default=3)
    return parser


def _spline(path):
    return load_spline(None if path in (None, BUILTIN) else path)


def _terms(path):
    return load_terms(None if path == BUILTIN else path)


def _cmd_grid(args) -> None:
    formats.write_grid_table(args.out, build_grid(args.nside))


def _cmd_sample(args) -> None:
    grid = build_grid(args.nside)
    if args.constant is not None:
        m = MapValues(grid, np.full(grid.n_points, args.constant))
    else:
        m = potential_spline_eval(_spline(args.spline), grid)
    if args.add_harmonics:
        m = add_harmonics(m, _terms(args.add_harmonics))
    formats.write_map(args.out, m)


def _cmd_analyze(args) -> None:
    if args.iters is not None and args.method != "richardson":
        raise UsageError("--iters is only valid with --method richardson")
    if args.iters is not None and args.iters < 0:
        raise UsageError("--iters must be >= 0")
    m = formats.read_map(args.inp)
    ns = m.grid.n_side
    if args.lmax is not None and args.lmax < 0:
        raise UsageError("--lmax must be >= 0")
    if args.method == "hp2sph":
        if args.lmax is not None and args.lmax > 2 * ns:
            raise UsageError(f"hp2sph resolves l <= 2*n_side = {2 * ns}; got --lmax {args.lmax}")
        coeffs = HP2SPHPlan(ns).analyze(m)
        if args.lmax is not None:
            coeffs = coeffs.truncate(args.lmax)
    else:
        lmax = default_ell_max(ns) if args.lmax is None else args.lmax
        if args.method == "equal":
            coeffs = analyze_equal_weight(m, lmax)
        else:
            coeffs = richardson_refine(m, lmax, 3 if args.iters is None else args.iters)
    formats.write_coeffs(args.out, coeffs)


def _cmd_synth(args) -> None:
    coeffs = formats.read_coeffs(args.inp)
    formats.write_map(args.out, synthesize_direct(coeffs, build_grid(args.nside)))


def _cmd_spectrum(args) -> None:
    ps = power_spectrum(formats.read_coeffs(args.inp))
    formats.write_spectrum(args.out, ps.scaled() if args.scaled else ps.C)


def _cmd_study(args) -> None:
    if args.tmin < 0 or args.tmax < args.tmin:
        raise UsageError("need 0 <= tmin <= tmax")
    methods = [s.strip() for s in args.methods.split(",") if s.strip()]
    try:
        methods = [_study_method(s) for s in methods]
    except argparse.ArgumentTypeError as exc:
        raise UsageError(str(exc)) from None
    terms = _terms(args.add_harmonics) if args.add_harmonics else ()
    t_range = range(args.tmin, args.tmax + 1)
    workers = min(args.threads or os.cpu_count() or 1, len(t_range))
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            result = convergence_study(_spline(args.spline), t_range, methods, terms=terms, executor=ex)
    else:
        result = convergence_study(_spline(args.spline), t_range, methods, terms=terms)
    with open(args.out, "w", newline="") as fh:
        fh.write(result.to_csv())
    for method, slope in result.slopes.items():
        print(f"{method}: slope {slope:.3f}")


def _cmd_bench(args) -> None:
    grid = build_grid(args.nside)
    m = potential_spline_eval(load_spline(), grid)
    if args.method == "hp2sph":
        t0 = time.perf_counter()
        plan = HP2SPHPlan(args.nside)
        print(f"setup: {time.perf_counter() - t0:.4f} s")
        best, stages = np.inf, {}
        for _ in range(max(args.repeat, 1)):
            t0 = time.perf_counter()
            _, info = plan.analyze(m, return_info=True)
            dt = time.perf_counter() - t0
            if dt < best:
                best, stages = dt, info
        print(f"analyze: {best:.4f} s")
        for name, dt in stages["timings"].items():
            print(f"  {name}: {dt:.4f} s")
        print(f"  CG iterations: {stages['cg_iterations']}, gamma: {stages['gamma']:.3f}")
    else:
        best = np.inf
        for _ in range(max(args.repeat, 1)):
            t0 = time.perf_counter()
            run_method(args.method, m)
            best = min(best, time.perf_counter() - t0)
        print(f"analyze: {best:.4f} s")


_COMMANDS = {
    "grid": _cmd_grid,
    "sample": _cmd_sample,
    "analyze": _cmd_analyze,
    "synth": _cmd_synth,
    "spectrum": _cmd_spectrum,
    "study": _cmd_study,
    "bench": _cmd_bench,
}


def _configure_logging() -> None:
    level = os.environ.get("HP2SPH_LOG", "").strip().lower()
    if level in ("debug", "info"):
        logging.basicConfig(level=getattr(logging, level.upper()),
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(argv=None) -> int:
    """Parse ``argv`` and execute one subcommand; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging()
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        with sfft.set_workers(args.threads or os.cpu_count() or 1):
            _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LatitudeSolveError, CGNonConvergence, SpectralRadiusError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
