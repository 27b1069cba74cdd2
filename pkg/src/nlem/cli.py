"""Command-line entry point.

Subcommands::

    nlem median POINTS [--solver admm|irls|brute] ...
    nlem denoise CLEAN.pgm --sigma S [--solver admm|irls|nlm] --out DIR ...
    nlem trace CLEAN.pgm --sigma S (--pixel ROW,COL | --psnr) ...
    nlem bench IMG.pgm [IMG.pgm ...] --sigmas 10,20 --methods nlm,admm ...

``median`` prints one JSON object per run. ``denoise`` prints one JSON object
per noise realization and, with ``--repeat > 1``, a final summary object.
Keys always appear in the documented order. Exit status is 0 on success,
2 for usage or parse errors, and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from typing import List, Optional

import numpy as np

from . import denoise as dn
from .errors import NumericalError, PgmError, UsageError
from .imgio import (PSNR_HEADER, ensure_parent, psnr, read_pgm,
                    read_points, write_pgm, write_rows, write_trace_csv)
from .median import (AdmmConfig, BoxConstraint, IrlsConfig, admm_euclidean_median,
                     brute_force_median_2d, irls_euclidean_median, optimality_residual)

EXIT_USAGE = 2
EXIT_NUMERIC = 3

BENCH_HEADER = ("image", "sigma", "method", "mean_psnr", "std_psnr", "R")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _range(text: str) -> BoxConstraint:
    try:
        lo, hi = text.split(":")
        return BoxConstraint(float(lo) if lo else -math.inf, float(hi) if hi else math.inf)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected L:U, got {text!r}") from None


def _pixel(text: str):
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected ROW,COL, got {text!r}") from None
    return r, c


def _floats(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> List[str]:
    names = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in names if v not in dn.SOLVERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"methods must be among {dn.SOLVERS}, got {text!r}")
    return names


def _denoise_flags(p: argparse.ArgumentParser, solver_default="admm"):
    p.add_argument("--sigma", type=float, required=True, help="noise standard deviation")
    p.add_argument("--solver", choices=dn.SOLVERS, default=solver_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--mu", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--search", type=int, default=21, metavar="S")
    p.add_argument("--patch", type=int, default=7, metavar="K")
    p.add_argument("--h-mult", type=float, default=10.0, help="h = H_MULT * sigma")
    p.add_argument("--init", choices=dn.INIT_MODES, default=None,
                   help="solver start; default noisy for sigma <= 60, nlm above")
    p.add_argument("--range", type=_range, default=BoxConstraint(0.0, 255.0), metavar="L:U")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nlem", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("median", help="weighted Euclidean median of a point file")
    p.add_argument("points", help="text file: 'n d' then n lines of d coords and a weight")
    p.add_argument("--solver", choices=("admm", "irls", "brute"), default="admm")
    p.add_argument("--iters", type=int, default=100000)
    p.add_argument("--tol", type=float, default=1e-12,
                   help="ADMM primal/consensus tolerance or IRLS relative decrease")
    p.add_argument("--mu", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--range", type=_range, default=None, metavar="L:U")
    p.add_argument("--resolution", type=int, default=201, help="brute-force grid size")
    p.add_argument("--trace", default=None, metavar="PATH", help="write trace CSV")

    p = sub.add_parser("denoise", help="add noise to a clean image and denoise it")
    p.add_argument("image")
    _denoise_flags(p)
    p.add_argument("--repeat", type=int, default=1, metavar="R")
    p.add_argument("--out", required=True, metavar="DIR", help="output directory for PGMs")
    p.add_argument("--format", choices=("P5", "P2"), default="P5")

    p = sub.add_parser("trace", help="per-pixel objective or per-iteration PSNR trace")
    p.add_argument("image")
    _denoise_flags(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--pixel", type=_pixel, metavar="ROW,COL")
    mode.add_argument("--psnr", action="store_true", help="full-image PSNR per iteration")
    p.add_argument("--out", default="-", metavar="PATH", help="CSV path, '-' for stdout")

    p = sub.add_parser("bench", help="mean PSNR table over noise realizations")
    p.add_argument("images", nargs="+")
    p.add_argument("--sigmas", type=_floats, required=True)
    p.add_argument("--methods", type=_names, default=["nlm", "admm"])
    p.add_argument("--repeat", type=int, default=3, metavar="R")
    p.add_argument("--seed", type=int, default=0, help="realization r uses seed + r")
    p.add_argument("--iters", type=int, default=4)
    p.add_argument("--mu", type=float, default=1e-3)
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--search", type=int, default=21, metavar="S")
    p.add_argument("--patch", type=int, default=7, metavar="K")
    p.add_argument("--h-mult", type=float, default=10.0)
    p.add_argument("--init", choices=dn.INIT_MODES, default=None)
    p.add_argument("--range", type=_range, default=BoxConstraint(0.0, 255.0), metavar="L:U")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", default="-", metavar="PATH", help="CSV path, '-' for stdout")
    return parser


def _params(args, sigma: float, solver: str) -> dn.NlemParams:
    return dn.NlemParams.for_sigma(
        sigma, h_mult=args.h_mult, search=args.search, patch=args.patch, solver=solver,
        iters=args.iters, mu=args.mu, epsilon=args.eps, init_mode=args.init,
        range=args.range)


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(", ", ": "))


def cmd_median(args, out) -> int:
    ps = read_points(args.points)
    box = args.range
    if args.solver == "admm":
        res = admm_euclidean_median(ps, box, AdmmConfig(
            mu=args.mu, max_iter=args.iters, tol_primal=args.tol,
            record_trace=args.trace is not None))
        z, obj, iters, trace = res.minimizer, res.objective, res.iterations_run, res.trace
    elif args.solver == "irls":
        res = irls_euclidean_median(ps, IrlsConfig(
            epsilon=args.eps, max_iter=args.iters, tol=args.tol,
            record_trace=args.trace is not None), box=box)
        z, obj, iters, trace = res.minimizer, res.objective, res.iterations_run, res.trace
    else:
        z, obj = brute_force_median_2d(ps, box, resolution=args.resolution)
        iters, trace = 0, ()
    if args.trace is not None:
        ensure_parent(args.trace)
        write_trace_csv(trace, args.trace)
    summary = {
        "solver": args.solver,
        "n": ps.n,
        "d": ps.d,
        "minimizer": [float(v) for v in z],
        "objective": float(obj),
        "iterations": int(iters),
        "optimality_residual": optimality_residual(ps, box, z),
    }
    print(_dumps(summary), file=out)
    return 0


def _stem(path: str) -> str:
    return os.path.splitext(os.path.basename(path))[0]


def cmd_denoise(args, out) -> int:
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    params = _params(args, args.sigma, args.solver)
    clean = read_pgm(args.image)
    dn.set_threads(args.threads)
    results = []
    for r in range(args.repeat):
        seed = args.seed + r
        noisy = dn.add_gaussian_noise(clean, args.sigma, seed)
        den = dn.nlem_denoise(noisy, params)
        results.append((seed, noisy, den))
    os.makedirs(args.out, exist_ok=True)
    stem = _stem(args.image)
    p_noisy, p_den = [], []
    for seed, noisy, den in results:
        write_pgm(noisy, os.path.join(args.out, f"{stem}_noisy_seed{seed}.pgm"), args.format)
        write_pgm(den, os.path.join(args.out, f"{stem}_{args.solver}_seed{seed}.pgm"), args.format)
        pn, pd = psnr(clean, noisy), psnr(clean, den)
        p_noisy.append(pn)
        p_den.append(pd)
        print(_dumps({"seed": seed, "psnr_noisy": pn, "psnr_denoised": pd}), file=out)
    if args.repeat > 1:
        print(_dumps({"repeat": args.repeat, "mean_psnr_noisy": float(np.mean(p_noisy)),
                      "mean_psnr_denoised": float(np.mean(p_den))}), file=out)
    return 0


def cmd_trace(args, out) -> int:
    params = _params(args, args.sigma, args.solver)
    clean = read_pgm(args.image)
    if args.pixel is not None:
        r, c = args.pixel
        if not (0 <= r < clean.height and 0 <= c < clean.width):
            raise UsageError(f"pixel {args.pixel} outside {clean.height}x{clean.width} image")
        if args.solver == "nlm":
            raise UsageError("per-pixel traces need --solver admm or irls")
    dn.set_threads(args.threads)
    noisy = dn.add_gaussian_noise(clean, args.sigma, args.seed)
    dest = out if args.out == "-" else args.out
    if args.out != "-":
        ensure_parent(args.out)
    if args.pixel is not None:
        res = dn.solve_pixel(noisy, args.pixel, params)
        write_trace_csv(res.trace, dest)
    else:
        frames = dn.nlem_iterates(noisy, params)
        write_rows(dest, PSNR_HEADER,
                   ((t + 1, psnr(clean, img)) for t, img in enumerate(frames)))
    return 0


def cmd_bench(args, out) -> int:
    if args.repeat < 1:
        raise UsageError("--repeat must be >= 1")
    cells = [(sigma, method, _params(args, sigma, method))
             for sigma in args.sigmas for method in args.methods]
    cleans = [(path, read_pgm(path)) for path in args.images]
    dn.set_threads(args.threads)
    rows = []
    for path, clean in cleans:
        for sigma, method, params in cells:
            vals = []
            for r in range(args.repeat):
                noisy = dn.add_gaussian_noise(clean, sigma, args.seed + r)
                vals.append(psnr(clean, dn.nlem_denoise(noisy, params)))
            std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
            rows.append((_stem(path), float(sigma), method, float(np.mean(vals)), std,
                         args.repeat))
    if args.out != "-":
        ensure_parent(args.out)
    write_rows(out if args.out == "-" else args.out, BENCH_HEADER, rows)
    return 0


COMMANDS = {"median": cmd_median, "denoise": cmd_denoise, "trace": cmd_trace,
            "bench": cmd_bench}


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args, out)
    except (UsageError, PgmError, OSError) as exc:
        print(f"nlem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"nlem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
