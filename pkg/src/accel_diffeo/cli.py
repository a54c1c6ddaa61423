"""Command-line front end.

    accel-diffeo register --i0 A.pgm --i1 B.pgm --scheme agd --alpha 5 --out-flow u.dflo
    accel-diffeo gen --pair square --size 50 --square 20 --shift 10 --out-dir pair/
    accel-diffeo experiment --spec sweep.txt --out results/
    accel-diffeo check-grad --alpha 1 --seed 7 --grid 32
    accel-diffeo info

Exit codes: 0 success, 1 usage error (bad flags, missing or unreadable
inputs), 2 numerical abort (solver failure, gradient check above threshold).
"""
import argparse
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND, HAVE_NUMBA
from .evolution import SCHEMES, SolverAbort, SolverConfig, run
from .experiments import SpecError, load_spec, run_experiment, write_trace
from .fields import GridSpec
from .io import FlowError, PgmError, load_pgm, save_flow, save_pgm
from .potential import gradient_oracle
from .stencils import warp
from .synth import add_salt_pepper, gen_rect_pair, gen_square_pair, recon_error

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
GRAD_THRESHOLD = 1e-4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser():
    parser = _Parser(prog="accel-diffeo", description="Accelerated diffeomorphic registration.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    reg = sub.add_parser("register", help="register I1 onto I0")
    reg.add_argument("--i0", required=True, help="fixed image (PGM)")
    reg.add_argument("--i1", required=True, help="moving image (PGM)")
    reg.add_argument("--scheme", choices=SCHEMES, default="agd")
    reg.add_argument("--alpha", type=float, required=True)
    reg.add_argument("--p", type=int, default=2)
    reg.add_argument("--C", type=float, default=0.25)
    reg.add_argument("--tol", type=float, default=1e-4)
    reg.add_argument("--max-iters", type=int, default=20000)
    reg.add_argument("--safety", type=float, default=0.9)
    reg.add_argument("--eps-visc", type=float, default=0.0)
    reg.add_argument("--seed", type=int, default=0,
                     help="recorded in the trace header; the solvers are deterministic")
    reg.add_argument("--out-flow", help="DFLO file for the displacement")
    reg.add_argument("--out-warped", help="PGM file for I1 warped by the map")
    reg.add_argument("--out-trace", help="CSV file for the per-iteration trace")

    gen = sub.add_parser("gen", help="write a synthetic image pair")
    gen.add_argument("--pair", choices=("square", "rect"), default="square")
    gen.add_argument("--size", type=int, default=50)
    gen.add_argument("--square", type=int, default=20)
    gen.add_argument("--shift", type=int, default=10, help="x shift in pixels")
    gen.add_argument("--shift-y", type=int, default=0)
    gen.add_argument("--rect-w", type=int, default=20)
    gen.add_argument("--rect-h", type=int, default=14)
    gen.add_argument("--noise", type=float, default=0.0, help="salt-and-pepper rate")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-dir", required=True)

    exp = sub.add_parser("experiment", help="run a key=value experiment spec")
    exp.add_argument("--spec", required=True)
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--workers", type=int, help="override the spec's worker count")

    chk = sub.add_parser("check-grad", help="finite-difference check of the potential gradient")
    chk.add_argument("--alpha", type=float, default=1.0)
    chk.add_argument("--seed", type=int, default=0)
    chk.add_argument("--grid", type=int, default=32)
    chk.add_argument("--pairs", type=int, default=100)
    chk.add_argument("--eps", type=float, default=1e-5)

    sub.add_parser("info", help="print version, backend and defaults")
    return parser


def _cmd_register(a):
    for path in (a.i0, a.i1):
        if not Path(path).is_file():
            raise UsageError(f"no such file: {path}")
    try:
        I0, I1 = load_pgm(a.i0), load_pgm(a.i1)
    except PgmError as exc:
        raise UsageError(f"cannot read image: {exc}") from None
    if I0.grid != I1.grid:
        raise UsageError(f"image sizes differ: {I0.grid.shape} vs {I1.grid.shape}")
    try:
        cfg = SolverConfig(scheme=a.scheme, alpha=a.alpha, p=a.p, C=a.C, safety=a.safety,
                           tol=a.tol, max_iters=a.max_iters, eps_visc=a.eps_visc)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    header = [f"{f.name} = {getattr(cfg, f.name)}" for f in dc_fields(cfg)]
    header += [f"i0 = {a.i0}", f"i1 = {a.i1}", f"seed = {a.seed}"]
    try:
        res = run(I0, I1, cfg)
    except SolverAbort as exc:
        if a.out_trace:
            write_trace(a.out_trace, exc.trace or [], header + ["status = abort"])
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    status = "converged" if res.converged else "max_iters"
    if a.out_flow:
        save_flow(res.phi, a.out_flow)
    if a.out_warped:
        save_pgm(warp(I1, res.phi), a.out_warped)
    if a.out_trace:
        write_trace(a.out_trace, res.trace, header + [f"status = {status}"])
    data, _ = recon_error(I0, I1, res.phi)
    final = res.trace[-1].potential if res.trace else 0.0
    print(f"{status} after {res.iterations} iterations: potential {final:.6g}, "
          f"data term {data:.6g}")
    return EXIT_OK


def _cmd_gen(a):
    out = Path(a.out_dir)
    try:
        grid = GridSpec(a.size, a.size)
        if a.pair == "square":
            I0, I1, gt = gen_square_pair(grid, a.square, (a.shift, a.shift_y))
        else:
            I0, I1 = gen_rect_pair(grid, a.square, a.rect_w, a.rect_h, (a.shift, a.shift_y))
            gt = None
        if a.noise > 0:
            I0 = add_salt_pepper(I0, a.noise, a.seed)
            I1 = add_salt_pepper(I1, a.noise, a.seed + 1)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.mkdir(parents=True, exist_ok=True)
    save_pgm(I0, out / "I0.pgm")
    save_pgm(I1, out / "I1.pgm")
    written = ["I0.pgm", "I1.pgm"]
    if gt is not None:
        save_flow(gt, out / "gt.dflo")
        written.append("gt.dflo")
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


def _cmd_experiment(a):
    if not Path(a.spec).is_file():
        raise UsageError(f"no such file: {a.spec}")
    try:
        spec = load_spec(a.spec)
        if a.workers is not None:
            from dataclasses import replace
            spec = replace(spec, workers=a.workers)
    except SpecError as exc:
        raise UsageError(f"bad spec: {exc}") from None

    def progress(r):
        print(f"{r.scheme:>12} size {r.size} alpha {r.alpha:g} noise {r.noise:g}: "
              f"{r.status}, {r.iterations} iterations", flush=True)

    results = run_experiment(spec, a.out, progress=progress)
    print(f"{len(results)} runs written to {a.out}")
    return EXIT_OK


def _cmd_check_grad(a):
    if a.grid < 4 or a.pairs < 1 or not a.eps > 0 or a.alpha < 0:
        raise UsageError("check-grad needs grid >= 4, pairs >= 1, eps > 0 and alpha >= 0")
    worst, _ = gradient_oracle(a.grid, a.alpha, a.seed, a.pairs, a.eps)
    print(f"max relative error {worst:.3e} over {a.pairs} pairs "
          f"(grid {a.grid}, alpha {a.alpha:g}, eps {a.eps:g})")
    return EXIT_OK if worst < GRAD_THRESHOLD else EXIT_NUMERIC


def _cmd_info(a):
    print(f"accel_diffeo {__version__}")
    print(f"backend {BACKEND} (numba {'available' if HAVE_NUMBA else 'missing'})")
    print(f"numpy {np.__version__}")
    print(f"schemes {', '.join(SCHEMES)}")
    cfg = SolverConfig()
    print("defaults " + ", ".join(f"{f.name}={getattr(cfg, f.name)}" for f in dc_fields(cfg)))
    return EXIT_OK


_COMMANDS = {"register": _cmd_register, "gen": _cmd_gen, "experiment": _cmd_experiment,
             "check-grad": _cmd_check_grad, "info": _cmd_info}


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FlowError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
