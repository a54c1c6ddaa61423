"""Time the numpy and numba forms of the hot kernels side by side.

    python benchmarks/bench_backends.py [--sizes 50 100 200] [--repeat 20]

For each image size the script builds the translation pair, advances a few
accelerated steps to get a non-trivial state, then times one call of each
fused kernel under both backends and checks that they agree.
"""
import argparse
import time

import numpy as np

from accel_diffeo import _fused
from accel_diffeo._backend import HAVE_NUMBA
from accel_diffeo.evolution import SolverConfig, run
from accel_diffeo.fields import GridSpec
from accel_diffeo.potential import HSPotential
from accel_diffeo.synth import gen_square_pair


def _state(n):
    grid = GridSpec(n, n)
    I0, I1, _ = gen_square_pair(grid, 2 * n // 5, (n // 5, 0))
    res = run(I0, I1, SolverConfig(scheme="agd", alpha=5.0, max_iters=200))
    s = res.state
    P = HSPotential(I0, I1, 5.0)
    gix, giy = P.grad_I1
    rho0 = np.full(grid.shape, 1.0 / grid.area)
    return dict(
        velocity_step=(s.v.vx, s.v.vy, s.phi.ux, s.phi.uy, s.psi.ux, s.psi.uy, s.rho.data,
                       rho0, I0.data, I1.data, gix, giy, 5.0, 0.1, 1.0, 1e-12, 0.0, False,
                       0.005, 1.0),
        gd_step=(s.phi.ux, s.phi.uy, s.psi.ux, s.psi.uy, I0.data, I1.data, gix, giy,
                 5.0, 0.04, 1.0),
        sampled_gradient=(s.phi.ux, s.phi.uy, I0.data, I1.data, gix, giy, 5.0, 1.0),
        hs_terms=(s.phi.ux, s.phi.uy, I0.data, I1.data, 5.0, 1.0),
    )


def _time(fn, args, repeat):
    fn(*args)  # warm up (and compile)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t)
    return best


def _max_diff(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return max(float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path can run")
        return 1
    print(f"{'kernel':<18}{'size':>6}{'numpy ms':>11}{'numba ms':>11}{'speedup':>9}{'max diff':>11}")
    for n in args.sizes:
        for name, fargs in _state(n).items():
            f_np = getattr(_fused, f"{name}_np")
            f_nb = getattr(_fused, f"{name}_nb")
            t_np = _time(f_np, fargs, args.repeat)
            t_nb = _time(f_nb, fargs, args.repeat)
            diff = _max_diff(f_np(*fargs), f_nb(*fargs))
            print(f"{name:<18}{n:>6}{1e3 * t_np:>11.3f}{1e3 * t_nb:>11.3f}"
                  f"{t_np / t_nb:>9.1f}{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
