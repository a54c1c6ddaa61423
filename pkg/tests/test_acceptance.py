"""Acceptance suite: one test per criterion.

Protocol runs are cached per process so criteria that share a configuration
(the 50x50 alpha = 8 run feeds both the regularity and the size sweep) pay
for it once. Measured numbers are printed in the terminal summary.
"""
import time
from functools import lru_cache

import numpy as np
import pytest

from accel_diffeo.evolution import (SolverConfig, SolverState, agd_step, epdiff_step,
                                    gd_step, inverse_consistency, invert_map,
                                    nondissip_step, run, wave_step)
from accel_diffeo.experiments import ExperimentSpec, run_configuration
from accel_diffeo.fields import GridSpec, MapField, ScalarField, VectorField
from accel_diffeo.io import decode_flow, encode_flow, encode_pgm, parse_pgm
from accel_diffeo.kernels import burgers_flux_diff, continuity_array
from accel_diffeo.potential import HSPotential, gradient_oracle
from accel_diffeo.stencils import det_jacobian_array
from accel_diffeo.synth import (endpoint_error, gen_rect_pair, gen_square_pair,
                                random_smooth_field, recon_error)

ALPHAS = (1.0, 2.0, 4.0, 8.0, 16.0)
SIZES = (50, 75, 100)
NOISE = (0.0, 0.1, 0.2, 0.3)
MAX_ITERS = 100000


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


@lru_cache(maxsize=None)
def convergence_run(scheme):
    g = GridSpec(50, 50)
    I0, I1, gt = gen_square_pair(g, 20, (10, 0))
    res, sec = timed(run, I0, I1, SolverConfig(scheme=scheme, alpha=5.0, max_iters=MAX_ITERS))
    return I0, I1, gt, res, sec


@lru_cache(maxsize=None)
def sweep_run(scheme, size, alpha):
    g = GridSpec(size, size)
    I0, I1, gt = gen_square_pair(g, 16, (7, 0))
    res, sec = timed(run, I0, I1, SolverConfig(scheme=scheme, alpha=alpha, max_iters=MAX_ITERS))
    return res, sec


@lru_cache(maxsize=None)
def scaling_runs():
    g = GridSpec(50, 50)
    I0, I1 = gen_rect_pair(g, 17, 20, 14, (8, 0))
    agd, s1 = timed(run, I0, I1, SolverConfig(scheme="agd", alpha=2.0, max_iters=MAX_ITERS))
    gd, s2 = timed(run, I0, I1, SolverConfig(scheme="gd", alpha=2.0, max_iters=agd.iterations))
    return I0, I1, agd, gd, s1 + s2


def test_criterion_1_gradient_oracle(note):
    start = time.perf_counter()
    worst = {a: gradient_oracle(32, a, seed=7, pairs=100, eps=1e-5)[0] for a in (0.0, 1.0, 5.0)}
    sec = time.perf_counter() - start
    note(1, ", ".join(f"alpha {a:g}: max rel err {e:.2e}" for a, e in worst.items())
         + f"; {sec:.1f} s")
    assert all(e <= 1e-4 for e in worst.values())
    assert sec < 10.0


def test_criterion_2_mass_conservation(note):
    g = GridSpec(50, 50)
    I0, I1, _ = gen_square_pair(g, 20, (10, 0))
    cfg = SolverConfig(scheme="agd", alpha=5.0, tol=0.0, max_iters=1000)
    res, sec = timed(run, I0, I1, cfg)
    drift = abs(res.state.mass() - 1.0)
    note(2, f"{res.iterations} iterations, |mass - 1| = {drift:.2e}, "
            f"min rho {res.state.rho.data.min():.2e}; {sec:.1f} s")
    assert res.iterations == 1000
    assert drift <= 1e-8
    assert sec < 30.0


def test_criterion_3_convergence_experiment(note):
    I0, I1, gt, agd, s1 = convergence_run("agd")
    _, _, _, gd, s2 = convergence_run("gd")
    data0, _ = recon_error(I0, I1, MapField.identity(I0.grid))
    data, _ = recon_error(I0, I1, agd.phi)
    epe = endpoint_error(agd.phi, gt)
    U_agd, U_gd = agd.potentials(), gd.potentials()
    rises = int(np.sum(np.diff(U_agd) > 0))
    worst_gd_rise = float(np.max(np.diff(U_gd))) if len(U_gd) > 1 else 0.0
    note(3, f"AGD {agd.iterations} iters (converged {agd.converged}), data {data / data0:.2e} x initial, "
            f"EPE {epe:.3f} px, {rises} potential increases; GD {gd.iterations} iters "
            f"(converged {gd.converged}), largest step rise {worst_gd_rise:.1e}; {s1 + s2:.1f} s")
    assert agd.converged and gd.converged
    assert data < 1e-3 * data0
    assert epe <= 0.25
    assert gd.iterations > agd.iterations
    assert rises >= 1
    assert worst_gd_rise <= 1e-9
    assert s1 + s2 < 120.0


def test_criterion_4_scaling_experiment(note):
    I0, I1, agd, gd, sec = scaling_runs()
    data0, _ = recon_error(I0, I1, MapField.identity(I0.grid))
    d_agd, _ = recon_error(I0, I1, agd.phi)
    d_gd, _ = recon_error(I0, I1, gd.phi)
    note(4, f"AGD converged {agd.converged} at {agd.iterations}; data AGD {d_agd:.3f} "
            f"({d_agd / data0:.3f} x initial), GD at {gd.iterations} iters {d_gd:.3f} "
            f"({d_gd / data0:.3f} x initial); {sec:.1f} s")
    assert agd.converged and gd.iterations == agd.iterations
    assert d_agd < d_gd
    assert d_agd < 1e-3 * data0
    assert sec < 180.0


def test_criterion_5_regularity_sweep(note):
    start = time.perf_counter()
    iters = {s: [sweep_run(s, 50, a)[0].iterations for a in ALPHAS] for s in ("agd", "gd")}
    conv = {s: all(sweep_run(s, 50, a)[0].converged for a in ALPHAS) for s in ("agd", "gd")}
    sec = time.perf_counter() - start
    ratios = {s: [b / a for a, b in zip(v[:-1], v[1:])] for s, v in iters.items()}
    note(5, f"alphas {ALPHAS}: AGD iters {iters['agd']}, GD iters {iters['gd']}; "
            f"ratios AGD {[round(r, 2) for r in ratios['agd']]}, "
            f"GD {[round(r, 2) for r in ratios['gd']]}; {sec:.1f} s")
    assert conv["agd"] and conv["gd"]
    for s in ("agd", "gd"):
        assert all(b > a for a, b in zip(iters[s][:-1], iters[s][1:])), f"{s} not increasing"
    assert all(ra < rg for ra, rg in zip(ratios["agd"], ratios["gd"]))
    assert sec < 600.0


def test_criterion_6_size_sweep(note):
    start = time.perf_counter()
    iters = {s: [sweep_run(s, n, 8.0)[0].iterations for n in SIZES] for s in ("agd", "gd")}
    sec = sum(sweep_run(s, n, 8.0)[1] for s in ("agd", "gd") for n in SIZES)
    note(6, f"sizes {SIZES} at alpha 8: AGD iters {iters['agd']}, GD iters {iters['gd']}; "
            f"{sec:.1f} s of solver time ({time.perf_counter() - start:.1f} s not cached)")
    assert iters["agd"][2] <= 2 * iters["agd"][0]
    assert all(b > a for a, b in zip(iters["gd"][:-1], iters["gd"][1:]))
    assert sec < 900.0


def test_criterion_7_noise_robustness(note):
    spec = ExperimentSpec.for_kind("noise_sweep", sizes=(50,), max_iters=MAX_ITERS)
    start = time.perf_counter()
    epe, status = {}, {}
    for lv in NOISE:
        for s in ("agd", "gd"):
            r = run_configuration(spec, 50, 1.0, lv, s)
            epe[s, lv], status[s, lv] = r.endpoint_error, r.status
    sec = time.perf_counter() - start
    note(7, "; ".join(f"level {lv:g}: AGD {epe['agd', lv]:.3f} ({status['agd', lv]}), "
                      f"GD {epe['gd', lv]:.3f} ({status['gd', lv]})" for lv in NOISE)
         + f"; {sec:.1f} s")
    assert all(epe["agd", lv] <= epe["gd", lv] for lv in NOISE)
    assert epe["agd", 0.3] < epe["gd", 0.2]
    assert sec < 600.0


def _epdiff_oracle(vx, vy):
    h, w = vx.shape
    ox, oy = np.zeros((h, w)), np.zeros((h, w))

    def eo(c, p, m):
        return max(c, 0) ** 2 - min(c, 0) ** 2 + min(p, 0) ** 2 - max(m, 0) ** 2

    def up(a, fwd, back, here):
        return a * (here - back) if a > 0 else a * (fwd - here) if a < 0 else 0.0

    for y in range(h):
        for x in range(w):
            e, wx, n, s = (x + 1) % w, (x - 1) % w, (y + 1) % h, (y - 1) % h
            a, b = vx[y, x], vy[y, x]
            ax, ay = (vx[y, e] - vx[y, wx]) / 2, (vx[n, x] - vx[s, x]) / 2
            bx, by = (vy[y, e] - vy[y, wx]) / 2, (vy[n, x] - vy[s, x]) / 2
            div = ax + by
            tx = 0.5 * eo(a, vx[y, e], vx[y, wx]) + up(b, vx[n, x], vx[s, x], a)
            ty = 0.5 * eo(b, vy[n, x], vy[s, x]) + up(a, vy[y, e], vy[y, wx], b)
            ox[y, x] = -(tx + ax * a + bx * b + a * div)
            oy[y, x] = -(ty + ay * a + by * b + b * div)
    return ox, oy


def test_criterion_8_structural_invariants(note):
    failures = []

    # fixed points at critical points
    g = GridSpec(30, 30)
    I0, I1, gt = gen_square_pair(g, 10, (4, 0))
    P = HSPotential(I0, I1, 3.0)
    s0 = SolverState(0.0, VectorField.zeros(g), gt, MapField.translation(g, -4, 0),
                     ScalarField.constant(g, 1.0 / g.area))
    for name, step in (("agd", agd_step), ("agd_nodissip", nondissip_step),
                       ("epdiff", epdiff_step), ("gd", gd_step)):
        s1 = step(s0, P, SolverConfig(scheme=name, alpha=3.0))
        if not (np.array_equal(s1.phi.ux, gt.ux) and np.array_equal(s1.phi.uy, gt.uy)):
            failures.append(f"{name} moved off the critical point")
    out = wave_step(gt, gt, 1.0, P, SolverConfig(scheme="wave", alpha=3.0))
    if not np.array_equal(out.ux, gt.ux):
        failures.append("wave moved off the critical point")

    # positive Jacobian at convergence, inverse consistency
    dets = {}
    for scheme in ("agd", "gd", "wave"):
        res = convergence_run(scheme)[3]
        if res.converged:
            dets[f"c3 {scheme}"] = float(det_jacobian_array(res.phi.ux, res.phi.uy).min())
    I0r, I1r, agd4, _, _ = scaling_runs()
    if agd4.converged:
        dets["c4 agd"] = float(det_jacobian_array(agd4.phi.ux, agd4.phi.uy).min())
    failures += [f"min det {k} = {v:.3g}" for k, v in dets.items() if not v > 0]
    inv = {s: inverse_consistency(convergence_run(s)[3].phi, convergence_run(s)[3].psi)
           for s in ("agd", "gd")}
    failures += [f"inverse consistency {s} = {v:.3f}" for s, v in inv.items() if v > 0.5]

    # EPDiff right-hand side against the loop oracle
    ge = GridSpec(16, 12)
    rng = np.random.default_rng(3)
    vx, vy = random_smooth_field(ge, rng, 3, 0.8), random_smooth_field(ge, rng, 3, 0.8)
    flat = ScalarField(ge, 0.5 + 0.3 * random_smooth_field(ge, rng, 2))
    base = SolverState.initial(ge)
    se = SolverState(0.0, VectorField(ge, vx, vy), base.phi, base.psi, base.rho)
    s1 = epdiff_step(se, HSPotential(flat, flat, 2.0), SolverConfig(scheme="epdiff", alpha=2.0))
    ox, oy = _epdiff_oracle(vx, vy)
    ep_err = max(np.max(np.abs((s1.v.vx - vx) / s1.t - ox)), np.max(np.abs((s1.v.vy - vy) / s1.t - oy)))
    if ep_err > 1e-10:
        failures.append(f"EPDiff rhs error {ep_err:.2e}")

    # wave vs accelerated flows
    wave, agd = convergence_run("wave")[3], convergence_run("agd")[3]
    wave_gap = endpoint_error(wave.phi, agd.phi)
    if wave_gap > 0.5:
        failures.append(f"wave vs AGD endpoint difference {wave_gap:.3f}")

    # bitwise determinism
    I0c, I1c, _ = gen_square_pair(GridSpec(50, 50), 20, (10, 0))
    repeat = [run(I0c, I1c, SolverConfig(scheme=s, alpha=5.0, max_iters=500))
              for s in ("agd", "agd", "gd", "gd")]
    for a, b in (repeat[:2], repeat[2:]):
        if a.trace != b.trace or not np.array_equal(a.phi.ux, b.phi.ux):
            failures.append("repeated runs differ")

    # file round trips
    m = MapField(g, random_smooth_field(g, rng, 3, 4.0).astype(np.float32).astype(float),
                 random_smooth_field(g, rng, 3, 4.0).astype(np.float32).astype(float))
    back = decode_flow(encode_flow(m))
    if not (np.array_equal(back.ux, m.ux) and np.array_equal(back.uy, m.uy)):
        failures.append("DFLO round trip")
    levels = rng.integers(0, 256, size=(13, 17)) / 255.0
    for plain in (False, True):
        if not np.array_equal(parse_pgm(encode_pgm(levels, plain)), levels):
            failures.append(f"PGM round trip (plain={plain})")
    ident = MapField.identity(g)
    if not np.array_equal(invert_map(ident).ux, ident.ux):
        failures.append("identity inverse")

    note(8, f"min det {', '.join(f'{k} {v:.3f}' for k, v in dets.items())}; inverse consistency "
            f"{', '.join(f'{k} {v:.3f}' for k, v in inv.items())} px; EPDiff rhs err {ep_err:.1e}; "
            f"wave vs AGD {wave_gap:.3f} px; failures: {failures or 'none'}")
    assert not failures


def _row(values, height=4):
    return ScalarField.from_array(np.tile(np.asarray(values, dtype=float), (height, 1)))


def test_criterion_9_entropy_kernels(note):
    checks = {}
    checks["constant"] = all(np.all(burgers_flux_diff(_row([c] * 6), 1).data == 0)
                             for c in (2.5, -1.5, 0.0))
    checks["shock pair"] = np.all(burgers_flux_diff(_row([1.0, -1.0] * 3), 1).data[:, 0] == 2.0)
    checks["rarefaction pair"] = np.all(burgers_flux_diff(_row([-1.0, 1.0] * 3), 1).data[:, 0] == -2.0)
    shock = burgers_flux_diff(_row([0, 1.0, -1.0, 0, 0, 0]), 1).data[0]
    rare = burgers_flux_diff(_row([0, -1.0, 1.0, 0, 0, 0]), 1).data[0]
    checks["isolated pairs"] = (shock[1] == 2.0 and shock[2] == -2.0
                                and rare[1] == -1.0 and rare[2] == 1.0)

    rho = np.zeros((6, 6))
    rho[2, 2] = 0.8
    out = continuity_array(rho, np.ones((6, 6)), np.zeros((6, 6)), 0.5)
    want = np.zeros((6, 6))
    want[2, 2] = want[2, 3] = 0.4
    checks["donor cell half step"] = np.array_equal(out, want)
    uniform = np.full((5, 5), 1.0 / 25)
    rng = np.random.default_rng(0)
    fx, fy = rng.uniform(-1, 1, (5, 5)), rng.uniform(-1, 1, (5, 5))
    steady = continuity_array(uniform, np.full((5, 5), 0.7), np.full((5, 5), -0.3), 0.5)
    checks["uniform steady"] = np.allclose(steady, uniform, rtol=0, atol=1e-18)
    r = rng.random((5, 5))
    out = continuity_array(r, fx, fy, 0.25)
    checks["positivity and mass"] = out.min() >= 0.0 and abs(out.sum() - r.sum()) <= 1e-14
    note(9, ", ".join(f"{k} {'ok' if v else 'FAILED'}" for k, v in checks.items()))
    assert all(checks.values())
