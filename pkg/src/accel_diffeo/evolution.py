"""Optimizer schemes on maps: accelerated descent, its non-dissipative and
constant-density variants, plain gradient descent, and the damped wave form.

Every velocity scheme advances the same coupled system:

    v     : dv/dt = -k(t) v - (Dv) v - s(t) grad U / rho
    phi   : dphi/dt = v(phi)
    psi   : dpsi/dt = -(D psi) v
    rho   : drho/dt = -div(rho v)

with friction k(t) = (p+1)/t and force scale s(t) = C p^2 t^(p-2) for the
accelerated scheme and k = 0, s = 1 without dissipation.

Discretization notes:

* grad U / rho is formed at the particles: the sampled gradient
  r (grad I1)(phi) - alpha lap u is splatted onto the grid with bilinear
  weights and divided by the equally splatted initial density.
* the velocity is updated first; phi, psi and rho then move with the new v.
* psi is transported by upwinding and then projected once onto the inverse of
  the new phi (w <- -u(x + w)), which keeps the pair consistent.
* gradient descent moves phi along -grad U evaluated factor by factor along
  the particle path, with a step bounded by the stiffness of that operator.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from .fields import GridSpec, MapField, ScalarField, VectorField, _check_same_grid
from . import _fused
from .kernels import (NEGATIVE_DENSITY_TOL, VMAX_FLOOR, burgers_array, cfl_from_vmax,
                      upwind_array)
from .stencils import bilinear, ddx, ddy, det_jacobian_array

log = logging.getLogger(__name__)

SCHEMES = ("agd", "agd_nodissip", "epdiff", "gd", "wave")
VELOCITY_SCHEMES = ("agd", "agd_nodissip", "epdiff")
CONVERGE_STREAK = 5


class CflFailure(RuntimeError):
    """A step produced negative density or a non-finite raster."""


class SolverAbort(RuntimeError):
    """A run gave up after a failed retry; carries the last valid state."""

    def __init__(self, message, state=None, trace=None):
        super().__init__(message)
        self.state = state
        self.trace = trace or []


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = "agd"
    alpha: float = 5.0
    p: int = 2
    C: float = 0.25
    safety: float = 0.9
    tol: float = 1e-4
    max_iters: int = 20000
    rho_floor: Optional[float] = None  # default 1e-8 / (W * H)
    eps_visc: float = 0.0
    t0: float = 0.0
    dt_cap: float = 0.25

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.alpha < 0 or not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if not self.C > 0:
            raise ValueError(f"C must be positive, got {self.C}")
        if not 0 < self.safety <= 1:
            raise ValueError(f"safety must lie in (0, 1], got {self.safety}")
        if self.eps_visc < 0:
            raise ValueError(f"eps_visc must be >= 0, got {self.eps_visc}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    def floor_for(self, grid: GridSpec) -> float:
        if self.rho_floor is not None:
            return self.rho_floor
        return 1e-8 / grid.size


@dataclass(frozen=True, eq=False)
class SolverState:
    t: float
    v: VectorField
    phi: MapField
    psi: MapField
    rho: ScalarField

    @classmethod
    def initial(cls, grid: GridSpec):
        """phi = psi = id, v = 0, uniform density of total mass one."""
        return cls(0.0, VectorField.zeros(grid), MapField.identity(grid),
                   MapField.identity(grid), ScalarField.constant(grid, 1.0 / grid.area))

    @property
    def grid(self):
        return self.v.grid

    def mass(self):
        return self.rho.total()


@dataclass(frozen=True)
class TraceRecord:
    iter: int
    t: float
    potential: float
    kinetic: float
    total: float
    dt: float
    map_increment: float


@dataclass
class RunResult:
    phi: MapField
    psi: MapField
    trace: List[TraceRecord]
    converged: bool
    state: SolverState = None
    iterations: int = 0

    def potentials(self):
        return np.array([r.potential for r in self.trace])


def kinetic_energy(rho: ScalarField, v: VectorField) -> float:
    _check_same_grid(rho, v)
    return _kinetic(rho.data, v.vx, v.vy, rho.grid.cell_area)


def _kinetic(rho, vx, vy, cell_area):
    return 0.5 * float(np.sum(rho * (vx * vx + vy * vy))) * cell_area


# -- array-level building blocks ----------------------------------------------

def _self_advection(vx, vy, dx):
    """Upwind/entropy discretization of (Dv) v, one raster per component."""
    zero = np.zeros_like(vx)
    ax = 0.5 * burgers_array(vx, 1, dx) + upwind_array(vx, zero, vy, dx)
    ay = 0.5 * burgers_array(vy, 2, dx) + upwind_array(vy, vx, zero, dx)
    return ax, ay


def epdiff_extra_terms(vx, vy, dx=1.0):
    """(grad v) v + v div v with central differences."""
    dvx_dx, dvx_dy = ddx(vx, dx), ddy(vx, dx)
    dvy_dx, dvy_dy = ddx(vy, dx), ddy(vy, dx)
    div = dvx_dx + dvy_dy
    # ((grad v) v)_i = sum_j (d_i v_j) v_j
    tx = dvx_dx * vx + dvy_dx * vy + vx * div
    ty = dvx_dy * vx + dvy_dy * vy + vy * div
    return tx, ty


def _schedule(cfg: SolverConfig, t, dt):
    """(friction, force scale) evaluated at t + t0 + dt."""
    tau = t + cfg.t0 + dt
    if cfg.scheme == "agd":
        p = cfg.p
        return (p + 1) / tau, cfg.C * p * p * tau ** (p - 2)
    return 0.0, 1.0


def _images(P):
    g = P.grid
    return P.I0.data, P.I1.data, P.grad_I1[0], P.grad_I1[1], float(P.alpha), float(g.dx)


def _velocity_step(arrs, P, cfg, dt, floor):
    t, vx, vy, phx, phy, psx, psy, rho = arrs
    I0, I1, gix, giy, alpha, dx = _images(P)
    friction, force = _schedule(cfg, t, dt)
    rho0 = np.full(rho.shape, 1.0 / P.grid.area)
    out = _fused.velocity_step(vx, vy, phx, phy, psx, psy, rho, rho0, I0, I1, gix, giy, alpha,
                               float(friction), float(force), float(floor),
                               float(cfg.eps_visc), cfg.scheme == "epdiff", float(dt), dx)
    out = (t + dt,) + tuple(out)
    bad = (float(np.min(out[7])) < -NEGATIVE_DENSITY_TOL) or not all(
        np.all(np.isfinite(a)) for a in out[1:])
    return out, bad


def _gd_step(arrs, P, cfg, dt):
    t, vx, vy, phx, phy, psx, psy, rho = arrs
    I0, I1, gix, giy, alpha, dx = _images(P)
    nvx, nvy, nphx, nphy, npsx, npsy = _fused.gd_step(phx, phy, psx, psy, I0, I1, gix, giy,
                                                      alpha, float(dt), dx)
    out = (t + dt, nvx, nvy, nphx, nphy, npsx, npsy, rho)
    bad = not all(np.all(np.isfinite(a)) for a in out[1:])
    return out, bad


def _step_dt(arrs, P, cfg, floor):
    dx = P.grid.dx
    if cfg.scheme == "gd":
        return gd_dt(cfg, P, arrs[5], arrs[6])
    _, vx, vy = arrs[:3]
    vmax = max(_fused.speed_bound(vx, vy, dx), VMAX_FLOOR)
    dt = cfl_from_vmax(vmax, cfg.alpha, cfg.safety, cfg.dt_cap).dt_agd
    # the force scales with 1/rho, so the oscillation bound of the wave form
    # at the lightest pixel applies as well
    rho_min = max(float(np.min(arrs[7])), floor)
    return min(dt, wave_dt(cfg, rho_min, P))


def gd_dt(cfg: SolverConfig, P, psx, psy) -> float:
    """safety/(4 alpha) shrunk by the data stiffness max|grad I1|^2 and by the
    largest area factor det grad psi, which multiplies the whole gradient."""
    base = cfl_from_vmax(0.0, cfg.alpha, cfg.safety, cfg.dt_cap).dt_gd
    stiff = 4.0 * cfg.alpha + P.grad_I1_sq_max
    jac = max(float(np.max(det_jacobian_array(psx, psy, P.grid.dx))), 1.0)
    if stiff <= 0.0:
        return base
    return min(base, cfg.safety / (stiff * jac))


def _step_arrays(arrs, P, cfg, floor, dt=None):
    """One step with a single dt-halving retry. Raises CflFailure."""
    if dt is None:
        dt = _step_dt(arrs, P, cfg, floor)
    for attempt in range(2):
        if cfg.scheme == "gd":
            out, bad = _gd_step(arrs, P, cfg, dt)
        else:
            out, bad = _velocity_step(arrs, P, cfg, dt, floor)
        if not bad:
            return out, dt
        log.debug("step failed at t=%g with dt=%g (attempt %d)", arrs[0], dt, attempt)
        dt *= 0.5
    raise CflFailure(f"step failed at t={arrs[0]:g} even after halving dt")


def _to_arrays(s: SolverState):
    return (s.t, s.v.vx, s.v.vy, s.phi.ux, s.phi.uy, s.psi.ux, s.psi.uy, s.rho.data)


def _to_state(grid, arrs):
    t, vx, vy, phx, phy, psx, psy, rho = arrs
    return SolverState(float(t), VectorField(grid, vx, vy), MapField(grid, phx, phy),
                       MapField(grid, psx, psy), ScalarField(grid, rho))


def _scheme_step(s, P, cfg, scheme):
    _check_same_grid(s.v, P.I0)
    if cfg.scheme != scheme:
        cfg = replace(cfg, scheme=scheme)
    out, _ = _step_arrays(_to_arrays(s), P, cfg, cfg.floor_for(s.grid))
    return _to_state(s.grid, out)


# -- public step functions ----------------------------------------------------

def agd_step(s: SolverState, P, cfg: SolverConfig) -> SolverState:
    """One step of accelerated descent with friction (p+1)/t."""
    return _scheme_step(s, P, cfg, "agd")


def nondissip_step(s: SolverState, P, cfg: SolverConfig) -> SolverState:
    return _scheme_step(s, P, cfg, "agd_nodissip")


def epdiff_step(s: SolverState, P, cfg: SolverConfig) -> SolverState:
    """Constant-density step; the density raster is carried unchanged."""
    return _scheme_step(s, P, cfg, "epdiff")


def gd_step(s: SolverState, P, cfg: SolverConfig) -> SolverState:
    """Gradient descent: v = -grad U, maps advanced with dt = safety/(4 alpha)."""
    return _scheme_step(s, P, cfg, "gd")


def wave_dt(cfg: SolverConfig, rho0: float, P=None) -> float:
    """safety * min(1, sqrt(rho0 / k)) with stiffness k = 4 alpha / dx^2, plus
    max |grad I1|^2 when a potential is given (it bounds the data term's
    curvature, which matters once alpha is small)."""
    k = 4.0 * cfg.alpha
    if P is not None:
        k = k / P.grid.cell_area + P.grad_I1_sq_max
    if k <= 0:
        return cfg.safety
    return cfg.safety * min(1.0, math.sqrt(rho0 / k))


def _wave_arrays(prev, curr, t, P, cfg, rho0, dt):
    """Leapfrog for phi_tt + k(t) phi_t + s(t) g/rho0 = 0 with the sampled
    force g = r (grad I1)(phi) - alpha lap u and friction averaged across the
    two time levels."""
    p = cfg.p
    k = (p + 1) / t
    s = cfg.C * p * p * t ** (p - 2)
    half = 0.5 * k * dt
    I0, I1, gix, giy, alpha, dx = _images(P)
    gx, gy = _fused.sampled_gradient(curr[0], curr[1], I0, I1, gix, giy, alpha, dx)
    a = (1.0 - half) / (1.0 + half)
    b = dt * dt * s / (rho0 * (1.0 + half))
    return (curr[0] + (curr[0] - prev[0]) * a - b * gx,
            curr[1] + (curr[1] - prev[1]) * a - b * gy)


def wave_step(phi_prev: MapField, phi_curr: MapField, t: float, P,
              cfg: SolverConfig, rho0: Optional[float] = None) -> MapField:
    """Advance the damped wave form of accelerated descent by one leapfrog
    step; ``t`` (> 0) is the time at which friction is evaluated."""
    _check_same_grid(phi_prev, phi_curr, P.I0)
    if not t > 0:
        raise ValueError(f"wave_step needs t > 0, got {t}")
    grid = phi_curr.grid
    if rho0 is None:
        rho0 = 1.0 / grid.area
    dt = wave_dt(cfg, rho0, P)
    nx, ny = _wave_arrays((phi_prev.ux, phi_prev.uy), (phi_curr.ux, phi_curr.uy),
                          t, P, cfg, rho0, dt)
    if not (np.all(np.isfinite(nx)) and np.all(np.isfinite(ny))):
        raise CflFailure("wave step produced non-finite displacement")
    return MapField(grid, nx, ny)


# -- run loop -----------------------------------------------------------------

def _potential(P, ux, uy):
    I0, I1, _, _, alpha, dx = _images(P)
    data, smooth = _fused.hs_terms(ux, uy, I0, I1, alpha, dx)
    return data + smooth


def _increment(ax, ay, bx, by):
    return float(np.max(np.hypot(ax - bx, ay - by)))


def run(I0: ScalarField, I1: ScalarField, cfg: SolverConfig, potential=None) -> RunResult:
    """Register I1 onto I0 from the identity until the map stops moving.

    Convergence: the max-norm map increment stays below ``cfg.tol`` for five
    consecutive iterations.
    """
    from .potential import HSPotential

    grid = I0.grid
    P = potential if potential is not None else HSPotential(I0, I1, cfg.alpha)
    if cfg.scheme == "wave":
        return _run_wave(P, cfg)

    init = SolverState.initial(grid)
    arrs = _to_arrays(init)
    floor = cfg.floor_for(grid)
    ca = grid.cell_area
    trace = []
    streak = 0
    converged = False
    for k in range(cfg.max_iters):
        try:
            new, dt = _step_arrays(arrs, P, cfg, floor)
        except CflFailure as exc:
            raise SolverAbort(str(exc), _to_state(grid, arrs), trace) from exc
        U = _potential(P, new[3], new[4])
        if cfg.scheme == "gd":
            T = 0.0
        else:
            T = _kinetic(new[7], new[1], new[2], ca)
        inc = _increment(new[3], new[4], arrs[3], arrs[4])
        trace.append(TraceRecord(k + 1, float(new[0]), U, T, U + T, dt, inc))
        arrs = new
        streak = streak + 1 if inc < cfg.tol else 0
        if streak >= CONVERGE_STREAK:
            converged = True
            break
    state = _to_state(grid, arrs)
    return RunResult(state.phi, state.psi, trace, converged, state, len(trace))


def _run_wave(P, cfg: SolverConfig) -> RunResult:
    grid = P.grid
    rho0 = 1.0 / grid.area
    dt = wave_dt(cfg, rho0, P)
    prev = (np.zeros(grid.shape), np.zeros(grid.shape))
    curr = prev
    trace = []
    streak = 0
    converged = False
    for k in range(cfg.max_iters):
        t = cfg.t0 + (k + 1) * dt
        nxt = _wave_arrays(prev, curr, t, P, cfg, rho0, dt)
        if not (np.all(np.isfinite(nxt[0])) and np.all(np.isfinite(nxt[1]))):
            state = SolverState(t - dt, VectorField.zeros(grid), MapField(grid, *curr),
                                MapField.identity(grid), ScalarField.constant(grid, rho0))
            raise SolverAbort("wave step produced non-finite displacement", state, trace)
        U = _potential(P, nxt[0], nxt[1])
        vx = (nxt[0] - curr[0]) / dt
        vy = (nxt[1] - curr[1]) / dt
        T = 0.5 * rho0 * float(np.sum(vx * vx + vy * vy)) * grid.cell_area
        inc = _increment(nxt[0], nxt[1], curr[0], curr[1])
        trace.append(TraceRecord(k + 1, t, U, T, U + T, dt, inc))
        prev, curr = curr, nxt
        streak = streak + 1 if inc < cfg.tol else 0
        if streak >= CONVERGE_STREAK:
            converged = True
            break
    phi = MapField(grid, *curr)
    psi = invert_map(phi)
    state = SolverState(cfg.t0 + len(trace) * dt, VectorField(grid, vx, vy), phi, psi,
                        ScalarField.constant(grid, rho0))
    return RunResult(phi, psi, trace, converged, state, len(trace))


def invert_map(phi: MapField, iters: int = 50) -> MapField:
    """Fixed-point inverse: w(y) = -u(y + w(y)). Used only where no transported
    inverse exists (the wave scheme evolves phi alone)."""
    grid = phi.grid
    h, w = grid.shape
    ys, xs = np.mgrid[0:h, 0:w]
    wx = -phi.ux.copy()
    wy = -phi.uy.copy()
    for _ in range(iters):
        qx = xs + wx
        qy = ys + wy
        wx = -bilinear(phi.ux, qx, qy)
        wy = -bilinear(phi.uy, qx, qy)
    return MapField(grid, wx, wy)


def inverse_consistency(phi: MapField, psi: MapField) -> float:
    """Mean |psi(phi(x)) - x| over pixels, with periodic distance."""
    _check_same_grid(phi, psi)
    px, py = phi.positions()
    ex = phi.ux + bilinear(psi.ux, px, py)
    ey = phi.uy + bilinear(psi.uy, px, py)
    w, h = phi.grid.width, phi.grid.height
    ex = ex - w * np.round(ex / w)
    ey = ey - h * np.round(ey / h)
    return float(np.mean(np.hypot(ex, ey)))
