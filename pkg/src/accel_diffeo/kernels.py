"""Upwind discretization kernels for the velocity, inverse-map and density PDEs.

* ``burgers_flux_diff``: Engquist-Osher flux difference for d(v^2)/dx, with the
  flux f+(u) = max(u, 0)^2, f-(u) = min(u, 0)^2.
* ``upwind_advect_scalar``: first-order upwind (v . grad) q.
* ``continuity_step``: donor-cell flux-form update of a density on a staggered
  grid; every face flux leaves one cell and enters its neighbour, so mass is
  conserved to round-off.
* ``cfl_timestep``: step-size bounds for the explicit schemes.
"""
from dataclasses import dataclass

import numpy as np

from ._backend import njit, pick
from .fields import GridSpec, ScalarField, VectorField, _check_same_grid
from .stencils import ddx, ddy, shift

NEGATIVE_DENSITY_TOL = 1e-12


# -- Burgers flux difference --------------------------------------------------

def _burgers_np(a, axis, dx):
    # axis 1 -> x (numpy axis 1), axis 2 -> y (numpy axis 0)
    if axis == 1:
        ap, am = shift(a, 1, 0), shift(a, -1, 0)
    else:
        ap, am = shift(a, 0, 1), shift(a, 0, -1)
    pos = np.maximum(a, 0.0)
    neg = np.minimum(a, 0.0)
    return (pos * pos - neg * neg + np.minimum(ap, 0.0) ** 2 - np.maximum(am, 0.0) ** 2) / dx


def _burgers_loop(a, axis, dx):
    h, w = a.shape
    out = np.empty_like(a)
    for y in range(h):
        for x in range(w):
            c = a[y, x]
            if axis == 1:
                p = a[y, (x + 1) % w]
                m = a[y, (x - 1) % w]
            else:
                p = a[(y + 1) % h, x]
                m = a[(y - 1) % h, x]
            pos = max(c, 0.0)
            neg = min(c, 0.0)
            pn = min(p, 0.0)
            mp = max(m, 0.0)
            out[y, x] = (pos * pos - neg * neg + pn * pn - mp * mp) / dx
    return out


burgers_nb = njit(_burgers_loop)
burgers_np = _burgers_np


def burgers_array(a, axis, dx=1.0):
    return pick(burgers_nb, burgers_np)(a, axis, dx)


def burgers_flux_diff(vc: ScalarField, axis: int) -> ScalarField:
    """Entropy-satisfying approximation of d(vc^2)/d(axis); axis is 1 (x) or 2 (y).

    The caller applies the 1/2 of the self-advection term.
    """
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    return ScalarField(vc.grid, burgers_array(vc.data, axis, vc.grid.dx))


# -- upwind advection ---------------------------------------------------------

def _upwind_np(q, vx, vy, dx):
    back_x = q - shift(q, -1, 0)
    fwd_x = shift(q, 1, 0) - q
    back_y = q - shift(q, 0, -1)
    fwd_y = shift(q, 0, 1) - q
    tx = np.where(vx > 0, vx * back_x, np.where(vx < 0, vx * fwd_x, 0.0))
    ty = np.where(vy > 0, vy * back_y, np.where(vy < 0, vy * fwd_y, 0.0))
    return (tx + ty) / dx


def _upwind_loop(q, vx, vy, dx):
    h, w = q.shape
    out = np.empty_like(q)
    for y in range(h):
        yp = (y + 1) % h
        ym = (y - 1) % h
        for x in range(w):
            xp = (x + 1) % w
            xm = (x - 1) % w
            c = q[y, x]
            a = vx[y, x]
            b = vy[y, x]
            if a > 0:
                tx = a * (c - q[y, xm])
            elif a < 0:
                tx = a * (q[y, xp] - c)
            else:
                tx = 0.0
            if b > 0:
                ty = b * (c - q[ym, x])
            elif b < 0:
                ty = b * (q[yp, x] - c)
            else:
                ty = 0.0
            out[y, x] = (tx + ty) / dx
    return out


upwind_nb = njit(_upwind_loop)
upwind_np = _upwind_np


def upwind_array(q, vx, vy, dx=1.0):
    return pick(upwind_nb, upwind_np)(q, vx, vy, dx)


def upwind_advect_scalar(q: ScalarField, v: VectorField) -> ScalarField:
    """(v . grad) q with one-sided differences taken from the upwind side."""
    _check_same_grid(q, v)
    return ScalarField(q.grid, upwind_array(q.data, v.vx, v.vy, q.grid.dx))


# -- continuity on a staggered grid --------------------------------------------

@dataclass(frozen=True, eq=False)
class StaggeredVelocity:
    """Face velocities: ``vx_half[y, x]`` sits on the face between (x, y) and
    (x+1, y); ``vy_half[y, x]`` between (x, y) and (x, y+1)."""

    grid: GridSpec
    vx_half: np.ndarray
    vy_half: np.ndarray

    def __post_init__(self):
        for name in ("vx_half", "vy_half"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != self.grid.shape or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: expected finite raster of shape {self.grid.shape}")
            arr = arr.view()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_centered(cls, v: VectorField):
        return cls(v.grid, *face_average(v.vx, v.vy))


def face_average(vx, vy):
    return 0.5 * (vx + shift(vx, 1, 0)), 0.5 * (vy + shift(vy, 0, 1))


def _continuity_np(rho, fx, fy, dt, dx):
    # donor-cell face fluxes
    flux_x = np.where(fx > 0, fx * rho, np.where(fx < 0, fx * shift(rho, 1, 0), 0.0))
    flux_y = np.where(fy > 0, fy * rho, np.where(fy < 0, fy * shift(rho, 0, 1), 0.0))
    inflow = shift(flux_x, -1, 0) - flux_x + shift(flux_y, 0, -1) - flux_y
    return rho + (dt / dx) * inflow


def _continuity_loop(rho, fx, fy, dt, dx):
    h, w = rho.shape
    flux_x = np.empty_like(rho)
    flux_y = np.empty_like(rho)
    for y in range(h):
        yp = (y + 1) % h
        for x in range(w):
            xp = (x + 1) % w
            a = fx[y, x]
            if a > 0:
                flux_x[y, x] = a * rho[y, x]
            elif a < 0:
                flux_x[y, x] = a * rho[y, xp]
            else:
                flux_x[y, x] = 0.0
            b = fy[y, x]
            if b > 0:
                flux_y[y, x] = b * rho[y, x]
            elif b < 0:
                flux_y[y, x] = b * rho[yp, x]
            else:
                flux_y[y, x] = 0.0
    out = np.empty_like(rho)
    s = dt / dx
    for y in range(h):
        ym = (y - 1) % h
        for x in range(w):
            xm = (x - 1) % w
            inflow = flux_x[y, xm] - flux_x[y, x] + flux_y[ym, x] - flux_y[y, x]
            out[y, x] = rho[y, x] + s * inflow
    return out


continuity_nb = njit(_continuity_loop)
continuity_np = _continuity_np


def continuity_array(rho, fx, fy, dt, dx=1.0):
    return pick(continuity_nb, continuity_np)(rho, fx, fy, dt, dx)


@dataclass(frozen=True, eq=False)
class ContinuityResult:
    rho: ScalarField
    negative: bool

    @property
    def ok(self):
        return not self.negative


def continuity_step(rho: ScalarField, vs: StaggeredVelocity, dt: float) -> ContinuityResult:
    """One forward-Euler donor-cell update; ``negative`` flags a CFL breach."""
    if rho.grid != vs.grid:
        raise ValueError("grid mismatch between density and face velocity")
    out = continuity_array(rho.data, vs.vx_half, vs.vy_half, float(dt), rho.grid.dx)
    negative = bool(np.min(out) < -NEGATIVE_DENSITY_TOL)
    return ContinuityResult(ScalarField(rho.grid, out), negative)


# -- CFL ----------------------------------------------------------------------

VMAX_FLOOR = 1e-6


@dataclass(frozen=True)
class CflReport:
    dt_gd: float
    dt_agd: float
    vmax: float


def speed_bound(vx, vy, dx=1.0):
    """max over pixels of max(|v|, max-abs entry of Dv)."""
    speed = float(np.max(np.hypot(vx, vy)))
    jac = max(float(np.max(np.abs(ddx(vx, dx)))), float(np.max(np.abs(ddy(vx, dx)))),
              float(np.max(np.abs(ddx(vy, dx)))), float(np.max(np.abs(ddy(vy, dx)))))
    return max(speed, jac, VMAX_FLOOR)


def cfl_from_vmax(vmax, alpha, safety=0.9, dt_cap=0.25):
    if not 0 < safety <= 1:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    dt_gd = safety / (4.0 * alpha) if alpha > 0 else safety * dt_cap
    # Below unit speed the advective bound stops binding and the plain
    # diffusion bound 1/(4 alpha) takes over.
    vhat = max(vmax, 1.0)
    bound = 1.0 / vhat
    if alpha > 0:
        bound = min(bound, 1.0 / (4.0 * alpha * vhat))
    return CflReport(dt_gd=dt_gd, dt_agd=safety * bound, vmax=vmax)


def cfl_timestep(v: VectorField, alpha: float, safety: float = 0.9,
                 dt_cap: float = 0.25) -> CflReport:
    return cfl_from_vmax(speed_bound(v.vx, v.vy, v.grid.dx), alpha, safety, dt_cap)
