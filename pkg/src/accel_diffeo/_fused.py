"""Fused array-level solver steps, once as numpy compositions and once as
explicit loops for numba.

Both forms compute the same arithmetic in the same order per pixel, so they
agree to round-off. Array arguments are raw ``(height, width)`` rasters;
``gix, giy`` hold the central-difference gradient of I1.
"""
import math

import numpy as np

from ._backend import HAVE_NUMBA, njit, pick
from .kernels import _burgers_np, _continuity_np, _upwind_np, face_average
from .stencils import _bilinear_np, ddx, ddy, laplacian_array, node_positions


# -- numpy compositions -------------------------------------------------------

def _det_np(ux, uy, dx):
    return (1.0 + ddx(ux, dx)) * (1.0 + ddy(uy, dx)) - ddy(ux, dx) * ddx(uy, dx)


def warped_gradient_np(phx, phy, psx, psy, I0, I1, gix, giy, alpha, dx):
    """[(I1 - I0(psi)) grad I1 - alpha (lap u)(psi)] det D psi at every node."""
    xs, ys = node_positions(phx.shape)
    qx = xs + psx
    qy = ys + psy
    r = I1 - _bilinear_np(I0, qx, qy)
    lx = _bilinear_np(laplacian_array(phx, dx), qx, qy)
    ly = _bilinear_np(laplacian_array(phy, dx), qx, qy)
    det = _det_np(psx, psy, dx)
    return (r * gix - alpha * lx) * det, (r * giy - alpha * ly) * det


def splat_force_np(phx, phy, rho0, I0, I1, gix, giy, alpha, floor, dx):
    """Grid force from the particles: each particle x carries the sampled
    gradient g(x) and mass rho0(x), both spread onto the four grid nodes
    around phi(x) with bilinear weights; the node force is their ratio.

    Spreading is the transpose of sampling v at phi(x), so the work done by
    the grid force equals the work done on the particles."""
    lx, ly = sampled_gradient_np(phx, phy, I0, I1, gix, giy, alpha, dx)
    h, w = phx.shape
    xs, ys = node_positions(phx.shape)
    px = xs + phx
    py = ys + phy
    fx = np.floor(px)
    fy = np.floor(py)
    tx = px - fx
    ty = py - fy
    i0 = fx.astype(np.int64) % w
    j0 = fy.astype(np.int64) % h
    i1 = (i0 + 1) % w
    j1 = (j0 + 1) % h
    sx = np.zeros(h * w)
    sy = np.zeros(h * w)
    m = np.zeros(h * w)
    for jj, ii, wt in ((j0, i0, (1.0 - tx) * (1.0 - ty)), (j0, i1, tx * (1.0 - ty)),
                       (j1, i0, (1.0 - tx) * ty), (j1, i1, tx * ty)):
        k = (jj * w + ii).ravel()
        sx += np.bincount(k, (wt * lx).ravel(), h * w)
        sy += np.bincount(k, (wt * ly).ravel(), h * w)
        m += np.bincount(k, (wt * rho0).ravel(), h * w)
    # nodes no particle reaches carry no force; sx, sy vanish there as well
    inv = 1.0 / np.maximum(m, floor)
    return (sx * inv).reshape(h, w), (sy * inv).reshape(h, w)


def _advance_maps_np(vx, vy, phx, phy, psx, psy, dt, dx):
    xs, ys = node_positions(vx.shape)
    nphx = phx + dt * _bilinear_np(vx, xs + phx, ys + phy)
    nphy = phy + dt * _bilinear_np(vy, xs + phx, ys + phy)
    # psi = id + w, so (D psi) v = v + (v . grad) w
    tx = psx - dt * (vx + _upwind_np(psx, vx, vy, dx))
    ty = psy - dt * (vy + _upwind_np(psy, vx, vy, dx))
    # one fixed-point sweep w <- -u(x + w) pulls psi back onto phi^-1
    npsx = -_bilinear_np(nphx, xs + tx, ys + ty)
    npsy = -_bilinear_np(nphy, xs + tx, ys + ty)
    return nphx, nphy, npsx, npsy


def velocity_step_np(vx, vy, phx, phy, psx, psy, rho, rho0, I0, I1, gix, giy, alpha,
                     friction, force, floor, eps_visc, epdiff, dt, dx):
    fx, fy = splat_force_np(phx, phy, rho0, I0, I1, gix, giy, alpha, floor, dx)
    zero = np.zeros_like(vx)
    ax = 0.5 * _burgers_np(vx, 1, dx) + _upwind_np(vx, zero, vy, dx)
    ay = 0.5 * _burgers_np(vy, 2, dx) + _upwind_np(vy, vx, zero, dx)
    if epdiff:
        dvx_dx, dvx_dy = ddx(vx, dx), ddy(vx, dx)
        dvy_dx, dvy_dy = ddx(vy, dx), ddy(vy, dx)
        div = dvx_dx + dvy_dy
        ax = ax + (dvx_dx * vx + dvy_dx * vy + vx * div)
        ay = ay + (dvx_dy * vx + dvy_dy * vy + vy * div)
    rx = -ax - friction * vx - force * fx
    ry = -ay - friction * vy - force * fy
    if eps_visc > 0:
        rx = rx + eps_visc * laplacian_array(vx, dx)
        ry = ry + eps_visc * laplacian_array(vy, dx)
    nvx = vx + dt * rx
    nvy = vy + dt * ry
    # maps and density move with the updated velocity (semi-implicit Euler)
    nphx, nphy, npsx, npsy = _advance_maps_np(nvx, nvy, phx, phy, psx, psy, dt, dx)
    if epdiff:
        nrho = rho.copy()
    else:
        fx, fy = face_average(nvx, nvy)
        nrho = _continuity_np(rho, fx, fy, dt, dx)
    return nvx, nvy, nphx, nphy, npsx, npsy, nrho


def gd_step_np(phx, phy, psx, psy, I0, I1, gix, giy, alpha, dt, dx):
    """v = -warped gradient; phi moves with v(phi(x)) evaluated factor by
    factor along the particle path (I0(psi(phi(x))) = I0(x), and so on)."""
    gx, gy = warped_gradient_np(phx, phy, psx, psy, I0, I1, gix, giy, alpha, dx)
    vx, vy = -gx, -gy
    xs, ys = node_positions(phx.shape)
    px = xs + phx
    py = ys + phy
    r = _bilinear_np(I1, px, py) - I0
    det = _bilinear_np(_det_np(psx, psy, dx), px, py)
    wx = -(r * _bilinear_np(gix, px, py) - alpha * laplacian_array(phx, dx)) * det
    wy = -(r * _bilinear_np(giy, px, py) - alpha * laplacian_array(phy, dx)) * det
    nphx = phx + dt * wx
    nphy = phy + dt * wy
    tx = psx - dt * (vx + _upwind_np(psx, vx, vy, dx))
    ty = psy - dt * (vy + _upwind_np(psy, vx, vy, dx))
    npsx = -_bilinear_np(nphx, xs + tx, ys + ty)
    npsy = -_bilinear_np(nphy, xs + tx, ys + ty)
    return vx, vy, nphx, nphy, npsx, npsy


def sampled_gradient_np(ux, uy, I0, I1, gix, giy, alpha, dx):
    """r (grad I1)(phi) - alpha lap u with r = I1(phi) - I0: the force of the
    damped wave form."""
    xs, ys = node_positions(ux.shape)
    px = xs + ux
    py = ys + uy
    r = _bilinear_np(I1, px, py) - I0
    return (r * _bilinear_np(gix, px, py) - alpha * laplacian_array(ux, dx),
            r * _bilinear_np(giy, px, py) - alpha * laplacian_array(uy, dx))


def hs_terms_np(ux, uy, I0, I1, alpha, dx):
    """(data term, smoothness term) of the HS energy."""
    xs, ys = node_positions(ux.shape)
    r = _bilinear_np(I1, xs + ux, ys + uy) - I0
    ca = dx * dx
    s = 0.0
    for c in (ux, uy):
        gx = (np.roll(c, -1, axis=1) - c) / dx
        gy = (np.roll(c, -1, axis=0) - c) / dx
        s += float(np.sum(gx * gx) + np.sum(gy * gy))
    return 0.5 * float(np.sum(r * r)) * ca, 0.5 * alpha * s * ca


def speed_bound_np(vx, vy, dx):
    speed = float(np.max(np.hypot(vx, vy)))
    jac = max(float(np.max(np.abs(ddx(vx, dx)))), float(np.max(np.abs(ddy(vx, dx)))),
              float(np.max(np.abs(ddx(vy, dx)))), float(np.max(np.abs(ddy(vy, dx)))))
    return max(speed, jac)


# -- loop forms -----------------------------------------------------------------

def _cell(px, py, h, w):
    """Wrapped corner indices and fractional offsets of a sample point."""
    fx = math.floor(px)
    fy = math.floor(py)
    tx = px - fx
    ty = py - fy
    i0 = int(fx) % w
    j0 = int(fy) % h
    i1 = i0 + 1
    if i1 == w:
        i1 = 0
    j1 = j0 + 1
    if j1 == h:
        j1 = 0
    return i0, i1, j0, j1, tx, ty


def _interp(a, c):
    i0, i1, j0, j1, tx, ty = c
    return (((1.0 - tx) * (1.0 - ty)) * a[j0, i0] + (tx * (1.0 - ty)) * a[j0, i1]
            + ((1.0 - tx) * ty) * a[j1, i0] + (tx * ty) * a[j1, i1])


def _bil(a, px, py):
    h, w = a.shape
    return _interp(a, _cell(px, py, h, w))


def _lap(a, dx):
    h, w = a.shape
    out = np.empty_like(a)
    s = 1.0 / (dx * dx)
    for y in range(h):
        yp = (y + 1) % h
        ym = (y - 1) % h
        for x in range(w):
            xp = (x + 1) % w
            xm = (x - 1) % w
            out[y, x] = (a[y, xp] + a[y, xm] + a[yp, x] + a[ym, x] - 4.0 * a[y, x]) * s
    return out


def _det(ux, uy, dx):
    h, w = ux.shape
    out = np.empty_like(ux)
    s = 0.5 / dx
    for y in range(h):
        yp = (y + 1) % h
        ym = (y - 1) % h
        for x in range(w):
            xp = (x + 1) % w
            xm = (x - 1) % w
            a = 1.0 + (ux[y, xp] - ux[y, xm]) * s
            d = 1.0 + (uy[yp, x] - uy[ym, x]) * s
            b = (ux[yp, x] - ux[ym, x]) * s
            c = (uy[y, xp] - uy[y, xm]) * s
            out[y, x] = a * d - b * c
    return out


def _upwind_at(q, vx, vy, y, x, dx):
    h, w = q.shape
    c = q[y, x]
    if vx > 0:
        tx = vx * (c - q[y, (x - 1) % w])
    elif vx < 0:
        tx = vx * (q[y, (x + 1) % w] - c)
    else:
        tx = 0.0
    if vy > 0:
        ty = vy * (c - q[(y - 1) % h, x])
    elif vy < 0:
        ty = vy * (q[(y + 1) % h, x] - c)
    else:
        ty = 0.0
    return (tx + ty) / dx


def _burgers_at(c, p, m, dx):
    pos = max(c, 0.0)
    neg = min(c, 0.0)
    pn = min(p, 0.0)
    mp = max(m, 0.0)
    return (pos * pos - neg * neg + pn * pn - mp * mp) / dx


def _warped_gradient(phx, phy, psx, psy, I0, I1, gix, giy, alpha, dx):
    h, w = phx.shape
    lapx = _lap(phx, dx)
    lapy = _lap(phy, dx)
    det = _det(psx, psy, dx)
    gx = np.empty_like(phx)
    gy = np.empty_like(phx)
    for y in range(h):
        for x in range(w):
            c = _cell(x + psx[y, x], y + psy[y, x], h, w)
            r = I1[y, x] - _interp(I0, c)
            gx[y, x] = (r * gix[y, x] - alpha * _interp(lapx, c)) * det[y, x]
            gy[y, x] = (r * giy[y, x] - alpha * _interp(lapy, c)) * det[y, x]
    return gx, gy


def _advance_maps(vx, vy, phx, phy, psx, psy, dt, dx):
    h, w = vx.shape
    nphx = np.empty_like(phx)
    nphy = np.empty_like(phy)
    for y in range(h):
        for x in range(w):
            c = _cell(x + phx[y, x], y + phy[y, x], h, w)
            nphx[y, x] = phx[y, x] + dt * _interp(vx, c)
            nphy[y, x] = phy[y, x] + dt * _interp(vy, c)
    npsx = np.empty_like(psx)
    npsy = np.empty_like(psy)
    for y in range(h):
        for x in range(w):
            a = vx[y, x]
            b = vy[y, x]
            tx = psx[y, x] - dt * (a + _upwind_at(psx, a, b, y, x, dx))
            ty = psy[y, x] - dt * (b + _upwind_at(psy, a, b, y, x, dx))
            c = _cell(x + tx, y + ty, h, w)
            npsx[y, x] = -_interp(nphx, c)
            npsy[y, x] = -_interp(nphy, c)
    return nphx, nphy, npsx, npsy


def _continuity(rho, vx, vy, dt, dx):
    h, w = rho.shape
    flux_x = np.empty_like(rho)
    flux_y = np.empty_like(rho)
    for y in range(h):
        yp = (y + 1) % h
        for x in range(w):
            xp = (x + 1) % w
            a = 0.5 * (vx[y, x] + vx[y, xp])
            if a > 0:
                flux_x[y, x] = a * rho[y, x]
            elif a < 0:
                flux_x[y, x] = a * rho[y, xp]
            else:
                flux_x[y, x] = 0.0
            b = 0.5 * (vy[y, x] + vy[yp, x])
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


def _splat_force(phx, phy, rho0, I0, I1, gix, giy, alpha, floor, dx):
    h, w = phx.shape
    lx, ly = _sampled_gradient(phx, phy, I0, I1, gix, giy, alpha, dx)
    sx = np.zeros_like(phx)
    sy = np.zeros_like(phx)
    m = np.zeros_like(phx)
    for y in range(h):
        for x in range(w):
            i0, i1, j0, j1, tx, ty = _cell(x + phx[y, x], y + phy[y, x], h, w)
            gx = lx[y, x]
            gy = ly[y, x]
            r = rho0[y, x]
            wt = (1.0 - tx) * (1.0 - ty)
            sx[j0, i0] += wt * gx
            sy[j0, i0] += wt * gy
            m[j0, i0] += wt * r
            wt = tx * (1.0 - ty)
            sx[j0, i1] += wt * gx
            sy[j0, i1] += wt * gy
            m[j0, i1] += wt * r
            wt = (1.0 - tx) * ty
            sx[j1, i0] += wt * gx
            sy[j1, i0] += wt * gy
            m[j1, i0] += wt * r
            wt = tx * ty
            sx[j1, i1] += wt * gx
            sy[j1, i1] += wt * gy
            m[j1, i1] += wt * r
    for y in range(h):
        for x in range(w):
            inv = 1.0 / max(m[y, x], floor)
            sx[y, x] = sx[y, x] * inv
            sy[y, x] = sy[y, x] * inv
    return sx, sy


def _velocity_step(vx, vy, phx, phy, psx, psy, rho, rho0, I0, I1, gix, giy, alpha,
                   friction, force, floor, eps_visc, epdiff, dt, dx):
    h, w = vx.shape
    fx, fy = _splat_force(phx, phy, rho0, I0, I1, gix, giy, alpha, floor, dx)
    nvx = np.empty_like(vx)
    nvy = np.empty_like(vy)
    s = 0.5 / dx
    e = 1.0 / (dx * dx)
    for y in range(h):
        yp = (y + 1) % h
        ym = (y - 1) % h
        for x in range(w):
            xp = (x + 1) % w
            xm = (x - 1) % w
            a = vx[y, x]
            b = vy[y, x]
            ax = 0.5 * _burgers_at(a, vx[y, xp], vx[y, xm], dx) + _upwind_at(vx, 0.0, b, y, x, dx)
            ay = 0.5 * _burgers_at(b, vy[yp, x], vy[ym, x], dx) + _upwind_at(vy, a, 0.0, y, x, dx)
            if epdiff:
                dvx_dx = (vx[y, xp] - vx[y, xm]) * s
                dvx_dy = (vx[yp, x] - vx[ym, x]) * s
                dvy_dx = (vy[y, xp] - vy[y, xm]) * s
                dvy_dy = (vy[yp, x] - vy[ym, x]) * s
                div = dvx_dx + dvy_dy
                ax = ax + (dvx_dx * a + dvy_dx * b + a * div)
                ay = ay + (dvx_dy * a + dvy_dy * b + b * div)
            rx = -ax - friction * a - force * fx[y, x]
            ry = -ay - friction * b - force * fy[y, x]
            if eps_visc > 0:
                rx = rx + eps_visc * ((vx[y, xp] + vx[y, xm] + vx[yp, x] + vx[ym, x] - 4.0 * a) * e)
                ry = ry + eps_visc * ((vy[y, xp] + vy[y, xm] + vy[yp, x] + vy[ym, x] - 4.0 * b) * e)
            nvx[y, x] = a + dt * rx
            nvy[y, x] = b + dt * ry
    nphx, nphy, npsx, npsy = _advance_maps(nvx, nvy, phx, phy, psx, psy, dt, dx)
    if epdiff:
        nrho = rho.copy()
    else:
        nrho = _continuity(rho, nvx, nvy, dt, dx)
    return nvx, nvy, nphx, nphy, npsx, npsy, nrho


def _gd_step(phx, phy, psx, psy, I0, I1, gix, giy, alpha, dt, dx):
    h, w = phx.shape
    gx, gy = _warped_gradient(phx, phy, psx, psy, I0, I1, gix, giy, alpha, dx)
    vx = -gx
    vy = -gy
    lapx = _lap(phx, dx)
    lapy = _lap(phy, dx)
    det = _det(psx, psy, dx)
    nphx = np.empty_like(phx)
    nphy = np.empty_like(phy)
    for y in range(h):
        for x in range(w):
            c = _cell(x + phx[y, x], y + phy[y, x], h, w)
            r = _interp(I1, c) - I0[y, x]
            d = _interp(det, c)
            nphx[y, x] = phx[y, x] + dt * (-(r * _interp(gix, c) - alpha * lapx[y, x]) * d)
            nphy[y, x] = phy[y, x] + dt * (-(r * _interp(giy, c) - alpha * lapy[y, x]) * d)
    npsx = np.empty_like(psx)
    npsy = np.empty_like(psy)
    for y in range(h):
        for x in range(w):
            a = vx[y, x]
            b = vy[y, x]
            tx = psx[y, x] - dt * (a + _upwind_at(psx, a, b, y, x, dx))
            ty = psy[y, x] - dt * (b + _upwind_at(psy, a, b, y, x, dx))
            c = _cell(x + tx, y + ty, h, w)
            npsx[y, x] = -_interp(nphx, c)
            npsy[y, x] = -_interp(nphy, c)
    return vx, vy, nphx, nphy, npsx, npsy


def _sampled_gradient(ux, uy, I0, I1, gix, giy, alpha, dx):
    h, w = ux.shape
    lapx = _lap(ux, dx)
    lapy = _lap(uy, dx)
    gx = np.empty_like(ux)
    gy = np.empty_like(uy)
    for y in range(h):
        for x in range(w):
            c = _cell(x + ux[y, x], y + uy[y, x], h, w)
            r = _interp(I1, c) - I0[y, x]
            gx[y, x] = r * _interp(gix, c) - alpha * lapx[y, x]
            gy[y, x] = r * _interp(giy, c) - alpha * lapy[y, x]
    return gx, gy


def _hs_terms(ux, uy, I0, I1, alpha, dx):
    h, w = ux.shape
    data = 0.0
    smooth = 0.0
    for y in range(h):
        yp = (y + 1) % h
        for x in range(w):
            xp = (x + 1) % w
            r = _bil(I1, x + ux[y, x], y + uy[y, x]) - I0[y, x]
            data += r * r
            a = (ux[y, xp] - ux[y, x]) / dx
            b = (ux[yp, x] - ux[y, x]) / dx
            c = (uy[y, xp] - uy[y, x]) / dx
            d = (uy[yp, x] - uy[y, x]) / dx
            smooth += a * a + b * b + c * c + d * d
    ca = dx * dx
    return 0.5 * data * ca, 0.5 * alpha * smooth * ca


def _speed_bound(vx, vy, dx):
    h, w = vx.shape
    m = 0.0
    s = 0.5 / dx
    for y in range(h):
        yp = (y + 1) % h
        ym = (y - 1) % h
        for x in range(w):
            xp = (x + 1) % w
            xm = (x - 1) % w
            m = max(m, math.hypot(vx[y, x], vy[y, x]))
            m = max(m, abs((vx[y, xp] - vx[y, xm]) * s), abs((vx[yp, x] - vx[ym, x]) * s))
            m = max(m, abs((vy[y, xp] - vy[y, xm]) * s), abs((vy[yp, x] - vy[ym, x]) * s))
    return m


_INLINE = ("_cell", "_interp", "_bil", "_upwind_at", "_burgers_at")
_HELPERS = ("_cell", "_interp", "_bil", "_lap", "_det", "_upwind_at", "_burgers_at",
            "_warped_gradient", "_sampled_gradient", "_splat_force", "_advance_maps",
            "_continuity")
if HAVE_NUMBA:
    # compile helpers first so the loop kernels see jitted callees
    for _name in _HELPERS:
        globals()[_name] = njit(globals()[_name], inline=_name in _INLINE)

velocity_step_nb = njit(_velocity_step)
gd_step_nb = njit(_gd_step)
sampled_gradient_nb = _sampled_gradient if HAVE_NUMBA else None
hs_terms_nb = njit(_hs_terms)
speed_bound_nb = njit(_speed_bound)
warped_gradient_nb = _warped_gradient if HAVE_NUMBA else None


def velocity_step(*args):
    return pick(velocity_step_nb, velocity_step_np)(*args)


def gd_step(*args):
    return pick(gd_step_nb, gd_step_np)(*args)


def sampled_gradient(*args):
    return pick(sampled_gradient_nb, sampled_gradient_np)(*args)


def hs_terms(*args):
    return pick(hs_terms_nb, hs_terms_np)(*args)


def speed_bound(vx, vy, dx):
    return pick(speed_bound_nb, speed_bound_np)(vx, vy, dx)
