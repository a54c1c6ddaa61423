"""Finite-difference stencils, bilinear sampling and warping on the torus.

The array-level helpers (``ddx``, ``laplacian_array``, ``bilinear`` ...) take
raw ``(height, width)`` rasters and are what the solver loops call; the
field-level operations wrap them for the public API.
"""
import numpy as np

from ._backend import njit, pick
from .fields import JacobianField, MapField, ScalarField, VectorField, _check_same_grid


# -- array-level stencils -----------------------------------------------------

def shift(a, sx, sy):
    """Periodic lookup: out[y, x] = a[y + sy, x + sx]."""
    return np.roll(a, (-sy, -sx), axis=(0, 1))


def ddx(a, dx=1.0):
    return 0.5 * (shift(a, 1, 0) - shift(a, -1, 0)) / dx


def ddy(a, dx=1.0):
    return 0.5 * (shift(a, 0, 1) - shift(a, 0, -1)) / dx


def ddx_forward(a, dx=1.0):
    return (shift(a, 1, 0) - a) / dx


def ddy_forward(a, dx=1.0):
    return (shift(a, 0, 1) - a) / dx


def ddx_backward(a, dx=1.0):
    return (a - shift(a, -1, 0)) / dx


def ddy_backward(a, dx=1.0):
    return (a - shift(a, 0, -1)) / dx


def laplacian_array(a, dx=1.0):
    return (shift(a, 1, 0) + shift(a, -1, 0) + shift(a, 0, 1) + shift(a, 0, -1)
            - 4.0 * a) / (dx * dx)


# -- bilinear sampling kernels ------------------------------------------------

def _bilinear_np(a, px, py):
    h, w = a.shape
    fx = np.floor(px)
    fy = np.floor(py)
    tx = px - fx
    ty = py - fy
    i0 = fx.astype(np.int64) % w
    j0 = fy.astype(np.int64) % h
    i1 = (i0 + 1) % w
    j1 = (j0 + 1) % h
    return (((1.0 - tx) * (1.0 - ty)) * a[j0, i0] + (tx * (1.0 - ty)) * a[j0, i1]
            + ((1.0 - tx) * ty) * a[j1, i0] + (tx * ty) * a[j1, i1])


def _bilinear_loop(a, px, py):
    h, w = a.shape
    out = np.empty(px.shape)
    ny, nx = px.shape
    for y in range(ny):
        for x in range(nx):
            fx = np.floor(px[y, x])
            fy = np.floor(py[y, x])
            tx = px[y, x] - fx
            ty = py[y, x] - fy
            i0 = int(fx) % w
            j0 = int(fy) % h
            i1 = (i0 + 1) % w
            j1 = (j0 + 1) % h
            out[y, x] = (((1.0 - tx) * (1.0 - ty)) * a[j0, i0] + (tx * (1.0 - ty)) * a[j0, i1]
                         + ((1.0 - tx) * ty) * a[j1, i0] + (tx * ty) * a[j1, i1])
    return out


def _bilinear_grad_np(a, px, py):
    # Where a sample sits exactly on a cell edge the interpolant has a kink;
    # the average of the one-sided slopes is used there, which reduces to the
    # central difference at grid nodes.
    h, w = a.shape
    fx = np.floor(px)
    fy = np.floor(py)
    tx = px - fx
    ty = py - fy
    i0 = fx.astype(np.int64) % w
    j0 = fy.astype(np.int64) % h
    i1 = (i0 + 1) % w
    j1 = (j0 + 1) % h
    im = (i0 - 1) % w
    jm = (j0 - 1) % h
    onx = tx == 0.0
    ony = ty == 0.0
    sx0 = np.where(onx, 0.5 * (a[j0, i1] - a[j0, im]), a[j0, i1] - a[j0, i0])
    sx1 = np.where(onx, 0.5 * (a[j1, i1] - a[j1, im]), a[j1, i1] - a[j1, i0])
    sy0 = np.where(ony, 0.5 * (a[j1, i0] - a[jm, i0]), a[j1, i0] - a[j0, i0])
    sy1 = np.where(ony, 0.5 * (a[j1, i1] - a[jm, i1]), a[j1, i1] - a[j0, i1])
    gx = (1.0 - ty) * sx0 + ty * sx1
    gy = (1.0 - tx) * sy0 + tx * sy1
    return gx, gy


def _bilinear_grad_loop(a, px, py):
    h, w = a.shape
    ny, nx = px.shape
    gx = np.empty(px.shape)
    gy = np.empty(px.shape)
    for y in range(ny):
        for x in range(nx):
            fx = np.floor(px[y, x])
            fy = np.floor(py[y, x])
            tx = px[y, x] - fx
            ty = py[y, x] - fy
            i0 = int(fx) % w
            j0 = int(fy) % h
            i1 = (i0 + 1) % w
            j1 = (j0 + 1) % h
            im = (i0 - 1) % w
            jm = (j0 - 1) % h
            if tx == 0.0:
                sx0 = 0.5 * (a[j0, i1] - a[j0, im])
                sx1 = 0.5 * (a[j1, i1] - a[j1, im])
            else:
                sx0 = a[j0, i1] - a[j0, i0]
                sx1 = a[j1, i1] - a[j1, i0]
            if ty == 0.0:
                sy0 = 0.5 * (a[j1, i0] - a[jm, i0])
                sy1 = 0.5 * (a[j1, i1] - a[jm, i1])
            else:
                sy0 = a[j1, i0] - a[j0, i0]
                sy1 = a[j1, i1] - a[j0, i1]
            gx[y, x] = (1.0 - ty) * sx0 + ty * sx1
            gy[y, x] = (1.0 - tx) * sy0 + tx * sy1
    return gx, gy


bilinear_nb = njit(_bilinear_loop)
bilinear_grad_nb = njit(_bilinear_grad_loop)
bilinear_np = _bilinear_np
bilinear_grad_np = _bilinear_grad_np


def bilinear(a, px, py):
    """Sample raster ``a`` at positions ``(px, py)`` (pixel units), periodic."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    if px.ndim != 2:
        shape = px.shape
        px2 = px.reshape(1, -1)
        py2 = py.reshape(1, -1)
        return pick(bilinear_nb, bilinear_np)(a, px2, py2).reshape(shape)
    return pick(bilinear_nb, bilinear_np)(a, px, py)


def bilinear_grad(a, px, py, dx=1.0):
    """Spatial derivative of the bilinear interpolant of ``a`` at ``(px, py)``."""
    px = np.asarray(px, dtype=np.float64)
    py = np.asarray(py, dtype=np.float64)
    gx, gy = pick(bilinear_grad_nb, bilinear_grad_np)(a, px, py)
    if dx != 1.0:
        gx, gy = gx / dx, gy / dx
    return gx, gy


def node_positions(shape):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w]
    return xs.astype(np.float64), ys.astype(np.float64)


# -- field-level operations ---------------------------------------------------

def grad_central(f: ScalarField) -> VectorField:
    dx = f.grid.dx
    return VectorField(f.grid, ddx(f.data, dx), ddy(f.data, dx))


def jacobian_central(v: VectorField) -> JacobianField:
    dx = v.grid.dx
    return JacobianField(v.grid, ddx(v.vx, dx), ddy(v.vx, dx), ddx(v.vy, dx), ddy(v.vy, dx))


def divergence_central(v: VectorField) -> ScalarField:
    dx = v.grid.dx
    return ScalarField(v.grid, ddx(v.vx, dx) + ddy(v.vy, dx))


def laplacian(f):
    """5-point periodic Laplacian of a scalar field, or componentwise of a
    vector/map field (for a map this acts on the displacement)."""
    dx = f.grid.dx
    if isinstance(f, ScalarField):
        return ScalarField(f.grid, laplacian_array(f.data, dx))
    if isinstance(f, VectorField):
        return VectorField(f.grid, laplacian_array(f.vx, dx), laplacian_array(f.vy, dx))
    if isinstance(f, MapField):
        return VectorField(f.grid, laplacian_array(f.ux, dx), laplacian_array(f.uy, dx))
    raise TypeError(f"laplacian: unsupported field type {type(f).__name__}")


def sample_bilinear(f: ScalarField, px: float, py: float) -> float:
    out = bilinear_np(f.data, np.array([[float(px)]]), np.array([[float(py)]]))
    return float(out[0, 0])


def warp(image: ScalarField, m: MapField) -> ScalarField:
    """Pull ``image`` back through the map: out(x) = image(x + u(x))."""
    _check_same_grid(image, m)
    px, py = m.positions()
    return ScalarField(image.grid, bilinear(image.data, px, py))


def det_jacobian_array(ux, uy, dx=1.0):
    a = 1.0 + ddx(ux, dx)
    d = 1.0 + ddy(uy, dx)
    return a * d - ddy(ux, dx) * ddx(uy, dx)


def det_jacobian(m: MapField) -> ScalarField:
    return ScalarField(m.grid, det_jacobian_array(m.ux, m.uy, m.grid.dx))
