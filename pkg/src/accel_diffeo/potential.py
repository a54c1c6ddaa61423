"""Potential energies on maps and their functional gradients.

Any object with ``value(phi)``, ``grad_unwarped(phi)`` and
``grad_warped(phi, psi)`` can drive the solvers. :class:`HSPotential` is the
Horn & Schunck energy

    U(phi) = 1/2 sum (I1(phi(x)) - I0(x))^2 + alpha/2 sum |grad(phi(x) - x)|^2

discretized so that ``grad_unwarped`` is the exact derivative of ``value``:
the smoothness term uses forward differences (whose adjoint pairing gives the
5-point Laplacian) and the data term differentiates the bilinear interpolant.
"""
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .fields import MapField, ScalarField, VectorField, _check_same_grid
from .stencils import (bilinear, bilinear_grad, ddx, ddx_forward, ddy, ddy_forward,
                       det_jacobian_array, laplacian_array)


class Potential(Protocol):
    def value(self, phi: MapField) -> float: ...

    def grad_unwarped(self, phi: MapField) -> VectorField: ...

    def grad_warped(self, phi: MapField, psi: MapField) -> VectorField: ...


@dataclass(frozen=True, eq=False)
class HSPotential:
    I0: ScalarField
    I1: ScalarField
    alpha: float
    _grad_I1: tuple = field(init=False, repr=False)

    def __post_init__(self):
        _check_same_grid(self.I0, self.I1)
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        dx = self.I1.grid.dx
        # gradient of I1 on the grid, computed once and reused every step
        object.__setattr__(self, "_grad_I1", (ddx(self.I1.data, dx), ddy(self.I1.data, dx)))

    @property
    def grid(self):
        return self.I0.grid

    @property
    def grad_I1(self):
        """Central-difference gradient of I1 as two rasters."""
        return self._grad_I1

    @property
    def grad_I1_sq_max(self):
        gx, gy = self._grad_I1
        return float(np.max(gx * gx + gy * gy))

    # -- energies

    def residual(self, phi: MapField) -> np.ndarray:
        """I1(phi(x)) - I0(x) as a raster."""
        px, py = phi.positions()
        return bilinear(self.I1.data, px, py) - self.I0.data

    def data_term(self, phi: MapField) -> float:
        r = self.residual(phi)
        return 0.5 * float(np.sum(r * r)) * self.grid.cell_area

    def smoothness_term(self, phi: MapField) -> float:
        dx = self.grid.dx
        s = 0.0
        for comp in (phi.ux, phi.uy):
            gx = ddx_forward(comp, dx)
            gy = ddy_forward(comp, dx)
            s += float(np.sum(gx * gx) + np.sum(gy * gy))
        return 0.5 * self.alpha * s * self.grid.cell_area

    def value(self, phi: MapField) -> float:
        _check_same_grid(self.I0, phi)
        return self.data_term(phi) + self.smoothness_term(phi)

    # -- gradients

    def grad_unwarped_arrays(self, ux, uy):
        dx = self.grid.dx
        h, w = ux.shape
        ys, xs = np.mgrid[0:h, 0:w]
        px = xs + ux
        py = ys + uy
        r = bilinear(self.I1.data, px, py) - self.I0.data
        gx, gy = bilinear_grad(self.I1.data, px, py, dx)
        a = self.alpha
        return (r * gx - a * laplacian_array(ux, dx),
                r * gy - a * laplacian_array(uy, dx))

    def grad_unwarped(self, phi: MapField) -> VectorField:
        _check_same_grid(self.I0, phi)
        return VectorField(self.grid, *self.grad_unwarped_arrays(phi.ux, phi.uy))

    def grad_sampled(self, phi: MapField) -> VectorField:
        """r (grad I1)(phi) - alpha lap u: the grid gradient of I1 sampled at
        phi instead of the derivative of its interpolant. This is the smoothed
        force the solvers use; on piecewise-constant images it reaches one
        pixel further than the exact derivative."""
        _check_same_grid(self.I0, phi)
        px, py = phi.positions()
        r = bilinear(self.I1.data, px, py) - self.I0.data
        gx, gy = self._grad_I1
        dx = self.grid.dx
        return VectorField(self.grid,
                           r * bilinear(gx, px, py) - self.alpha * laplacian_array(phi.ux, dx),
                           r * bilinear(gy, px, py) - self.alpha * laplacian_array(phi.uy, dx))

    def grad_warped_arrays(self, phi_ux, phi_uy, psi_ux, psi_uy):
        dx = self.grid.dx
        h, w = psi_ux.shape
        ys, xs = np.mgrid[0:h, 0:w]
        qx = xs + psi_ux
        qy = ys + psi_uy
        r = self.I1.data - bilinear(self.I0.data, qx, qy)
        lap_x = bilinear(laplacian_array(phi_ux, dx), qx, qy)
        lap_y = bilinear(laplacian_array(phi_uy, dx), qx, qy)
        det = det_jacobian_array(psi_ux, psi_uy, dx)
        gx, gy = self._grad_I1
        a = self.alpha
        return ((r * gx - a * lap_x) * det,
                (r * gy - a * lap_y) * det)

    def grad_warped(self, phi: MapField, psi: MapField) -> VectorField:
        _check_same_grid(self.I0, phi, psi)
        return VectorField(self.grid, *self.grad_warped_arrays(phi.ux, phi.uy, psi.ux, psi.uy))


def hs_value(P: HSPotential, phi: MapField) -> float:
    return P.value(phi)


def hs_grad_unwarped(P: HSPotential, phi: MapField) -> VectorField:
    return P.grad_unwarped(phi)


def hs_grad_warped(P: HSPotential, phi: MapField, psi: MapField) -> VectorField:
    return P.grad_warped(phi, psi)


def perturb(phi: MapField, dphi: VectorField, eps: float) -> MapField:
    return MapField(phi.grid, phi.ux + eps * dphi.vx, phi.uy + eps * dphi.vy)


def grad_check(P: Potential, phi: MapField, dphi: VectorField, eps: float = 1e-5) -> float:
    """Relative mismatch between the analytic directional derivative
    <grad U, dphi> and a central finite difference of U along dphi."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    fd = (P.value(perturb(phi, dphi, eps)) - P.value(perturb(phi, dphi, -eps))) / (2.0 * eps)
    ip = P.grad_unwarped(phi).dot(dphi)
    return abs(fd - ip) / max(abs(fd), abs(ip), 1e-12)


def _near_kink(phi: MapField, dphi: VectorField, eps: float) -> bool:
    """True when a perturbed sample can cross a cell edge of the bilinear
    interpolant, where the finite difference straddles a kink."""
    px, py = phi.positions()
    reach = 2.0 * eps * np.maximum(np.abs(dphi.vx), np.abs(dphi.vy))
    gap = np.minimum(np.abs(px - np.round(px)), np.abs(py - np.round(py)))
    return bool(np.any(gap <= reach))


def gradient_oracle(n: int = 32, alpha: float = 1.0, seed: int = 0, pairs: int = 100,
                    eps: float = 1e-5, displacement: float = 2.5):
    """Largest :func:`grad_check` error over ``pairs`` random smooth problems.

    Each draw has smooth random images in [0, 1], a smooth random map with
    displacements up to ``displacement`` px and a smooth unit-amplitude
    direction. Draws whose finite-difference stencil straddles an edge of the
    bilinear interpolant are redrawn. Returns (max error, list of errors).
    """
    from .fields import GridSpec
    from .synth import random_smooth_field

    grid = GridSpec(n, n)
    rng = np.random.default_rng(seed)
    errors = []
    while len(errors) < pairs:
        I0 = ScalarField(grid, 0.5 + 0.5 * random_smooth_field(grid, rng, 4))
        I1 = ScalarField(grid, 0.5 + 0.5 * random_smooth_field(grid, rng, 4))
        phi = MapField(grid, random_smooth_field(grid, rng, 3, displacement),
                       random_smooth_field(grid, rng, 3, displacement))
        dphi = VectorField(grid, random_smooth_field(grid, rng, 3),
                           random_smooth_field(grid, rng, 3))
        if _near_kink(phi, dphi, eps):
            continue
        errors.append(grad_check(HSPotential(I0, I1, alpha), phi, dphi, eps))
    return max(errors), errors
