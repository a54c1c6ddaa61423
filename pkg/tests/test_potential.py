import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accel_diffeo.fields import GridSpec, MapField, ScalarField, VectorField
from accel_diffeo.potential import (HSPotential, grad_check, gradient_oracle, hs_grad_unwarped,
                                    hs_grad_warped, hs_value)
from accel_diffeo.stencils import bilinear, ddx, ddy, det_jacobian_array, laplacian_array
from accel_diffeo.synth import gen_square_pair, random_smooth_field


def smooth_images(grid, seed):
    rng = np.random.default_rng(seed)
    I0 = ScalarField(grid, 0.5 + 0.5 * random_smooth_field(grid, rng, 3))
    I1 = ScalarField(grid, 0.5 + 0.5 * random_smooth_field(grid, rng, 3))
    return I0, I1, rng


# -- value --------------------------------------------------------------------

def test_value_zero_when_images_match():
    g = GridSpec(12, 12)
    I0, _, _ = smooth_images(g, 0)
    assert hs_value(HSPotential(I0, I0, 3.0), MapField.identity(g)) == 0.0


def test_value_zero_at_translation_minimum():
    g = GridSpec(30, 30)
    I0, I1, gt = gen_square_pair(g, 10, (6, -2))
    assert hs_value(HSPotential(I0, I1, 5.0), gt) == 0.0


def test_value_of_black_against_white():
    g = GridSpec(50, 50)
    P = HSPotential(ScalarField.constant(g, 0.0), ScalarField.constant(g, 1.0), 7.0)
    assert hs_value(P, MapField.identity(g)) == 1250.0


def test_value_scaling_with_image_contrast():
    g = GridSpec(16, 16)
    I0, I1, rng = smooth_images(g, 1)
    phi = MapField(g, random_smooth_field(g, rng, 2, 1.3), random_smooth_field(g, rng, 2, 1.3))
    P = HSPotential(I0, I1, 2.0)
    Q = HSPotential(ScalarField(g, 3 * I0.data), ScalarField(g, 3 * I1.data), 2.0)
    assert Q.data_term(phi) == pytest.approx(9 * P.data_term(phi), rel=1e-12)
    assert Q.smoothness_term(phi) == P.smoothness_term(phi)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 10))
def test_value_nonnegative(seed, alpha):
    g = GridSpec(8, 8)
    I0, I1, rng = smooth_images(g, seed)
    phi = MapField(g, rng.normal(size=g.shape), rng.normal(size=g.shape))
    assert hs_value(HSPotential(I0, I1, alpha), phi) >= 0.0


def test_value_zero_only_with_zero_residual_and_gradient():
    g = GridSpec(10, 10)
    I0, I1, gt = gen_square_pair(g, 4, (2, 0))
    P = HSPotential(I0, I1, 1.0)
    assert hs_value(P, gt) == 0.0
    bump = np.zeros(g.shape)
    bump[0, 0] = 0.1  # far from the square: residual stays zero, gradient does not
    assert P.data_term(MapField(g, gt.ux + bump, gt.uy)) == 0.0
    assert hs_value(P, MapField(g, gt.ux + bump, gt.uy)) > 0.0


def test_rejects_bad_alpha_and_grid_mismatch():
    g = GridSpec(8, 8)
    I0 = ScalarField.constant(g, 0.0)
    with pytest.raises(ValueError):
        HSPotential(I0, I0, -1.0)
    with pytest.raises(ValueError):
        HSPotential(I0, ScalarField.constant(GridSpec(9, 8), 0.0), 1.0)


# -- gradients ----------------------------------------------------------------

def test_gradients_vanish_when_images_match():
    g = GridSpec(10, 10)
    I0, _, _ = smooth_images(g, 2)
    P = HSPotential(I0, I0, 4.0)
    ident = MapField.identity(g)
    for G in (hs_grad_unwarped(P, ident), hs_grad_warped(P, ident, ident), P.grad_sampled(ident)):
        assert np.all(G.vx == 0) and np.all(G.vy == 0)


def test_gradients_at_identity_without_regularizer():
    g = GridSpec(14, 14)
    I0, I1, _ = smooth_images(g, 3)
    P = HSPotential(I0, I1, 0.0)
    ident = MapField.identity(g)
    r = I1.data - I0.data
    gx, gy = ddx(I1.data), ddy(I1.data)
    w = hs_grad_warped(P, ident, ident)
    s = P.grad_sampled(ident)
    for G in (w, s):
        assert np.array_equal(G.vx, r * gx) and np.array_equal(G.vy, r * gy)
    # the exact derivative of the interpolant differs only by the choice of
    # one-sided difference at nodes; it stays close on smooth images
    u = hs_grad_unwarped(P, ident)
    assert np.max(np.abs(u.vx - w.vx)) < 0.1 and np.max(np.abs(u.vy - w.vy)) < 0.1


def test_warped_matches_sampled_at_identity():
    g = GridSpec(12, 12)
    I0, I1, _ = smooth_images(g, 4)
    P = HSPotential(I0, I1, 2.5)
    ident = MapField.identity(g)
    w, s = P.grad_warped(ident, ident), P.grad_sampled(ident)
    assert np.max(np.abs(w.vx - s.vx)) <= 1e-12 and np.max(np.abs(w.vy - s.vy)) <= 1e-12


def test_warped_gradient_is_pushforward_of_unwarped():
    n = 64
    g = GridSpec(n, n)
    I0, I1, _ = smooth_images(g, 0)
    y = np.mgrid[0:n, 0:n][0]
    a = 1.0
    ux = a * np.sin(2 * np.pi * y / n)
    phi = MapField(g, ux, np.zeros(g.shape))
    psi = MapField(g, -ux, np.zeros(g.shape))  # exact inverse of a shear
    for alpha in (0.0, 1.0):
        P = HSPotential(I0, I1, alpha)
        w = P.grad_warped(phi, psi)
        s = P.grad_sampled(phi)
        px, py = phi.positions()
        det = det_jacobian_array(phi.ux, phi.uy)
        cx = bilinear(w.vx, px, py) * det
        cy = bilinear(w.vy, px, py) * det
        rel = np.sqrt(np.sum((cx - s.vx) ** 2 + (cy - s.vy) ** 2)
                      / np.sum(s.vx ** 2 + s.vy ** 2))
        assert rel < 1e-2


def test_sampled_gradient_formula():
    g = GridSpec(16, 16)
    I0, I1, rng = smooth_images(g, 5)
    phi = MapField(g, random_smooth_field(g, rng, 2, 2.2), random_smooth_field(g, rng, 2, 2.2))
    P = HSPotential(I0, I1, 3.0)
    px, py = phi.positions()
    r = bilinear(I1.data, px, py) - I0.data
    s = P.grad_sampled(phi)
    assert np.allclose(s.vx, r * bilinear(ddx(I1.data), px, py) - 3.0 * laplacian_array(phi.ux))
    assert np.allclose(s.vy, r * bilinear(ddy(I1.data), px, py) - 3.0 * laplacian_array(phi.uy))


# -- finite-difference oracle -------------------------------------------------

def test_grad_check_zero_direction():
    g = GridSpec(8, 8)
    I0, I1, _ = smooth_images(g, 6)
    assert grad_check(HSPotential(I0, I1, 1.0), MapField.identity(g), VectorField.zeros(g)) == 0.0


def test_grad_check_rejects_nonpositive_eps():
    g = GridSpec(8, 8)
    I0, I1, _ = smooth_images(g, 6)
    with pytest.raises(ValueError):
        grad_check(HSPotential(I0, I1, 1.0), MapField.identity(g), VectorField.zeros(g), 0.0)


def test_direction_along_gradient_is_positive():
    g = GridSpec(16, 16)
    I0, I1, rng = smooth_images(g, 7)
    phi = MapField(g, random_smooth_field(g, rng, 2, 1.7), random_smooth_field(g, rng, 2, 1.7))
    P = HSPotential(I0, I1, 1.0)
    G = P.grad_unwarped(phi)
    assert G.dot(G) > 0
    assert G.dot(G) == pytest.approx(float(np.sum(G.vx ** 2 + G.vy ** 2)))


@pytest.mark.parametrize("alpha", [0.0, 1.0, 5.0])
def test_gradient_oracle_small_grid(alpha):
    worst, errors = gradient_oracle(16, alpha, seed=11, pairs=20)
    assert len(errors) == 20 and worst <= 1e-4
