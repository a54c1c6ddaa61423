import numpy as np
import pytest

from accel_diffeo.fields import GridSpec, MapField, ScalarField
from accel_diffeo.stencils import warp
from accel_diffeo.synth import (add_salt_pepper, endpoint_error, gen_rect_pair,
                                gen_square_pair, random_smooth_field, recon_error,
                                square_support)


def test_square_pair_geometry():
    g = GridSpec(50, 50)
    I0, I1, gt = gen_square_pair(g, 20, (10, 0))
    assert I0.data.sum() == 400 and I1.data.sum() == 400
    assert I0.data[15, 15] == 1 and I0.data[15, 14] == 0 and I0.data[34, 34] == 1
    assert I1.data[15, 25] == 1 and I1.data[15, 24] == 0
    assert np.all(gt.ux == 10) and np.all(gt.uy == 0)


def test_zero_shift_gives_identical_images():
    I0, I1, gt = gen_square_pair(GridSpec(30, 30), 10, 0)
    assert np.array_equal(I0.data, I1.data) and np.all(gt.ux == 0)


def test_ground_truth_warp_is_exact():
    g = GridSpec(40, 36)
    I0, I1, gt = gen_square_pair(g, 12, (5, -3))
    assert np.array_equal(warp(I1, gt).data, I0.data)
    assert recon_error(I0, I1, gt) == (0.0, 0.0)


def test_rect_pair_and_fit_checks():
    g = GridSpec(50, 50)
    I0, I1 = gen_rect_pair(g, 17, 20, 14, (8, 0))
    assert I0.data.sum() == 17 * 17 and I1.data.sum() == 20 * 14
    ys, xs = np.nonzero(I1.data)
    assert (xs.min(), xs.max(), ys.min(), ys.max()) == (23, 42, 18, 31)
    with pytest.raises(ValueError):
        gen_square_pair(g, 20, (20, 0))
    with pytest.raises(ValueError):
        gen_square_pair(g, 10, (1.5, 0))


def test_square_support_matches_image():
    g = GridSpec(30, 30)
    I0, _, _ = gen_square_pair(g, 8, (3, 0))
    assert np.array_equal(square_support(g, 8), I0.data > 0)


# -- salt and pepper ----------------------------------------------------------

def test_noise_level_zero_is_bitwise_identity():
    I0, _, _ = gen_square_pair(GridSpec(20, 20), 6, 2)
    assert np.array_equal(add_salt_pepper(I0, 0.0, 5).data, I0.data)


def test_noise_level_one_is_binary():
    img = ScalarField.constant(GridSpec(30, 30), 0.4)
    out = add_salt_pepper(img, 1.0, 3).data
    assert set(np.unique(out)) <= {0.0, 1.0}
    assert 0.35 < out.mean() < 0.65


def test_noise_corrupts_the_expected_fraction():
    img = ScalarField.constant(GridSpec(50, 50), 0.5)
    changed = int(np.count_nonzero(add_salt_pepper(img, 0.2, 11).data != 0.5))
    assert abs(changed - 500) <= 60


def test_noise_is_deterministic_per_seed():
    img = ScalarField.constant(GridSpec(20, 20), 0.5)
    a = add_salt_pepper(img, 0.3, 9).data
    assert np.array_equal(a, add_salt_pepper(img, 0.3, 9).data)
    assert not np.array_equal(a, add_salt_pepper(img, 0.3, 10).data)
    with pytest.raises(ValueError):
        add_salt_pepper(img, 1.5, 0)


# -- metrics ------------------------------------------------------------------

def test_endpoint_error_examples():
    g = GridSpec(10, 10)
    ident = MapField.identity(g)
    assert endpoint_error(ident, ident) == 0.0
    assert endpoint_error(MapField.translation(g, 3, 4), ident) == 5.0
    m = np.zeros(g.shape, dtype=bool)
    m[2, 2] = True
    ux = np.zeros(g.shape)
    ux[2, 2] = 2.0
    assert endpoint_error(MapField(g, ux, 0 * ux), ident, m) == 2.0
    assert endpoint_error(MapField(g, ux, 0 * ux), ident) == pytest.approx(0.02)
    with pytest.raises(ValueError):
        endpoint_error(ident, ident, np.zeros(g.shape, dtype=bool))


def test_recon_error_examples():
    g = GridSpec(50, 50)
    black, white = ScalarField.constant(g, 0.0), ScalarField.constant(g, 1.0)
    data, l2 = recon_error(black, white, MapField.identity(g))
    assert data == 1250.0 and l2 == pytest.approx(50.0)
    assert recon_error(white, white, MapField.translation(g, 7, 2)) == (0.0, 0.0)


def test_random_smooth_field_peak_and_periodicity():
    g = GridSpec(16, 12)
    f = random_smooth_field(g, np.random.default_rng(0), 2, 1.5)
    assert np.max(np.abs(f)) == pytest.approx(1.5)
    # band limited: only frequencies up to 2 carry energy
    spec = np.abs(np.fft.fft2(f))
    spec[:3, :3] = spec[:3, -2:] = spec[-2:, :3] = spec[-2:, -2:] = 0
    assert np.max(spec) < 1e-10
