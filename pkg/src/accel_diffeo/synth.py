"""Synthetic image pairs, noise, and flow/reconstruction metrics."""
import numpy as np

from .fields import GridSpec, MapField, ScalarField, _check_same_grid
from .stencils import warp


def _as_shift(shift):
    if np.ndim(shift) == 0:
        return int(shift), 0
    sx, sy = shift
    if int(sx) != sx or int(sy) != sy:
        raise ValueError(f"shift must be integer, got {shift}")
    return int(sx), int(sy)


def _box(grid, x0, y0, w, h, what):
    if x0 < 0 or y0 < 0 or x0 + w > grid.width or y0 + h > grid.height:
        raise ValueError(f"{what} of size {w}x{h} at ({x0}, {y0}) does not fit "
                         f"in a {grid.width}x{grid.height} image")
    img = np.zeros(grid.shape)
    img[y0:y0 + h, x0:x0 + w] = 1.0
    return img


def gen_square_pair(grid: GridSpec, square_size: int, shift=(10, 0)):
    """White square centred in I0 and translated by ``shift`` in I1.

    The ground-truth map is the constant displacement ``shift``, since
    I1(x + shift) = I0(x).
    """
    sx, sy = _as_shift(shift)
    x0 = (grid.width - square_size) // 2
    y0 = (grid.height - square_size) // 2
    I0 = _box(grid, x0, y0, square_size, square_size, "square")
    I1 = _box(grid, x0 + sx, y0 + sy, square_size, square_size, "shifted square")
    return ScalarField(grid, I0), ScalarField(grid, I1), MapField.translation(grid, sx, sy)


def gen_rect_pair(grid: GridSpec, square_size: int, rect_w: int, rect_h: int, shift=(8, 0)):
    """Centred square in I0; a ``rect_w`` x ``rect_h`` rectangle in I1 centred on
    the image centre plus ``shift``. No ground-truth flow exists."""
    sx, sy = _as_shift(shift)
    x0 = (grid.width - square_size) // 2
    y0 = (grid.height - square_size) // 2
    I0 = _box(grid, x0, y0, square_size, square_size, "square")
    rx = (grid.width - rect_w) // 2 + sx
    ry = (grid.height - rect_h) // 2 + sy
    I1 = _box(grid, rx, ry, rect_w, rect_h, "rectangle")
    return ScalarField(grid, I0), ScalarField(grid, I1)


def square_support(grid: GridSpec, square_size: int):
    """Boolean mask of the square in I0 as placed by :func:`gen_square_pair`."""
    x0 = (grid.width - square_size) // 2
    y0 = (grid.height - square_size) // 2
    return _box(grid, x0, y0, square_size, square_size, "square") > 0


def add_salt_pepper(image: ScalarField, level: float, seed: int) -> ScalarField:
    """Replace each pixel, with probability ``level``, by 0 or 1 (equally likely)."""
    if not 0.0 <= level <= 1.0:
        raise ValueError(f"noise level must lie in [0, 1], got {level}")
    rng = np.random.default_rng(seed)
    hit = rng.random(image.grid.shape) < level
    salt = rng.random(image.grid.shape) < 0.5
    out = np.where(hit, salt.astype(np.float64), image.data)
    return ScalarField(image.grid, out)


def random_smooth_field(grid: GridSpec, rng, max_freq=3, amplitude=1.0):
    """Band-limited periodic random raster with peak magnitude ``amplitude``."""
    h, w = grid.shape
    coef = np.zeros((h, w), dtype=complex)
    for ky in range(-max_freq, max_freq + 1):
        for kx in range(-max_freq, max_freq + 1):
            coef[ky % h, kx % w] = rng.normal() + 1j * rng.normal()
    f = np.real(np.fft.ifft2(coef))
    peak = np.max(np.abs(f))
    return amplitude * f / peak if peak > 0 else f


def endpoint_error(m: MapField, gt: MapField, support_mask=None) -> float:
    """Mean Euclidean distance between displacement vectors."""
    _check_same_grid(m, gt)
    err = np.hypot(m.ux - gt.ux, m.uy - gt.uy)
    if support_mask is not None:
        mask = np.asarray(support_mask, dtype=bool)
        if not mask.any():
            raise ValueError("endpoint_error: support mask is empty")
        err = err[mask]
    return float(np.mean(err))


def recon_error(I0: ScalarField, I1: ScalarField, m: MapField):
    """(data term 1/2 sum (I1(phi) - I0)^2, its L2 root sqrt(2 * data term))."""
    _check_same_grid(I0, I1, m)
    r = warp(I1, m).data - I0.data
    data = 0.5 * float(np.sum(r * r)) * I0.grid.cell_area
    return data, float(np.sqrt(2.0 * data))
