import math

import numpy as np
import pytest
from scipy import ndimage

from src.data.degrade import PsfSpec, make_psf
from src.exceptions import DimensionError, ParameterError
from src.features.convolution import conv2_periodic
from src.features.framelet import (
    FILTERS,
    FpmpVector,
    dark_channel,
    fdc,
    fpmp,
    framelet_analysis,
    framelet_synthesis,
    patch_minima,
    scatter_minima,
    split_by_mask,
    zero_count,
)


@pytest.fixture(scope="module")
def gaussian_kernel() -> np.ndarray:
    return make_psf(PsfSpec(kind="gaussian", size=9, sigma=math.sqrt(3)))


def test_filters():
    assert FILTERS[1][1] == 0.0  # nosec: B101
    tap = math.sqrt(2) / 4
    assert np.allclose(FILTERS[1][[0, 2]], [tap, -tap])  # nosec: B101
    assert abs(FILTERS[0].sum() - 1.0) < 1e-15  # nosec: B101
    assert abs(FILTERS[2].sum()) < 1e-15  # nosec: B101


def test_constant_image_bands():
    coeffs = framelet_analysis(np.full((8, 8), 5.0))
    assert coeffs.shape == (3, 3, 8, 8)  # nosec: B101
    assert np.allclose(coeffs[0, 0], 5.0)  # nosec: B101
    high_pass = [coeffs[i, j] for i in range(3) for j in range(3) if (i, j) != (0, 0)]
    assert np.allclose(high_pass, 0.0)  # nosec: B101


def test_matches_direct_filter_bank(rng):
    img = rng.random((8, 8))
    coeffs = framelet_analysis(img)
    for i, h_i in enumerate(FILTERS):
        for j, h_j in enumerate(FILTERS):
            kernel = np.outer(h_i, h_j)
            expected = conv2_periodic(img, kernel)
            assert np.allclose(coeffs[i, j], expected, atol=1e-12)  # nosec: B101


def test_tight_frame_identity(rng):
    for _ in range(50):
        x = rng.random((64, 64))
        coeffs = framelet_analysis(x)
        assert np.max(np.abs(framelet_synthesis(coeffs) - x)) < 1e-10  # nosec: B101
        energy = np.sum(x**2)
        assert abs(np.sum(coeffs**2) - energy) < 1e-8 * energy  # nosec: B101


def test_tight_frame_color(rng):
    x = rng.random((16, 10, 3))
    coeffs = framelet_analysis(x)
    assert coeffs.shape == (3, 3, 16, 10, 3)  # nosec: B101
    assert np.allclose(framelet_synthesis(coeffs), x, atol=1e-10)  # nosec: B101


def test_synthesis_of_zero():
    assert np.all(framelet_synthesis(np.zeros((3, 3, 6, 6))) == 0)  # nosec: B101


def test_synthesis_adjoint(rng):
    x = rng.random((12, 12))
    c = rng.random((3, 3, 12, 12))
    lhs = np.sum(framelet_analysis(x) * c)
    rhs = np.sum(x * framelet_synthesis(c))
    assert abs(lhs - rhs) < 1e-10  # nosec: B101


def test_synthesis_atom(rng):
    e = np.zeros((3, 3, 10, 10))
    e[0, 0, 4, 5] = 1.0
    atom = framelet_synthesis(e)
    x = rng.random((10, 10))
    coefficient = framelet_analysis(x)[0, 0, 4, 5]
    assert abs(np.sum(atom * x) - coefficient) < 1e-12  # nosec: B101


def test_synthesis_nested_bands(rng):
    c = rng.random((3, 3, 6, 6))
    nested = [[c[i, j] for j in range(3)] for i in range(3)]
    assert np.allclose(framelet_synthesis(nested), framelet_synthesis(c))  # nosec: B101


def test_synthesis_mismatched_bands():
    nested = [[np.zeros((4, 4)) for _ in range(3)] for _ in range(3)]
    nested[2][1] = np.zeros((4, 5))
    with pytest.raises(DimensionError):
        framelet_synthesis(nested)
    with pytest.raises(DimensionError):
        framelet_synthesis([[np.zeros((4, 4))] * 3] * 2)
    with pytest.raises(DimensionError):
        framelet_synthesis(np.zeros((2, 3, 4, 4)))


def test_fpmp_constant_image():
    n, mask = fpmp(np.full((6, 6), 5.0), 3)
    assert len(n) == 36  # nosec: B101
    assert n.grid == (2, 2)  # nosec: B101
    assert np.allclose(n.values[:4], 5.0)  # nosec: B101
    assert np.allclose(n.values[4:], 0.0)  # nosec: B101
    # Ties go to the first pixel of the patch in row-major order
    assert np.all(mask[:, :, ::3, ::3])  # nosec: B101
    assert mask.sum() == 36  # nosec: B101


def test_fpmp_patch_size_one(rng):
    img = rng.random((5, 7))
    n, mask = fpmp(img, 1)
    assert mask.all()  # nosec: B101
    assert np.allclose(n.values, framelet_analysis(img).reshape(-1))  # nosec: B101


def test_fpmp_brute_force(rng):
    img = rng.random((10, 13))
    r = 4
    n, mask = fpmp(img, r)
    coeffs = framelet_analysis(img)
    pm, pn = math.ceil(10 / r), math.ceil(13 / r)
    assert len(n) == 9 * pm * pn  # nosec: B101

    expected = []
    for i in range(3):
        for j in range(3):
            for a in range(pm):
                for b in range(pn):
                    patch = coeffs[i, j, a * r : (a + 1) * r, b * r : (b + 1) * r]
                    expected.append(patch.min())
    assert np.allclose(n.values, expected)  # nosec: B101
    assert np.allclose(coeffs.reshape(-1)[n.positions], n.values)  # nosec: B101


def test_fpmp_patch_index(rng):
    n, _ = fpmp(rng.random((9, 9)), 4)
    index = n.patch_index()
    assert index.shape == (len(n), 4)  # nosec: B101
    assert tuple(index[0]) == (0, 0, 0, 0)  # nosec: B101
    assert tuple(index[-1]) == (2, 2, 2, 2)  # nosec: B101
    assert tuple(index[3]) == (0, 0, 1, 0)  # nosec: B101


def test_fpmp_color_mask(rng):
    img = rng.random((12, 9, 3))
    n, mask = fpmp(img, 4)
    coeffs = framelet_analysis(img)
    assert mask.shape == coeffs.shape  # nosec: B101
    assert mask.sum() == len(n) == 9 * 3 * 3  # nosec: B101
    # One bit per patch and band, across channels
    per_patch = mask[:, :, :4, :4, :].sum(axis=(2, 3, 4))
    assert np.all(per_patch == 1)  # nosec: B101
    assert np.allclose(n.values[0], coeffs[0, 0, :4, :4, :].min())  # nosec: B101


def test_fpmp_invalid_patch_size():
    with pytest.raises(ParameterError):
        fpmp(np.ones((4, 4)), 0)


def test_fpmp_blur_monotonicity(sinusoid, gaussian_kernel):
    blurred = conv2_periodic(sinusoid, gaussian_kernel)
    clear_n, _ = fpmp(sinusoid, 16)
    blurred_n, _ = fpmp(blurred, 16)
    assert blurred_n.values.mean() >= clear_n.values.mean()  # nosec: B101
    share = np.mean(blurred_n.values >= clear_n.values - 1e-9)
    assert share >= 0.95  # nosec: B101


def test_fpmp_zero_count_after_blur(cameraman, gaussian_kernel):
    blurred = conv2_periodic(cameraman, gaussian_kernel)
    clear_zeros = zero_count(fpmp(cameraman, 15)[0].values, 1e-6)
    blurred_zeros = zero_count(fpmp(blurred, 15)[0].values, 1e-6)
    assert blurred_zeros >= clear_zeros  # nosec: B101

    pmp_gap = zero_count(patch_minima(blurred, 15)) - zero_count(
        patch_minima(cameraman, 15)
    )
    assert blurred_zeros - clear_zeros >= pmp_gap  # nosec: B101


def test_fdc_constant_image():
    out = fdc(np.full((5, 6), 2.0), 3)
    assert out.shape == (15, 18)  # nosec: B101
    assert np.allclose(out[:5, :6], 2.0)  # nosec: B101
    assert np.allclose(out[5:, :], 0.0)  # nosec: B101
    assert np.allclose(out[:5, 6:], 0.0)  # nosec: B101


def test_fdc_window_one_is_channel_min(rng):
    img = rng.random((6, 5, 3))
    coeffs = framelet_analysis(img).min(axis=-1)
    out = fdc(img, 1)
    assert np.allclose(out[6:12, 10:15], coeffs[1, 2])  # nosec: B101


def test_fdc_sliding_minimum(rng):
    img = rng.random((8, 8))
    coeffs = framelet_analysis(img)
    out = fdc(img, 3)
    band = coeffs[2, 1]
    window = (-1, 0, 1)
    expected = min(band[(4 + a) % 8, b % 8] for a in window for b in window)
    assert np.isclose(out[16 + 4, 8 + 0], expected)  # nosec: B101


def test_fdc_even_window():
    with pytest.raises(ParameterError):
        fdc(np.ones((8, 8)), 4)


def test_fdc_blur_monotonicity(sinusoid, gaussian_kernel):
    blurred = conv2_periodic(sinusoid, gaussian_kernel)
    share = np.mean(fdc(blurred, 9) >= fdc(sinusoid, 9) - 1e-9)
    assert share >= 0.95  # nosec: B101


def test_raw_pixel_baselines(rng):
    img = rng.random((10, 10, 3))
    gray = img.min(axis=-1)
    pmp = patch_minima(img, 5)
    assert pmp.shape == (4,)  # nosec: B101
    assert np.isclose(pmp[1], gray[:5, 5:].min())  # nosec: B101

    dc = dark_channel(img, 3)
    expected = ndimage.minimum_filter(gray, size=3, mode="wrap")
    assert np.allclose(dc, expected)  # nosec: B101


def test_zero_count():
    assert zero_count(np.array([0.0, 1e-7, -1e-7, 1e-5, 2.0])) == 3  # nosec: B101
    assert zero_count(np.array([0.0, 0.01]), eps=0.1) == 2  # nosec: B101


@pytest.mark.parametrize("fill, expected_part", [(True, "x_p"), (False, "x_hat_p")])
def test_split_trivial_masks(rng, fill, expected_part):
    img = rng.random((8, 8))
    mask = np.full((3, 3, 8, 8), fill)
    x_p, x_hat_p = split_by_mask(img, mask)
    full, empty = (x_p, x_hat_p) if expected_part == "x_p" else (x_hat_p, x_p)
    assert np.allclose(full, img, atol=1e-10)  # nosec: B101
    assert np.allclose(empty, 0.0, atol=1e-12)  # nosec: B101


def test_split_partition(rng):
    img = rng.random((20, 20, 3))
    _, mask = fpmp(img, 6)
    x_p, x_hat_p = split_by_mask(img, mask)
    assert np.max(np.abs(x_p + x_hat_p - img)) < 1e-10  # nosec: B101


def test_split_shape_mismatch():
    with pytest.raises(DimensionError):
        split_by_mask(np.ones((8, 8)), np.ones((3, 3, 8, 7), dtype=bool))


def test_scatter_reproduces_masked_part(rng):
    img = rng.random((15, 15))
    n, mask = fpmp(img, 5)
    x_p, _ = split_by_mask(img, mask)
    assert np.allclose(scatter_minima(n, mask), x_p, atol=1e-12)  # nosec: B101


def test_scatter_zeros(rng):
    n, mask = fpmp(rng.random((12, 12)), 4)
    out = scatter_minima(n.with_values(np.zeros(len(n))), mask)
    assert np.all(out == 0)  # nosec: B101


def test_scatter_single_entry(rng):
    n, mask = fpmp(rng.random((12, 12)), 4)
    values = np.zeros(len(n))
    values[17] = 1.0
    atom = scatter_minima(n.with_values(values), mask)
    x = rng.random((12, 12))
    coefficient = framelet_analysis(x).reshape(-1)[n.positions[17]]
    assert abs(np.sum(atom * x) - coefficient) < 1e-12  # nosec: B101


def test_scatter_length_mismatch(rng):
    n, mask = fpmp(rng.random((12, 12)), 4)
    short = FpmpVector(n.values[:-1], n.positions[:-1], n.grid, n.coeff_shape)
    with pytest.raises(DimensionError):
        scatter_minima(short, mask)
    with pytest.raises(DimensionError):
        n.with_values(np.zeros(3))
