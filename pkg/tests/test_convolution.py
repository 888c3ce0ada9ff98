import numpy as np
import pytest

from src.exceptions import DimensionError, ParameterError
from src.features.convolution import (
    apply_symbol,
    as_kernel,
    conv2_adjoint,
    conv2_periodic,
    kernel_anchor,
    psf2otf,
)


def brute_force_conv(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    rows, cols = img.shape
    anchor = kernel_anchor(k.shape)
    out = np.zeros_like(img)
    for i in range(rows):
        for j in range(cols):
            for a in range(k.shape[0]):
                for b in range(k.shape[1]):
                    out[i, j] += k[a, b] * img[
                        (i - (a - anchor[0])) % rows,
                        (j - (b - anchor[1])) % cols,
                    ]
    return out


def test_identity_kernel(rng):
    img = rng.random((8, 8))
    out = conv2_periodic(img, np.ones((1, 1)))
    assert np.allclose(out, img, atol=1e-12), "1x1 kernel is identity"  # nosec: B101


def test_constant_image_preserved(rng):
    k = as_kernel(rng.random((5, 3)))
    out = conv2_periodic(np.full((16, 16), 3.5), k)
    assert np.allclose(out, 3.5), "Normalized kernel keeps constants"  # nosec: B101


def test_matches_brute_force():
    img = np.arange(16, dtype=np.float64).reshape(4, 4)
    k = np.full((3, 3), 1.0 / 9.0)
    expected = brute_force_conv(img, k)
    assert np.allclose(conv2_periodic(img, k), expected, atol=1e-12)  # nosec: B101


def test_matches_brute_force_asymmetric(rng):
    img = rng.random((7, 6))
    k = rng.random((3, 4))
    assert np.allclose(  # nosec: B101
        conv2_periodic(img, k), brute_force_conv(img, k), atol=1e-12
    ), "Even-sized kernels use the floor(size / 2) anchor"


def test_psf2otf_delta():
    k = np.zeros((3, 3))
    k[1, 1] = 1.0
    otf = psf2otf(k, (8, 8))
    assert np.allclose(otf, 1.0), "Centered delta has a flat spectrum"  # nosec: B101


def test_psf2otf_symmetric_kernel_is_real(rng):
    half = rng.random((3, 3))
    k = half + half[::-1, ::-1]
    otf = psf2otf(k, (16, 16))
    assert np.max(np.abs(otf.imag)) < 1e-12  # nosec: B101


def test_psf2otf_dc_is_kernel_sum():
    otf = psf2otf(np.full((3, 3), 1.0 / 9.0), (8, 8))
    assert abs(otf[0, 0] - 1.0) < 1e-12  # nosec: B101


def test_psf2otf_kernel_too_large():
    with pytest.raises(DimensionError):
        psf2otf(np.ones((9, 9)), (8, 8))
    with pytest.raises(DimensionError):
        conv2_periodic(np.ones((4, 4)), np.ones((5, 1)))


def test_fft_consistency(rng):
    img = rng.random((20, 24))
    k = as_kernel(rng.random((5, 5)))
    expected = apply_symbol(img, psf2otf(k, img.shape))
    out = conv2_periodic(img, k)
    error = np.linalg.norm(out - expected)
    assert error <= 1e-10 * np.linalg.norm(expected)  # nosec: B101


def test_adjoint_identity(rng):
    x = rng.random((16, 12))
    y = rng.random((16, 12))
    k = as_kernel(rng.random((5, 3)))
    lhs = np.sum(conv2_periodic(x, k) * y)
    rhs = np.sum(x * conv2_adjoint(y, k))
    assert abs(lhs - rhs) < 1e-10, "conv2_adjoint is the adjoint"  # nosec: B101


def test_linearity(rng):
    a, b = rng.random((10, 10)), rng.random((10, 10))
    k = as_kernel(rng.random((3, 3)))
    combined = conv2_periodic(2.0 * a - 3.0 * b, k)
    separate = 2.0 * conv2_periodic(a, k) - 3.0 * conv2_periodic(b, k)
    assert np.allclose(combined, separate, atol=1e-12)  # nosec: B101


def test_color_channels_independent(rng):
    img = rng.random((12, 12, 3))
    k = as_kernel(rng.random((3, 3)))
    out = conv2_periodic(img, k)
    for c in range(3):
        assert np.allclose(out[..., c], conv2_periodic(img[..., c], k))  # nosec: B101


def test_as_kernel_normalizes():
    k = as_kernel(np.ones((2, 3)))
    assert abs(k.sum() - 1.0) < 1e-12  # nosec: B101
    assert k.shape == (2, 3)  # nosec: B101


@pytest.mark.parametrize(
    "data, error",
    [
        (np.array([[1.0, -0.5]]), ParameterError),
        (np.zeros((3, 3)), ParameterError),
        (np.ones(3), DimensionError),
    ],
)
def test_as_kernel_rejects(data, error):
    with pytest.raises(error):
        as_kernel(data)
