import numpy as np
import pytest

from src.exceptions import DimensionError, ParameterError
from src.features.fracgrad import (
    GradPair,
    frac_grad,
    frac_grad_adjoint,
    frac_grad_fft,
    frac_symbol,
    gl_coeffs,
)


@pytest.mark.parametrize(
    "alpha, length, expected",
    [
        (1.0, 2, [1.0, -1.0]),
        (2.0, 3, [1.0, -2.0, 1.0]),
        (0.5, 3, [1.0, -0.5, -0.125]),
        (1.0, 4, [1.0, -1.0, 0.0, 0.0]),
    ],
)
def test_gl_coeffs(alpha, length, expected):
    c = gl_coeffs(alpha, length)
    assert c.length == length  # nosec: B101
    assert np.allclose(c.weights, expected, atol=1e-14)  # nosec: B101


def test_gl_coeffs_recurrence():
    c = gl_coeffs(0.7, 12)
    assert c.weights[0] == 1.0  # nosec: B101
    for l in range(1, 12):  # noqa: E741
        expected = c.weights[l - 1] * (l - 1 - 0.7) / l
        assert abs(c.weights[l] - expected) < 1e-14  # nosec: B101


def test_gl_coeffs_invalid_length():
    with pytest.raises(ParameterError):
        gl_coeffs(0.5, 0)


def test_alpha_one_is_backward_difference(rng):
    img = rng.random((9, 7))
    grad = frac_grad(img, gl_coeffs(1.0, 2))
    assert np.allclose(grad.h, img - np.roll(img, 1, axis=0))  # nosec: B101
    assert np.allclose(grad.v, img - np.roll(img, 1, axis=1))  # nosec: B101


def test_constant_image():
    c = gl_coeffs(0.6, 5)
    grad = frac_grad(np.full((8, 8), 2.0), c)
    assert np.allclose(grad.h, 2.0 * c.weights.sum())  # nosec: B101
    backward = frac_grad(np.ones((4, 4)), gl_coeffs(1.0, 2))
    assert np.allclose(backward.v, 0.0)  # nosec: B101


def test_matches_direct_sum(rng):
    img = rng.random((8, 8))
    c = gl_coeffs(0.7, 8)
    grad = frac_grad(img, c)
    expected_h = np.zeros_like(img)
    expected_v = np.zeros_like(img)
    for i in range(8):
        for j in range(8):
            for l in range(8):  # noqa: E741
                expected_h[i, j] += c.weights[l] * img[(i - l) % 8, j]
                expected_v[i, j] += c.weights[l] * img[i, (j - l) % 8]
    assert np.max(np.abs(grad.h - expected_h)) < 1e-12  # nosec: B101
    assert np.max(np.abs(grad.v - expected_v)) < 1e-12  # nosec: B101


@pytest.mark.parametrize("alpha", np.round(np.arange(0.1, 1.01, 0.1), 1))
def test_adjoint_identity(rng, alpha):
    x = rng.random((16, 16))
    g = GradPair(rng.random((16, 16)), rng.random((16, 16)))
    c = gl_coeffs(alpha, 12)
    grad = frac_grad(x, c)
    lhs = np.sum(grad.h * g.h) + np.sum(grad.v * g.v)
    rhs = np.sum(x * frac_grad_adjoint(g, c))
    assert abs(lhs - rhs) < 1e-10  # nosec: B101


def test_adjoint_accepts_stacked_array(rng):
    c = gl_coeffs(0.5, 4)
    g = rng.random((2, 8, 8))
    assert np.allclose(  # nosec: B101
        frac_grad_adjoint(g, c), frac_grad_adjoint(GradPair(g[0], g[1]), c)
    )


def test_spectral_matches_spatial(rng):
    img = rng.random((24, 20, 3))
    c = gl_coeffs(0.8, 12)
    spatial = frac_grad(img, c)
    spectral = frac_grad_fft(img, c)
    assert np.max(np.abs(spatial.h - spectral.h)) < 1e-10  # nosec: B101
    assert np.max(np.abs(spatial.v - spectral.v)) < 1e-10  # nosec: B101


def test_symbol_power(rng):
    c = gl_coeffs(0.4, 6)
    symbol_h, symbol_v, combined = frac_symbol(c, (16, 12))
    assert combined.shape == (16, 12)  # nosec: B101
    expected = np.abs(symbol_h) ** 2 + np.abs(symbol_v) ** 2
    assert np.allclose(combined, expected)  # nosec: B101
    assert np.all(combined >= 0)  # nosec: B101


def test_length_too_large():
    c = gl_coeffs(0.5, 12)
    with pytest.raises(DimensionError):
        frac_grad(np.ones((8, 16)), c)
    with pytest.raises(DimensionError):
        frac_symbol(c, (16, 8))
