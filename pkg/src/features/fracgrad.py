"""Grunwald-Letnikov fractional gradient.

The horizontal component sums along axis 0 and the vertical one along axis 1:

    grad_h u(i, j) = sum_l w[l] u(i - l, j)
    grad_v u(i, j) = sum_l w[l] u(i, j - l)

with periodic indexing, so both components are diagonal in the Fourier domain.
"""
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import fft

from src.exceptions import DimensionError, ParameterError
from src.features.convolution import FreqField, ImageField, apply_symbol

DEFAULT_LENGTH = 12


@dataclass(frozen=True)
class GlCoeffs:
    """Truncated G-L weights of order `alpha`."""

    alpha: float
    weights: np.ndarray

    @property
    def length(self) -> int:
        return int(self.weights.size)


class GradPair(NamedTuple):
    """Horizontal and vertical gradient components.

    `np.asarray(pair)` stacks them into one (2, m, n[, c]) array, which is the
    layout the solver uses for z and p3.
    """

    h: np.ndarray
    v: np.ndarray


def gl_coeffs(alpha: float, length: int = DEFAULT_LENGTH) -> GlCoeffs:
    """
    Compute G-L weights (-1)^l Gamma(a+1) / (Gamma(l+1) Gamma(a-l+1)).

    The recurrence w[l] = w[l-1] (l - 1 - alpha) / l avoids Gamma overflow.

    Args:
        alpha (float): fractional order
        length (int): number of weights L

    Raises:
        ParameterError: L < 1

    Returns:
        GlCoeffs: weights with w[0] = 1
    """
    if length < 1:
        raise ParameterError(f"G-L length must be >= 1, got {length}")

    weights = np.empty(length, dtype=np.float64)
    weights[0] = 1.0
    for l in range(1, length):  # noqa: E741
        weights[l] = weights[l - 1] * (l - 1 - alpha) / l

    return GlCoeffs(alpha=float(alpha), weights=weights)


def _check_length(c: GlCoeffs, shape: Sequence[int]) -> None:
    if c.length > min(shape[0], shape[1]):
        raise DimensionError(
            f"G-L length {c.length} exceeds image size {tuple(shape[:2])}"
        )


def frac_grad(img: ImageField, c: GlCoeffs) -> GradPair:
    """
    Spatial fractional gradient (direct weighted sum of shifted copies).

    Args:
        img (ImageField): image of shape (m, n) or (m, n, c)
        c (GlCoeffs): G-L weights

    Raises:
        DimensionError: L larger than min(m, n)

    Returns:
        GradPair: (horizontal, vertical) components
    """
    img = np.asarray(img, dtype=np.float64)
    _check_length(c, img.shape)

    grad_h = np.zeros_like(img)
    grad_v = np.zeros_like(img)
    for shift, weight in enumerate(c.weights):
        grad_h += weight * np.roll(img, shift, axis=0)
        grad_v += weight * np.roll(img, shift, axis=1)

    return GradPair(grad_h, grad_v)


def frac_grad_adjoint(g: Sequence[np.ndarray], c: GlCoeffs) -> ImageField:
    """
    Exact adjoint of `frac_grad` under the standard inner product.

    Args:
        g (Sequence[np.ndarray]): GradPair or stacked (2, ...) array
        c (GlCoeffs): G-L weights

    Raises:
        DimensionError: components of different shapes, or L too large

    Returns:
        ImageField: sum of the transposed component operators
    """
    grad_h = np.asarray(g[0], dtype=np.float64)
    grad_v = np.asarray(g[1], dtype=np.float64)
    if grad_h.shape != grad_v.shape:
        raise DimensionError(
            f"Gradient components differ in shape: {grad_h.shape} vs {grad_v.shape}"
        )
    _check_length(c, grad_h.shape)

    out = np.zeros_like(grad_h)
    for shift, weight in enumerate(c.weights):
        out += weight * np.roll(grad_h, -shift, axis=0)
        out += weight * np.roll(grad_v, -shift, axis=1)
    return out


def frac_symbol(
    c: GlCoeffs,
    shape: Sequence[int],
) -> tuple[FreqField, FreqField, np.ndarray]:
    """
    Frequency symbols of the fractional gradient.

    Args:
        c (GlCoeffs): G-L weights
        shape (Sequence[int]): spatial shape (m, n)

    Raises:
        DimensionError: L larger than min(m, n)

    Returns:
        tuple: F(grad_h), F(grad_v) and the real |F(grad_h)|^2 + |F(grad_v)|^2
    """
    rows, cols = int(shape[0]), int(shape[1])
    _check_length(c, (rows, cols))

    stencil_h = np.zeros((rows, cols))
    stencil_h[: c.length, 0] = c.weights
    stencil_v = np.zeros((rows, cols))
    stencil_v[0, : c.length] = c.weights

    symbol_h = fft.fft2(stencil_h)
    symbol_v = fft.fft2(stencil_v)
    combined = np.abs(symbol_h) ** 2 + np.abs(symbol_v) ** 2

    return symbol_h, symbol_v, combined


def frac_grad_fft(img: ImageField, c: GlCoeffs) -> GradPair:
    """Fractional gradient applied through its frequency symbols."""
    img = np.asarray(img, dtype=np.float64)
    symbol_h, symbol_v, _ = frac_symbol(c, img.shape)
    return GradPair(apply_symbol(img, symbol_h), apply_symbol(img, symbol_v))
