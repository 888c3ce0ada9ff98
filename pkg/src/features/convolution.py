"""Periodic convolution and kernel-to-frequency embedding.

Images are float arrays of shape (m, n) or (m, n, c); kernels are 2-D arrays
applied to every channel independently. The boundary is always periodic.
"""
import numpy as np
from scipy import fft

from src.exceptions import DimensionError, ParameterError

# Type aliases, documentation only
ImageField = np.ndarray
Kernel = np.ndarray
FreqField = np.ndarray


def kernel_anchor(shape: tuple[int, ...]) -> tuple[int, int]:
    """Anchor (center) index of a kernel: floor(size / 2) per dimension."""
    return shape[0] // 2, shape[1] // 2


def as_kernel(data: np.ndarray) -> Kernel:
    """
    Validate a blur kernel and normalize it to sum 1.

    Args:
        data (np.ndarray): 2-D non-negative array

    Raises:
        DimensionError: data is not 2-D
        ParameterError: negative entries, or nothing to normalize

    Returns:
        Kernel: float64 copy summing to 1
    """
    kernel = np.array(data, dtype=np.float64)
    if kernel.ndim != 2 or kernel.size == 0:
        raise DimensionError(
            f"Kernel must be a non-empty 2-D array, got {kernel.shape}"
        )
    if not np.all(np.isfinite(kernel)):
        raise ParameterError("Kernel has non-finite entries")
    if np.any(kernel < 0):
        raise ParameterError(f"Kernel has negative entries (min {kernel.min():g})")
    total = kernel.sum()
    if total <= 0:
        raise ParameterError("Kernel sums to zero")
    return kernel / total


def psf2otf(k: np.ndarray, shape: tuple[int, int]) -> FreqField:
    """
    Convert a point spread function to its optical transfer function.

    - zero-pad the kernel to `shape`
    - circularly shift it so its anchor sits at index (0, 0)
    - take the 2-D FFT

    Args:
        k (np.ndarray): 2-D kernel (any real values, e.g. filters or stencils)
        shape (tuple[int, int]): spatial shape of the image

    Raises:
        DimensionError: shape smaller than the kernel

    Returns:
        FreqField: complex array of `shape`
    """
    k = np.asarray(k, dtype=np.float64)
    rows, cols = int(shape[0]), int(shape[1])
    if k.ndim != 2:
        raise DimensionError(f"Kernel must be 2-D, got shape {k.shape}")
    if k.shape[0] > rows or k.shape[1] > cols:
        raise DimensionError(
            f"Kernel of shape {k.shape} does not fit in image of shape {(rows, cols)}"
        )

    padded = np.zeros((rows, cols), dtype=np.float64)
    padded[: k.shape[0], : k.shape[1]] = k
    anchor = kernel_anchor(k.shape)
    padded = np.roll(padded, (-anchor[0], -anchor[1]), axis=(0, 1))

    return fft.fft2(padded)


def broadcast_symbol(symbol: FreqField, img: np.ndarray) -> FreqField:
    """Reshape a (m, n) symbol so it broadcasts over trailing channels."""
    return symbol.reshape(symbol.shape + (1,) * (img.ndim - 2))


def apply_symbol(img: ImageField, symbol: FreqField) -> ImageField:
    """Multiply `img` by a diagonal frequency symbol (periodic filtering)."""
    spectrum = fft.fft2(img, axes=(0, 1))
    return np.real(fft.ifft2(spectrum * broadcast_symbol(symbol, img), axes=(0, 1)))


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3) or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(
            f"Image must have shape (m, n) or (m, n, c), got {img.shape}"
        )
    return img


def conv2_periodic(img: ImageField, k: np.ndarray) -> ImageField:
    """
    Periodic 2-D convolution of an image with a kernel.

    Args:
        img (ImageField): image of shape (m, n) or (m, n, c)
        k (np.ndarray): 2-D kernel, anchored at floor(size / 2)

    Raises:
        DimensionError: kernel larger than the image

    Returns:
        ImageField: blurred image, same shape as `img`
    """
    img = _check_image(img)
    return apply_symbol(img, psf2otf(k, img.shape[:2]))


def conv2_adjoint(img: ImageField, k: np.ndarray) -> ImageField:
    """Adjoint of `conv2_periodic` (periodic correlation with `k`)."""
    img = _check_image(img)
    return apply_symbol(img, np.conj(psf2otf(k, img.shape[:2])))
