"""Piecewise-linear B-spline tight framelets and local minimal priors.

One undecimated decomposition level with the filters

    h0 = 1/4 [1, 2, 1],  h1 = sqrt(2)/4 [1, 0, -1],  h2 = 1/4 [-1, 2, -1]

gives 9 bands: band (i, j) filters axis 0 with h_i and axis 1 with h_j.
Coefficients are stored as one array of shape (3, 3, m, n) or (3, 3, m, n, c).

The priors reduce the coefficients (or raw pixels, for the baselines) to their
minima over color channels and over spatial windows:

    FPMP  non-overlapping r x r patches on the framelet bands
    FDC   sliding r x r windows on the framelet bands
    PMP   non-overlapping patches on raw pixels
    DC    sliding windows on raw pixels
"""
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import ndimage

from src.exceptions import DimensionError, ParameterError
from src.features.convolution import ImageField

logger = logging.getLogger(__name__)

FILTERS = (
    np.array([1.0, 2.0, 1.0]) / 4.0,
    np.array([1.0, 0.0, -1.0]) * math.sqrt(2.0) / 4.0,
    np.array([-1.0, 2.0, -1.0]) / 4.0,
)

# Boolean array with the shape of the framelet coefficients
MinMask = np.ndarray
FrameletCoeffs = np.ndarray


@dataclass(frozen=True)
class FpmpVector:
    """Patch-wise minima of framelet coefficients.

    Entries are ordered by band (i, j), then patch row, then patch column.
    `positions` are flat indices of the minima in the coefficient array.
    """

    values: np.ndarray
    positions: np.ndarray
    grid: tuple[int, int]
    coeff_shape: tuple[int, ...]

    def __len__(self) -> int:
        return int(self.values.size)

    def patch_index(self) -> np.ndarray:
        """(band row, band col, patch row, patch col) of every entry."""
        indices = np.unravel_index(np.arange(len(self)), (3, 3) + self.grid)
        return np.stack(indices, axis=1)

    def with_values(self, values: np.ndarray) -> "FpmpVector":
        """Same positions, new values."""
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.values.shape:
            raise DimensionError(
                f"Expected {self.values.shape} values, got {values.shape}"
            )
        return FpmpVector(values, self.positions, self.grid, self.coeff_shape)


def framelet_analysis(img: ImageField) -> FrameletCoeffs:
    """
    Framelet decomposition W x (separable, periodic boundary).

    Args:
        img (ImageField): image of shape (m, n) or (m, n, c)

    Raises:
        DimensionError: empty or badly shaped image

    Returns:
        FrameletCoeffs: array of shape (3, 3) + img.shape
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim not in (2, 3) or img.size == 0:
        raise DimensionError(
            f"Image must have shape (m, n) or (m, n, c), got {img.shape}"
        )

    filtered_rows = [ndimage.convolve1d(img, h, axis=0, mode="wrap") for h in FILTERS]
    return np.stack(
        [
            np.stack(
                [ndimage.convolve1d(rows, h, axis=1, mode="wrap") for h in FILTERS]
            )
            for rows in filtered_rows
        ]
    )


def _as_coeffs(
    c: Union[np.ndarray, Sequence[Sequence[np.ndarray]]]
) -> FrameletCoeffs:
    if isinstance(c, np.ndarray) and c.dtype != object:
        if c.shape[:2] != (3, 3) or c.ndim not in (4, 5):
            raise DimensionError(
                f"Expected (3, 3, m, n[, c]) coefficients, got {c.shape}"
            )
        return c.astype(np.float64, copy=False)

    bands = [np.asarray(band, dtype=np.float64) for row in c for band in row]
    if len(bands) != 9:
        raise DimensionError(f"Expected 9 bands, got {len(bands)}")
    shapes = {band.shape for band in bands}
    if len(shapes) != 1:
        raise DimensionError(f"Framelet bands have mismatched shapes: {sorted(shapes)}")
    return np.stack(bands).reshape((3, 3) + bands[0].shape)


def framelet_synthesis(
    c: Union[np.ndarray, Sequence[Sequence[np.ndarray]]]
) -> ImageField:
    """
    Adjoint filter bank W^T c (correlation with the same filters, summed).

    Since W^T W = I, `framelet_synthesis(framelet_analysis(x))` returns x.

    Args:
        c: coefficient array of shape (3, 3, m, n[, c]) or a 3 x 3 nested
            sequence of equally shaped bands

    Raises:
        DimensionError: wrong number of bands or mismatched band shapes

    Returns:
        ImageField: reconstructed image
    """
    coeffs = _as_coeffs(c)

    out = np.zeros(coeffs.shape[2:])
    for i, h_i in enumerate(FILTERS):
        partial = sum(
            ndimage.correlate1d(coeffs[i, j], h_j, axis=1, mode="wrap")
            for j, h_j in enumerate(FILTERS)
        )
        out += ndimage.correlate1d(partial, h_i, axis=0, mode="wrap")
    return out


def _channel_min(values: np.ndarray, spatial_ndim: int) -> np.ndarray:
    """Min over the trailing channel axis, if there is one."""
    if values.ndim > spatial_ndim:
        return values.min(axis=-1)
    return values


def _patch_blocks(values: np.ndarray, r: int) -> tuple[np.ndarray, tuple[int, int]]:
    """
    Reshape (..., m, n, c) into (..., pm, pn, r * r * c) non-overlapping patches.

    Ragged edge patches are padded with +inf so they never win a minimum.
    """
    rows, cols = values.shape[-3], values.shape[-2]
    grid = (math.ceil(rows / r), math.ceil(cols / r))
    pad = [(0, 0)] * values.ndim
    pad[-3] = (0, grid[0] * r - rows)
    pad[-2] = (0, grid[1] * r - cols)
    padded = np.pad(values, pad, mode="constant", constant_values=np.inf)

    lead = values.shape[:-3]
    channels = values.shape[-1]
    blocks = padded.reshape(lead + (grid[0], r, grid[1], r, channels))
    n_lead = len(lead)
    order = tuple(range(n_lead)) + tuple(n_lead + a for a in (0, 2, 1, 3, 4))
    blocks = blocks.transpose(order).reshape(lead + grid + (r * r * channels,))
    return blocks, grid


def _check_patch_size(r: int) -> None:
    if r < 1:
        raise ParameterError(f"Patch size must be >= 1, got {r}")


def fpmp(img: ImageField, r: int) -> tuple[FpmpVector, MinMask]:
    """
    Framelet patch-wise minimal pixels and their selection mask.

    - decompose the image into the 9 framelet bands
    - split every band into non-overlapping r x r patches (ragged at edges)
    - take the minimum over each patch and over color channels
    - record the argmin, first occurrence in row-major (row, col, channel) order

    Args:
        img (ImageField): image of shape (m, n) or (m, n, c)
        r (int): patch size

    Raises:
        ParameterError: r < 1

    Returns:
        tuple[FpmpVector, MinMask]: 9 * ceil(m/r) * ceil(n/r) minima, and a
            boolean mask over the coefficients with one bit per patch and band
    """
    _check_patch_size(r)
    coeffs = framelet_analysis(img)
    color = coeffs.ndim == 5
    work = coeffs if color else coeffs[..., np.newaxis]
    rows, cols, channels = work.shape[2:]

    blocks, grid = _patch_blocks(work, r)
    argmin = blocks.argmin(axis=-1)
    values = np.take_along_axis(blocks, argmin[..., np.newaxis], axis=-1)[..., 0]

    d_row, d_col, channel = np.unravel_index(argmin, (r, r, channels))
    band_i, band_j, patch_row, patch_col = np.indices((3, 3) + grid)
    index = [band_i, band_j, patch_row * r + d_row, patch_col * r + d_col]
    if color:
        index.append(channel)
    positions = np.ravel_multi_index(tuple(index), coeffs.shape).reshape(-1)

    mask = np.zeros(coeffs.shape, dtype=bool)
    mask.flat[positions] = True

    vector = FpmpVector(
        values=values.reshape(-1),
        positions=positions,
        grid=grid,
        coeff_shape=coeffs.shape,
    )
    return vector, mask


def fdc(img: ImageField, r: int) -> ImageField:
    """
    Framelet dark channel: sliding r x r minimum on every band.

    Args:
        img (ImageField): image of shape (m, n) or (m, n, c)
        r (int): odd window size (centered window)

    Raises:
        ParameterError: r even or < 1

    Returns:
        ImageField: (3m, 3n) map, band (i, j) tiled at block row i, block col j
    """
    _check_patch_size(r)
    if r % 2 == 0:
        raise ParameterError(f"FDC window must be odd, got {r}")

    bands = _channel_min(framelet_analysis(img), spatial_ndim=4)
    minima = ndimage.minimum_filter(bands, size=(1, 1, r, r), mode="wrap")
    rows, cols = minima.shape[2:]
    return minima.transpose(0, 2, 1, 3).reshape(3 * rows, 3 * cols)


def patch_minima(img: ImageField, r: int) -> np.ndarray:
    """Patch-wise minimal pixels on raw pixels (no framelet), flattened."""
    _check_patch_size(r)
    gray = _channel_min(np.asarray(img, dtype=np.float64), spatial_ndim=2)
    blocks, _ = _patch_blocks(gray[..., np.newaxis], r)
    return blocks.min(axis=-1).reshape(-1)


def dark_channel(img: ImageField, r: int) -> ImageField:
    """Dark channel on raw pixels: sliding r x r minimum of the channel-min."""
    _check_patch_size(r)
    gray = _channel_min(np.asarray(img, dtype=np.float64), spatial_ndim=2)
    return ndimage.minimum_filter(gray, size=r, mode="wrap")


def zero_count(values: np.ndarray, eps: float = 1e-6) -> int:
    """Number of entries with magnitude below `eps`."""
    return int(np.count_nonzero(np.abs(np.asarray(values)) < eps))


def split_by_mask(img: ImageField, mask: MinMask) -> tuple[ImageField, ImageField]:
    """
    Split an image into its masked and complementary framelet parts.

    x_p = W^T(M o Wx) and x_hat_p = W^T((1 - M) o Wx), so x_p + x_hat_p = x.

    Args:
        img (ImageField): image
        mask (MinMask): boolean mask with the shape of `framelet_analysis(img)`

    Raises:
        DimensionError: mask shape mismatch

    Returns:
        tuple[ImageField, ImageField]: (x_p, x_hat_p)
    """
    coeffs = framelet_analysis(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != coeffs.shape:
        raise DimensionError(
            f"Mask shape {mask.shape} does not match coefficients {coeffs.shape}"
        )
    x_p = framelet_synthesis(np.where(mask, coeffs, 0.0))
    x_hat_p = framelet_synthesis(np.where(mask, 0.0, coeffs))
    return x_p, x_hat_p


def scatter_minima(n: FpmpVector, mask: MinMask) -> ImageField:
    """
    Place FPMP values back at their coefficient positions and synthesize.

    Computes W^T P^T n: zero coefficients except at the masked minima.

    Args:
        n (FpmpVector): values to scatter
        mask (MinMask): selection mask the positions must belong to

    Raises:
        DimensionError: length or shape mismatch with the mask

    Returns:
        ImageField: synthesized image
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(n.coeff_shape):
        raise DimensionError(
            f"Mask shape {mask.shape} does not match vector layout {n.coeff_shape}"
        )
    set_bits = int(np.count_nonzero(mask))
    if len(n) != set_bits:
        raise DimensionError(f"Vector has {len(n)} entries, mask has {set_bits} bits")
    if not np.all(mask.flat[n.positions]):
        raise DimensionError("Vector positions are not selected by the mask")

    coeffs = np.zeros(mask.shape)
    coeffs.flat[n.positions] = n.values
    return framelet_synthesis(coeffs)
