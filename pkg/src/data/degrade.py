"""Test problem generation: blur kernels and peak-scaled Poisson noise."""
import logging
import math
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, ValidationError, root_validator

from src.exceptions import ParameterError
from src.features.convolution import ImageField, Kernel, as_kernel, conv2_periodic

logger = logging.getLogger(__name__)

# Sub-pixel samples per axis used to anti-alias disk kernels
DISK_SUPERSAMPLING = 8

_REQUIRED = {
    "gaussian": ("size", "sigma"),
    "motion": ("length",),
    "average": ("size",),
    "disk": ("radius",),
}


class PsfSpec(BaseModel):
    """Point spread function description.

    Only the parameters of `kind` are used:
    gaussian (size, sigma), motion (length, angle in degrees), average (size),
    disk (radius).
    """

    kind: Literal["gaussian", "motion", "average", "disk"]
    size: Optional[int] = Field(None, gt=0)
    sigma: Optional[float] = Field(None, gt=0)
    length: Optional[float] = Field(None, gt=0)
    angle: float = 0.0
    radius: Optional[float] = Field(None, gt=0)

    class Config:
        extra = "forbid"

    @root_validator(skip_on_failure=True)
    def check_kind_params(cls, values: dict) -> dict:
        required = _REQUIRED[values["kind"]]
        missing = [name for name in required if values.get(name) is None]
        if missing:
            raise ValueError(f"{values['kind']} kernel needs {', '.join(missing)}")
        return values


class NoiseSpec(BaseModel):
    """Poisson noise level (peak photon count) and random seed."""

    peak: float = Field(..., gt=0)
    seed: int = Field(0, ge=0)

    class Config:
        extra = "forbid"


def parse_psf_spec(text: str) -> PsfSpec:
    """
    Parse `gaussian:SIZE:SIGMA`, `motion:LENGTH:ANGLE`, `average:SIZE` or
    `disk:RADIUS`.

    Raises:
        ParameterError: unknown kind, wrong arity, or invalid values
    """
    kind, *params = text.strip().lower().split(":")
    names = {
        "gaussian": ("size", "sigma"),
        "motion": ("length", "angle"),
        "average": ("size",),
        "disk": ("radius",),
    }
    if kind not in names:
        raise ParameterError(f"Unknown PSF kind '{kind}' in '{text}'")
    if len(params) != len(names[kind]):
        raise ParameterError(
            f"PSF '{kind}' expects {len(names[kind])} parameter(s), got '{text}'"
        )

    try:
        return PsfSpec(kind=kind, **dict(zip(names[kind], params)))
    except ValidationError as e:
        raise ParameterError(f"Invalid PSF '{text}': {e}") from e


def _gaussian(size: int, sigma: float) -> np.ndarray:
    coords = np.arange(size) - (size - 1) / 2.0
    rows, cols = np.meshgrid(coords, coords, indexing="ij")
    return np.exp(-(rows**2 + cols**2) / (2.0 * sigma**2))


def _disk(radius: float) -> np.ndarray:
    half = math.ceil(radius)
    size = 2 * half + 1
    step = 1.0 / DISK_SUPERSAMPLING
    # Sub-pixel centers of every pixel, relative to the kernel center
    offsets = (np.arange(DISK_SUPERSAMPLING) + 0.5) * step - 0.5
    coords = (np.arange(size)[:, None] - half + offsets[None, :]).reshape(-1)
    rows, cols = np.meshgrid(coords, coords, indexing="ij")
    inside = (rows**2 + cols**2 <= radius**2).astype(np.float64)
    blocks = inside.reshape(size, DISK_SUPERSAMPLING, size, DISK_SUPERSAMPLING)
    return blocks.mean(axis=(1, 3))


def _motion(length: float, angle: float) -> np.ndarray:
    """
    Line segment through the kernel center, splatted with bilinear weights.

    The angle is counter-clockwise from the horizontal axis, so rows go up.
    """
    half = (length - 1.0) / 2.0
    radius = math.ceil(half)
    size = 2 * radius + 1
    if radius == 0:
        return np.ones((1, 1))

    theta = math.radians(angle)
    # 16 samples per pixel, aligned with pixel centers for integer lengths
    samples = np.linspace(-half, half, round(32 * half) + 1)
    rows = radius - samples * math.sin(theta)
    cols = radius + samples * math.cos(theta)

    row0 = np.floor(rows).astype(int)
    col0 = np.floor(cols).astype(int)
    d_row = rows - row0
    d_col = cols - col0

    # One extra row and column absorb the zero-weight neighbours at the far edge
    acc = np.zeros((size + 1, size + 1))
    np.add.at(acc, (row0, col0), (1 - d_row) * (1 - d_col))
    np.add.at(acc, (row0 + 1, col0), d_row * (1 - d_col))
    np.add.at(acc, (row0, col0 + 1), (1 - d_row) * d_col)
    np.add.at(acc, (row0 + 1, col0 + 1), d_row * d_col)
    return acc[:size, :size]


def make_psf(spec: PsfSpec) -> Kernel:
    """
    Build a normalized blur kernel.

    Args:
        spec (PsfSpec): kernel kind and its parameters

    Returns:
        Kernel: non-negative kernel summing to 1
    """
    if spec.kind == "gaussian":
        raw = _gaussian(spec.size, spec.sigma)
    elif spec.kind == "average":
        raw = np.ones((spec.size, spec.size))
    elif spec.kind == "disk":
        raw = _disk(spec.radius)
    else:
        raw = _motion(spec.length, spec.angle)

    kernel = as_kernel(raw)
    logger.debug("Built %s kernel of shape %s", spec.kind, kernel.shape)
    return kernel


def peak_scale(img: ImageField, peak: float) -> float:
    """Factor that maps the maximum of `img` to `peak`."""
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0):
        raise ParameterError("Image to corrupt has negative values")
    maximum = float(img.max()) if img.size else 0.0
    if maximum <= 0:
        raise ParameterError("Cannot scale an all-zero image to a peak count")
    return peak / maximum


def poisson_corrupt(img: ImageField, noise: NoiseSpec) -> ImageField:
    """
    Draw Poisson counts from an image scaled so its maximum equals the peak.

    The result stays in count units. The same seed gives the same counts.

    Args:
        img (ImageField): non-negative image
        noise (NoiseSpec): peak and seed

    Raises:
        ParameterError: negative or all-zero image

    Returns:
        ImageField: integer-valued float64 counts
    """
    img = np.asarray(img, dtype=np.float64)
    scale = peak_scale(img, noise.peak)
    rng = np.random.default_rng(noise.seed)
    return rng.poisson(img * scale).astype(np.float64)


def degrade(
    img: ImageField,
    psf: PsfSpec,
    noise: NoiseSpec,
) -> tuple[ImageField, float]:
    """
    Forward model: periodic blur, then Poisson corruption.

    Args:
        img (ImageField): clean non-negative image
        psf (PsfSpec): blur kernel
        noise (NoiseSpec): peak and seed

    Returns:
        tuple[ImageField, float]: counts and the scale applied to the blurred
            image (multiply the clean image by it to compare in count units)
    """
    blurred = np.clip(conv2_periodic(img, make_psf(psf)), 0.0, None)
    scale = peak_scale(blurred, noise.peak)
    counts = poisson_corrupt(blurred, noise)
    logger.info(
        "Degraded %s image with %s kernel at peak %g (scale %.4g)",
        img.shape,
        psf.kind,
        noise.peak,
        scale,
    )
    return counts, scale
