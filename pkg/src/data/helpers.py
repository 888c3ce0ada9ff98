"""Image, kernel and run configuration files."""

import logging
import os
from typing import Iterable

import numpy as np
from dotenv import dotenv_values
from PIL import Image

from src.exceptions import ConfigError, DimensionError, ParameterError
from src.features.convolution import ImageField, Kernel, as_kernel

logger = logging.getLogger(__name__)

_MAX_VALUE = {8: 255, 16: 65535}


def read_image(path: str) -> tuple[ImageField, int]:
    """
    Read an 8-bit or 16-bit grey or RGB image (PGM, PNG, ...).

    Args:
        path (str): image file

    Raises:
        OSError: unreadable file

    Returns:
        tuple[ImageField, int]: float64 pixel values (not rescaled) and the
            bit depth of the file (8 or 16)
    """
    with Image.open(path) as img:
        if img.mode in ("I", "I;16", "I;16B", "I;16L"):
            data = np.asarray(img.convert("I"), dtype=np.float64)
            bit_depth = 16
        elif img.mode in ("RGB", "RGBA", "P"):
            data = np.asarray(img.convert("RGB"), dtype=np.float64)
            bit_depth = 8
        else:
            data = np.asarray(img.convert("L"), dtype=np.float64)
            bit_depth = 8

    logger.info("Read %s image %s (%d-bit)", data.shape, path, bit_depth)
    return data, bit_depth


def output_bit_depth(img: ImageField, bit_depth: int = 8) -> int:
    """Bit depth to write `img` with: 16 as soon as values exceed 255."""
    if bit_depth == 16 or float(np.max(img)) > _MAX_VALUE[8]:
        return 16
    return 8


def write_image(path: str, img: ImageField, bit_depth: int = 8) -> None:
    """
    Write an image after rounding and clipping to the bit depth range.

    Args:
        path (str): output file, format from the extension
        img (ImageField): pixel values
        bit_depth (int): 8 or 16 (16-bit only for grey images)

    Raises:
        ParameterError: unsupported bit depth
    """
    if bit_depth not in _MAX_VALUE:
        raise ParameterError(f"Bit depth must be 8 or 16, got {bit_depth}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and bit_depth == 16:
        raise ParameterError("16-bit output is only supported for grey images")

    pixels = np.clip(np.rint(img), 0, _MAX_VALUE[bit_depth])
    if bit_depth == 16:
        out = Image.fromarray(pixels.astype(np.int32))
    else:
        out = Image.fromarray(pixels.astype(np.uint8))

    directory = os.path.dirname(path)
    if directory and not os.path.exists(directory):
        logger.info("Creating %s", directory)
        os.makedirs(directory)
    out.save(path)
    logger.info("Saved %s (%d-bit)", path, bit_depth)


def read_kernel(path: str) -> Kernel:
    """
    Read a kernel text file: a "l s" header line, then l rows of s decimals.

    Raises:
        DimensionError: header does not match the rows
        ParameterError: invalid kernel values
    """
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise DimensionError(f"Kernel header must be 'l s' in {path}")
        rows, cols = (int(value) for value in header)
        data = np.loadtxt(f, ndmin=2)

    if data.shape != (rows, cols):
        raise DimensionError(
            f"Kernel header says {(rows, cols)} but {path} holds {data.shape}"
        )
    return as_kernel(data)


def write_kernel(path: str, k: Kernel) -> None:
    """Write a kernel in the "l s" + rows text format."""
    k = np.asarray(k, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{k.shape[0]} {k.shape[1]}\n")
        np.savetxt(f, k, fmt="%.17g")
    logger.info("Saved %s kernel to %s", k.shape, path)


def write_kernel_image(path: str, k: Kernel) -> None:
    """Write a kernel as an 8-bit image, scaled so its maximum is white."""
    k = np.asarray(k, dtype=np.float64)
    peak = k.max()
    write_image(path, k / peak * 255 if peak > 0 else k, bit_depth=8)


def load_run_config(path: str, allowed: Iterable[str]) -> dict[str, str]:
    """
    Read a flat key=value run configuration.

    Args:
        path (str): configuration file
        allowed (Iterable[str]): accepted keys

    Raises:
        FileNotFoundError: missing file
        ConfigError: unknown key, or key without value

    Returns:
        dict[str, str]: raw string values, converted later by the caller
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Run configuration {path} not found")

    values = dotenv_values(path)
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise ConfigError(f"Unknown key(s) in {path}: {', '.join(unknown)}")
    empty = sorted(key for key, value in values.items() if value is None or value == "")
    if empty:
        raise ConfigError(f"Key(s) without value in {path}: {', '.join(empty)}")

    logger.info("Loaded %d setting(s) from %s", len(values), path)
    return {key: str(value) for key, value in values.items()}
