"""Blind Poisson deblurring: alternate the non-blind solver and a kernel update.

The kernel step is a Richardson-Lucy multiplicative update damped by a total
variation term on the kernel, followed by projection onto the simplex
(non-negative entries summing to 1). The kernel is estimated against a
strongly regularized image (a smaller mu), small kernel entries are cleared
after each outer iteration, and the returned image comes from a last
non-blind solve with the estimated kernel and the user's settings.
"""
import logging
from typing import Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, validator
from scipy import fft

from src.exceptions import (
    DegenerateKernelError,
    DimensionError,
    ParameterError,
    SolverDivergenceError,
)
from src.features.convolution import (
    ImageField,
    Kernel,
    conv2_periodic,
    kernel_anchor,
)
from src.models.metrics import psnr, rel_change, ssim
from src.models.solver import (
    SolverConfig,
    make_config,
    objective_energy,
    solve_nonblind,
)

logger = logging.getLogger(__name__)

BLIND_HISTORY_COLUMNS = [
    "outer",
    "inner_iters",
    "rel_change",
    "kernel_change",
    "energy",
    "psnr",
    "ssim",
]

# Regularizes |grad k| and the ratio y / (x * k)
KERNEL_EPS = 1e-8


class BlindConfig(BaseModel):
    """Settings of the alternating image / kernel estimation."""

    inner: SolverConfig = Field(default_factory=SolverConfig)
    varrho_over_mu: float = Field(0.1, ge=0, description="kernel TV weight over mu")
    kernel_size: tuple[int, int] = (9, 9)
    outer_tol: float = Field(1e-3, gt=0)
    outer_max_iter: int = Field(30, ge=1)
    inner_max_iter: int = Field(30, ge=1)
    kernel_iters: int = Field(20, ge=1, description="kernel updates per outer step")
    estimate_mu_scale: float = Field(
        0.05, gt=0, le=1, description="mu factor of the kernel-estimation solves"
    )
    kernel_threshold: float = Field(
        0.05, ge=0, lt=1, description="entries below this share of the max are zeroed"
    )
    final_restore: bool = True
    boundary_prep: bool = True

    class Config:
        extra = "forbid"

    @validator("kernel_size")
    def check_odd(cls, size: tuple[int, int]) -> tuple[int, int]:
        if any(s < 1 or s % 2 == 0 for s in size):
            raise ValueError(f"kernel_size must be odd and positive, got {size}")
        return size


def _forward_differences(k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences with a zero last row/column (Neumann boundary)."""
    grad_x = np.zeros_like(k)
    grad_y = np.zeros_like(k)
    grad_x[:-1, :] = k[1:, :] - k[:-1, :]
    grad_y[:, :-1] = k[:, 1:] - k[:, :-1]
    return grad_x, grad_y


def kernel_tv_divergence(k: Kernel) -> np.ndarray:
    """
    Curvature div(grad k / |grad k|) of a kernel.

    Args:
        k (Kernel): 2-D kernel

    Returns:
        np.ndarray: divergence, same shape as k
    """
    k = np.asarray(k, dtype=np.float64)
    grad_x, grad_y = _forward_differences(k)
    magnitude = np.sqrt(grad_x**2 + grad_y**2 + KERNEL_EPS**2)
    normal_x = grad_x / magnitude
    normal_y = grad_y / magnitude

    # Backward differences, the negative adjoint of the forward ones
    div = normal_x.copy()
    div[1:, :] -= normal_x[:-1, :]
    div += normal_y
    div[:, 1:] -= normal_y[:, :-1]
    return div


def kernel_tv(k: Kernel) -> float:
    """Isotropic total variation of a kernel."""
    grad_x, grad_y = _forward_differences(np.asarray(k, dtype=np.float64))
    return float(np.sum(np.sqrt(grad_x**2 + grad_y**2)))


def _correlate_on_support(
    ratio: ImageField,
    x: ImageField,
    shape: tuple[int, int],
) -> np.ndarray:
    """
    sum_i ratio(i) x(i - d) for every kernel offset d, summed over channels.

    Row a of the kernel maps to offset d = a - anchor, taken modulo the image.
    """
    spectrum = fft.fft2(ratio, axes=(0, 1)) * np.conj(fft.fft2(x, axes=(0, 1)))
    full = np.real(fft.ifft2(spectrum, axes=(0, 1)))
    if full.ndim == 3:
        full = full.sum(axis=-1)

    anchor = kernel_anchor(shape)
    rows = (np.arange(shape[0]) - anchor[0]) % full.shape[0]
    cols = (np.arange(shape[1]) - anchor[1]) % full.shape[1]
    return full[np.ix_(rows, cols)]


def update_kernel(
    k_prev: Kernel,
    x: ImageField,
    y: ImageField,
    varrho_over_mu: float,
) -> Kernel:
    """
    One TV-damped Richardson-Lucy step on the kernel, then simplex projection.

        d   = 1 - varrho_over_mu div(grad k / |grad k|) / sum(x)
        k_t = k_prev / d * Corr(x, y / (x * k_prev)) / sum(x)
        k   = max(k_t, 0) / sum(max(k_t, 0))

    This is the fixed-point step of mu KL(y, x * k) + varrho TV(k) in k; for
    an image of unit mass d reduces to 1 - varrho_over_mu div(...).

    Args:
        k_prev (Kernel): current kernel
        x (ImageField): current image estimate, >= 0
        y (ImageField): observed counts, >= 0
        varrho_over_mu (float): kernel TV weight (0 gives plain Richardson-Lucy)

    Raises:
        DimensionError: x and y differ in shape
        DegenerateKernelError: every entry clipped to zero

    Returns:
        Kernel: non-negative kernel summing to 1
    """
    k_prev = np.asarray(k_prev, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"Image shapes differ: {x.shape} vs {y.shape}")
    if varrho_over_mu < 0:
        raise ParameterError(f"varrho_over_mu must be >= 0, got {varrho_over_mu}")

    ratio = y / np.maximum(conv2_periodic(x, k_prev), KERNEL_EPS)
    corr = _correlate_on_support(ratio, x, k_prev.shape)
    mass = x.sum()
    if mass <= 0:
        mass = 1.0
    corr = corr / mass

    damping = 1.0 - varrho_over_mu * kernel_tv_divergence(k_prev) / mass
    denominator = np.maximum(damping, KERNEL_EPS)
    k_t = np.maximum(k_prev / denominator * corr, 0.0)

    kernel_mass = k_t.sum()
    if not np.isfinite(kernel_mass) or kernel_mass <= 0:
        raise DegenerateKernelError("Kernel update clipped every entry to zero")
    return k_t / kernel_mass


def threshold_kernel(k: Kernel, fraction: float) -> Kernel:
    """Zero the entries below `fraction` of the largest one, then renormalize."""
    k = np.asarray(k, dtype=np.float64)
    if not 0 <= fraction < 1:
        raise ParameterError(f"Threshold fraction must be in [0, 1), got {fraction}")
    kept = np.where(k >= fraction * k.max(), k, 0.0)
    return kept / kept.sum()


def boundary_preprocess(y: ImageField, k: Kernel) -> ImageField:
    """
    Edge taper: blend a border band of the image into its periodic blur.

    The band has width w = max(l, s). Each pixel is weighted by the product
    of a raised-cosine ramp 0.5 (1 - cos(pi d / w)) along rows and along
    columns, d being the distance to the closest edge; pixels at distance
    >= w from every edge are returned untouched.

    Args:
        y (ImageField): observed image
        k (Kernel): blur kernel

    Raises:
        DimensionError: kernel larger than the image

    Returns:
        ImageField: tapered image
    """
    y = np.asarray(y, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    width = max(k.shape)

    def ramp(size: int) -> np.ndarray:
        index = np.arange(size)
        distance = np.minimum(index, size - 1 - index).astype(np.float64)
        rising = 0.5 * (1.0 - np.cos(np.pi * distance / width))
        return np.where(distance < width, rising, 1.0)

    weight = np.outer(ramp(y.shape[0]), ramp(y.shape[1]))
    if y.ndim == 3:
        weight = weight[..., np.newaxis]

    blurred = conv2_periodic(y, k)
    return np.where(weight == 1.0, y, weight * y + (1.0 - weight) * blurred)


def blind_energy(x: ImageField, y: ImageField, k: Kernel, cfg: BlindConfig) -> float:
    """Non-blind energy plus varrho ||grad k||_1 with varrho = varrho_over_mu * mu."""
    varrho = cfg.varrho_over_mu * cfg.inner.mu
    return objective_energy(x, y, k, cfg.inner) + varrho * kernel_tv(k)


def solve_blind(
    y: ImageField,
    cfg: Optional[BlindConfig] = None,
    reference: Optional[ImageField] = None,
    peak: Optional[float] = None,
) -> tuple[ImageField, Kernel, pd.DataFrame]:
    """
    Estimate both the image and the kernel from Poisson counts.

    - start from the uniform kernel of `cfg.kernel_size`
    - taper the image borders once (unless `cfg.boundary_prep` is off)
    - alternate a warm-started non-blind solve of `inner_max_iter` iterations,
      with mu scaled by `estimate_mu_scale`, and `kernel_iters` kernel updates
      followed by `threshold_kernel`
    - stop when the relative image change reaches `outer_tol`
    - restore the image once more with `cfg.inner` and the final kernel
      (unless `final_restore` is off, in which case the last estimate is kept)

    Args:
        y (ImageField): observed counts, >= 0
        cfg (Optional[BlindConfig]): settings, defaults if omitted
        reference (Optional[ImageField]): clean image for PSNR/SSIM tracking
        peak (Optional[float]): PSNR/SSIM peak, defaults to reference.max()

    Raises:
        DimensionError: kernel size larger than the image
        SolverDivergenceError: inner failure, tagged with the outer iteration
        DegenerateKernelError: kernel update collapsed

    Returns:
        tuple[ImageField, Kernel, pd.DataFrame]: image, kernel and the
            per-outer-iteration history of the estimation
    """
    cfg = cfg or BlindConfig()
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise ParameterError("Observed counts must be non-negative")
    if cfg.kernel_size[0] > y.shape[0] or cfg.kernel_size[1] > y.shape[1]:
        raise DimensionError(
            f"Kernel size {cfg.kernel_size} does not fit in image of shape {y.shape}"
        )
    if reference is not None and peak is None:
        peak = float(np.max(reference))

    k = np.full(cfg.kernel_size, 1.0 / (cfg.kernel_size[0] * cfg.kernel_size[1]))
    # FFT round-off can leave tiny negatives in the tapered band
    data = np.maximum(boundary_preprocess(y, k), 0.0) if cfg.boundary_prep else y
    estimate_cfg = make_config(
        cfg.inner,
        mu=cfg.inner.mu * cfg.estimate_mu_scale,
        max_iter=cfg.inner_max_iter,
    )
    logger.info(
        "Blind solve of %s image: kernel %s, varrho/mu=%g, estimation mu=%g, "
        "boundary prep %s",
        y.shape,
        cfg.kernel_size,
        cfg.varrho_over_mu,
        estimate_cfg.mu,
        cfg.boundary_prep,
    )

    x: Optional[ImageField] = None
    x_prev = data
    history = []
    outer = 0
    for outer in range(1, cfg.outer_max_iter + 1):
        try:
            x, inner_history = solve_nonblind(data, k, estimate_cfg, x0=x)
        except SolverDivergenceError as e:
            raise SolverDivergenceError(
                "Inner solver diverged", e.iteration, outer
            ) from e

        k_prev = k
        for _ in range(cfg.kernel_iters):
            k = update_kernel(k, x, data, cfg.varrho_over_mu)
        k = threshold_kernel(k, cfg.kernel_threshold)

        change = rel_change(x, x_prev) if np.any(x_prev) else float(np.inf)
        record = {
            "outer": outer,
            "inner_iters": len(inner_history),
            "rel_change": change,
            "kernel_change": float(np.abs(k - k_prev).sum()),
            "energy": blind_energy(x, data, k, cfg),
            "psnr": np.nan,
            "ssim": np.nan,
        }
        if reference is not None:
            record["psnr"] = psnr(x, reference, peak)
            record["ssim"] = ssim(x, reference, peak)
        history.append(record)
        logger.info(
            "Outer %d: rel_change %.3e, kernel change %.3e",
            outer,
            change,
            record["kernel_change"],
        )

        x_prev = x
        if change <= cfg.outer_tol:
            logger.info("Blind solve converged after %d outer iterations", outer)
            break

    if cfg.final_restore:
        try:
            x, final_history = solve_nonblind(data, k, cfg.inner)
        except SolverDivergenceError as e:
            raise SolverDivergenceError(
                "Final restoration diverged", e.iteration, outer
            ) from e
        logger.info("Final restoration took %d iterations", len(final_history))
        if reference is not None:
            logger.info("Final restoration PSNR %.2f dB", psnr(x, reference, peak))

    return x, k, pd.DataFrame(history, columns=BLIND_HISTORY_COLUMNS)
