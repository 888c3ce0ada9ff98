"""Restoration quality and convergence metrics."""
import math
from dataclasses import dataclass

import numpy as np

from src.exceptions import DimensionError, ParameterError
from src.features.convolution import ImageField, Kernel

# Value printed instead of +inf for identical images
PSNR_CAP = 99.0


@dataclass(frozen=True)
class QualityReport:
    psnr: float
    ssim: float
    mse: float

    @staticmethod
    def csv_header() -> str:
        return "psnr,ssim,mse"

    def csv_row(self) -> str:
        return f"{min(self.psnr, PSNR_CAP):.4f},{self.ssim:.6f},{self.mse:.6g}"


def _pair(u: ImageField, ref: ImageField) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(u, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if u.shape != ref.shape:
        raise DimensionError(f"Image shapes differ: {u.shape} vs {ref.shape}")
    return u, ref


def mse(u: ImageField, ref: ImageField) -> float:
    u, ref = _pair(u, ref)
    return float(np.mean((u - ref) ** 2))


def psnr(u: ImageField, ref: ImageField, peak: float) -> float:
    """
    Peak signal-to-noise ratio 10 log10(peak^2 / MSE).

    Args:
        u (ImageField): restored image
        ref (ImageField): reference image
        peak (float): maximum possible value

    Raises:
        DimensionError: shape mismatch

    Returns:
        float: dB, +inf for identical images
    """
    if peak <= 0:
        raise ParameterError(f"Peak must be > 0, got {peak}")
    error = mse(u, ref)
    if error == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / error)


def ssim(u: ImageField, ref: ImageField, peak: float) -> float:
    """
    Structural similarity from whole-image statistics (no sliding window).

    Uses C1 = (0.01 peak)^2 and C2 = (0.03 peak)^2, population variances.
    """
    u, ref = _pair(u, ref)
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    mean_u, mean_r = u.mean(), ref.mean()
    var_u, var_r = u.var(), ref.var()
    cov = np.mean((u - mean_u) * (ref - mean_r))

    luminance = (2 * mean_u * mean_r + c1) / (mean_u**2 + mean_r**2 + c1)
    structure = (2 * cov + c2) / (var_u + var_r + c2)
    return float(luminance * structure)


def rel_change(x_new: ImageField, x_old: ImageField) -> float:
    """
    Relative Frobenius change ||x_new - x_old|| / ||x_old||.

    Raises:
        DimensionError: shape mismatch
        ParameterError: x_old is zero
    """
    x_new, x_old = _pair(x_new, x_old)
    denominator = np.linalg.norm(x_old)
    if denominator == 0:
        raise ParameterError("Relative change is undefined for a zero reference")
    return float(np.linalg.norm(x_new - x_old) / denominator)


def quality_report(u: ImageField, ref: ImageField, peak: float) -> QualityReport:
    return QualityReport(
        psnr=psnr(u, ref, peak), ssim=ssim(u, ref, peak), mse=mse(u, ref)
    )


def kernel_correlation(k_est: Kernel, k_true: Kernel) -> float:
    """
    Best Pearson correlation between two kernels over circular shifts.

    Both kernels are zero-padded (centered) to a common size first, so
    estimates of a different size or off by a translation still compare.

    Returns:
        float: correlation in [-1, 1]; 0 if either kernel is constant
    """
    k_est = np.asarray(k_est, dtype=np.float64)
    k_true = np.asarray(k_true, dtype=np.float64)
    shape = (max(k_est.shape[0], k_true.shape[0]), max(k_est.shape[1], k_true.shape[1]))

    def centered(k: np.ndarray) -> np.ndarray:
        out = np.zeros(shape)
        top = (shape[0] - k.shape[0]) // 2
        left = (shape[1] - k.shape[1]) // 2
        out[top : top + k.shape[0], left : left + k.shape[1]] = k
        return out - out.mean()

    a, b = centered(k_est), centered(k_true)
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        return 0.0

    best = -1.0
    for row in range(shape[0]):
        for col in range(shape[1]):
            best = max(best, float(np.sum(np.roll(a, (row, col), axis=(0, 1)) * b)))
    return best / norm


def border_ringing(img: ImageField, width: int = 8) -> float:
    """Variance of the pixels within `width` of any image border."""
    img = np.asarray(img, dtype=np.float64)
    if width < 1:
        raise ParameterError(f"Border width must be >= 1, got {width}")
    band = np.ones(img.shape[:2], dtype=bool)
    band[width:-width, width:-width] = False
    return float(np.var(img[band]))
