"""Non-blind Poisson deblurring by ADMM.

Model, for counts y, kernel k and image x >= 0:

    min  mu <1, kx - y log kx> + lam ||P_w x||_0 + ||grad_alpha x||_{l0|l1}

where P_w x are the framelet patch-wise minimal pixels (FPMP). The splitting
v = kx, m = x, z = grad_alpha x, n = P_w x gives one closed-form update per
variable; the x-update solves two FFT-diagonal systems, one for the masked
framelet part x_p and one for its complement x_hat_p.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, ValidationError
from scipy import fft
from sklearn.model_selection import ParameterGrid

from src.exceptions import ConfigError, ParameterError, SolverDivergenceError
from src.features.convolution import (
    FreqField,
    ImageField,
    Kernel,
    as_kernel,
    broadcast_symbol,
    psf2otf,
)
from src.features.fracgrad import GlCoeffs, GradPair, frac_symbol, gl_coeffs
from src.features.framelet import (
    FpmpVector,
    MinMask,
    fpmp,
    scatter_minima,
    split_by_mask,
)
from src.models.metrics import psnr, rel_change, ssim

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["iter", "energy", "rel_change", "psnr", "ssim"]

# Clamp for kx inside the log of the data term
LOG_EPS = 1e-12
# Magnitude above which an entry counts as non-zero in l0 terms
L0_EPS = 1e-10
# The penalties grow when the relative change shrinks by less than this factor
STALL_RATIO = 0.99


class SolverConfig(BaseModel):
    """Penalties, prior weights and stopping rule of the non-blind solver."""

    mu: float = Field(100.0, gt=0, description="data fidelity weight")
    lam: float = Field(1.0, ge=0, alias="lambda", description="FPMP l0 weight")
    rho: float = Field(1.0, gt=0)
    eta: float = Field(1.0, gt=0)
    gamma: float = Field(0.01, gt=0)
    beta: float = Field(0.01, gt=0)
    alpha: float = Field(0.5, gt=0, description="fractional order")
    gl_length: int = Field(12, ge=1)
    patch_size: int = Field(15, ge=1)
    norm: Literal["l0", "l1"] = "l1"
    tol: float = Field(1e-4, gt=0)
    max_iter: int = Field(300, ge=1)
    sweeps: int = Field(1, ge=1, description="Gauss-Seidel sweeps of the x-update")
    penalty_growth: float = Field(
        1.0, ge=1.0, description="penalty factor applied when the change stalls"
    )

    class Config:
        extra = "forbid"
        allow_population_by_field_name = True


def make_config(base: Optional[SolverConfig] = None, **params: Any) -> SolverConfig:
    """Validated copy of `base` (or of the defaults) with `params` overridden."""
    values = base.dict() if base is not None else {}
    values.update(params)
    try:
        return SolverConfig(**values)
    except ValidationError as e:
        raise ConfigError(f"Invalid solver configuration: {e}") from e


@dataclass(frozen=True)
class XOperators:
    """Frequency symbols shared by every iteration of one solve."""

    otf: FreqField
    grad_h: FreqField
    grad_v: FreqField
    grad_power: np.ndarray
    coeffs: GlCoeffs

    @classmethod
    def build(
        cls, k: Kernel, shape: tuple[int, ...], cfg: SolverConfig
    ) -> "XOperators":
        coeffs = gl_coeffs(cfg.alpha, cfg.gl_length)
        grad_h, grad_v, grad_power = frac_symbol(coeffs, shape)
        return cls(psf2otf(k, shape[:2]), grad_h, grad_v, grad_power, coeffs)

    def blur(self, img: ImageField) -> ImageField:
        return _spatial(_spectrum(img) * broadcast_symbol(self.otf, img))

    def gradient(self, img: ImageField) -> GradPair:
        spectrum = _spectrum(img)
        return GradPair(
            _spatial(spectrum * broadcast_symbol(self.grad_h, img)),
            _spatial(spectrum * broadcast_symbol(self.grad_v, img)),
        )


@dataclass
class AdmmState:
    """Primal, split and dual variables of the ADMM iteration."""

    x: ImageField
    v: ImageField
    m: ImageField
    z: GradPair
    n: FpmpVector
    mask: MinMask
    p1: ImageField
    p2: ImageField
    p3: GradPair
    iteration: int = 0
    history: list[dict[str, float]] = field(default_factory=list)


def _spectrum(img: np.ndarray) -> FreqField:
    return fft.fft2(img, axes=(0, 1))


def _spatial(spectrum: FreqField) -> ImageField:
    return np.real(fft.ifft2(spectrum, axes=(0, 1)))


def update_v(
    kx: ImageField,
    p1: ImageField,
    y: ImageField,
    mu: float,
    gamma: float,
) -> ImageField:
    """
    Positive root of gamma v^2 + (mu - gamma kx - p1) v - mu y = 0.

    This is the minimizer of mu <1, v - y log v> + gamma/2 ||kx - v + p1/gamma||^2.
    The root is evaluated in the form that avoids cancellation for either
    sign of b = gamma kx + p1 - mu.

    Args:
        kx (ImageField): blurred current estimate
        p1 (ImageField): multiplier of the constraint v = kx
        y (ImageField): observed counts
        mu (float): data weight
        gamma (float): penalty

    Returns:
        ImageField: v, positive wherever y > 0
    """
    b = gamma * kx + p1 - mu
    root = np.sqrt(b**2 + 4.0 * mu * gamma * y)
    negative = b < 0
    denominator = np.where(negative, root - b, 1.0)
    return np.where(negative, 2.0 * mu * y / denominator, (b + root) / (2.0 * gamma))


def solve_x_systems(
    xi1: ImageField,
    xi2: ImageField,
    xi3: GradPair,
    xi7: ImageField,
    x_p: ImageField,
    ops: XOperators,
    cfg: SolverConfig,
) -> tuple[ImageField, ImageField]:
    """
    Alternate the complement solve and the masked-part solve.

    Each sweep computes, with F the 2-D DFT, S = |F(grad_h)|^2 + |F(grad_v)|^2
    and D = gamma |F(k)|^2 + eta + beta S,

        x_hat_p = F^-1[rhs(xi8, xi9, xi10) / D]
        x_p     = F^-1[(rhs(xi4, xi5, xi6) + rho F(xi7)) / (D + rho)]

    with rhs(a, b, c) = gamma conj(F(k)) F(a) + eta F(b) + beta conj(F(grad)) F(c),
    xi8..xi10 the targets xi1..xi3 minus the contribution of the previous x_p,
    and xi4..xi6 the targets minus the contribution of the new x_hat_p.

    Args:
        xi1 (ImageField): target of kx (v - p1 / gamma)
        xi2 (ImageField): target of x (m - p2 / eta)
        xi3 (GradPair): target of grad_alpha x (z - p3 / beta)
        xi7 (ImageField): synthesized FPMP values W^T P^T n
        x_p (ImageField): masked part of the previous estimate
        ops (XOperators): frequency symbols
        cfg (SolverConfig): penalties and number of sweeps

    Returns:
        tuple[ImageField, ImageField]: (x_p, x_hat_p)
    """

    def sym(symbol: FreqField) -> FreqField:
        return broadcast_symbol(symbol, xi1)

    otf, grad_h, grad_v = sym(ops.otf), sym(ops.grad_h), sym(ops.grad_v)
    f1, f2, f7 = _spectrum(xi1), _spectrum(xi2), _spectrum(xi7)
    f3h, f3v = _spectrum(xi3[0]), _spectrum(xi3[1])

    def rhs(part: FreqField) -> FreqField:
        return (
            cfg.gamma * np.conj(otf) * (f1 - otf * part)
            + cfg.eta * (f2 - part)
            + cfg.beta
            * (
                np.conj(grad_h) * (f3h - grad_h * part)
                + np.conj(grad_v) * (f3v - grad_v * part)
            )
        )

    power = sym(ops.grad_power)
    denominator = cfg.gamma * np.abs(otf) ** 2 + cfg.eta + cfg.beta * power
    spectrum_p = _spectrum(x_p)
    for _ in range(cfg.sweeps):
        spectrum_hat = rhs(spectrum_p) / denominator
        spectrum_p = (rhs(spectrum_hat) + cfg.rho * f7) / (denominator + cfg.rho)

    return _spatial(spectrum_p), _spatial(spectrum_hat)


def update_x(
    state: AdmmState,
    k: Kernel,
    cfg: SolverConfig,
    ops: Optional[XOperators] = None,
) -> ImageField:
    """
    Image update with the FPMP mask of the current estimate held fixed.

    Args:
        state (AdmmState): current iterates (v, m, z, n, mask and multipliers)
        k (Kernel): blur kernel
        cfg (SolverConfig): penalties
        ops (Optional[XOperators]): cached symbols, built from k if omitted

    Returns:
        ImageField: x = x_p + x_hat_p
    """
    if ops is None:
        ops = XOperators.build(k, state.x.shape, cfg)

    xi1 = state.v - state.p1 / cfg.gamma
    xi2 = state.m - state.p2 / cfg.eta
    xi3 = GradPair(
        state.z.h - state.p3.h / cfg.beta,
        state.z.v - state.p3.v / cfg.beta,
    )
    xi7 = scatter_minima(state.n, state.mask)
    x_p, _ = split_by_mask(state.x, state.mask)

    x_p, x_hat_p = solve_x_systems(xi1, xi2, xi3, xi7, x_p, ops, cfg)
    return x_p + x_hat_p


def update_n(px: FpmpVector, lam: float, rho: float) -> FpmpVector:
    """Hard threshold: keep entries with px^2 >= 2 lam / rho."""
    values = px.values
    return px.with_values(np.where(values**2 >= 2.0 * lam / rho, values, 0.0))


def update_z(
    grad: GradPair,
    p3: GradPair,
    beta: float,
    norm: Literal["l0", "l1"],
) -> GradPair:
    """
    Proximal step of the gradient prior at w = grad + p3 / beta.

    l1: soft threshold sign(w) max(|w| - 1/beta, 0).
    l0: hard threshold, keep w where w^2 >= 2 / beta.
    """
    out = []
    for g, p in zip(grad, p3):
        w = g + p / beta
        if norm == "l1":
            out.append(np.sign(w) * np.maximum(np.abs(w) - 1.0 / beta, 0.0))
        elif norm == "l0":
            out.append(np.where(w**2 >= 2.0 / beta, w, 0.0))
        else:
            raise ParameterError(f"Unknown norm '{norm}', expected l0 or l1")
    return GradPair(*out)


def update_m(x: ImageField, p2: ImageField, eta: float) -> ImageField:
    """Projection of x + p2 / eta onto the non-negative orthant."""
    return np.maximum(x + p2 / eta, 0.0)


def update_multipliers(
    state: AdmmState,
    k: Kernel,
    cfg: SolverConfig,
    ops: Optional[XOperators] = None,
) -> tuple[ImageField, ImageField, GradPair]:
    """
    Dual ascent on the three constraints.

    Returns:
        tuple: p1 + gamma (kx - v), p2 + eta (x - m), p3 + beta (grad_alpha x - z)
    """
    if ops is None:
        ops = XOperators.build(k, state.x.shape, cfg)

    kx = ops.blur(state.x)
    grad = ops.gradient(state.x)
    p1 = state.p1 + cfg.gamma * (kx - state.v)
    p2 = state.p2 + cfg.eta * (state.x - state.m)
    p3 = GradPair(
        state.p3.h + cfg.beta * (grad.h - state.z.h),
        state.p3.v + cfg.beta * (grad.v - state.z.v),
    )
    return p1, p2, p3


def objective_energy(
    x: ImageField,
    y: ImageField,
    k: Kernel,
    cfg: SolverConfig,
    ops: Optional[XOperators] = None,
) -> float:
    """
    Value of the deblurring objective at x.

    Args:
        x (ImageField): estimate
        y (ImageField): observed counts
        k (Kernel): blur kernel
        cfg (SolverConfig): weights and priors
        ops (Optional[XOperators]): cached symbols

    Returns:
        float: energy, +inf if x has a negative entry
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(x < 0):
        return float(np.inf)
    if ops is None:
        ops = XOperators.build(k, x.shape, cfg)

    kx = ops.blur(x)
    log_term = np.where(y > 0, y * np.log(np.maximum(kx, LOG_EPS)), 0.0)
    data = cfg.mu * float(np.sum(kx - log_term))

    minima, _ = fpmp(x, cfg.patch_size)
    prior = cfg.lam * int(np.count_nonzero(np.abs(minima.values) > L0_EPS))

    grad = ops.gradient(x)
    if cfg.norm == "l1":
        regularizer = float(np.abs(grad.h).sum() + np.abs(grad.v).sum())
    else:
        regularizer = float(
            np.count_nonzero(np.abs(grad.h) > L0_EPS)
            + np.count_nonzero(np.abs(grad.v) > L0_EPS)
        )

    return data + prior + regularizer


def history_frame(history: list[dict[str, float]]) -> pd.DataFrame:
    """Per-iteration records as a DataFrame (psnr and ssim NaN without reference)."""
    return pd.DataFrame(history, columns=HISTORY_COLUMNS)


def grow_penalties(cfg: SolverConfig) -> SolverConfig:
    """Copy of `cfg` with gamma, eta, beta and rho multiplied by its growth factor."""
    factor = cfg.penalty_growth
    return cfg.copy(
        update={
            "gamma": cfg.gamma * factor,
            "eta": cfg.eta * factor,
            "beta": cfg.beta * factor,
            "rho": cfg.rho * factor,
        }
    )


def init_state(
    y: ImageField,
    ops: XOperators,
    cfg: SolverConfig,
    x0: Optional[ImageField] = None,
) -> AdmmState:
    """
    Starting point of the iteration.

    Cold start: x = y, n = FPMP(y), z = grad_alpha y, everything else 0.
    Warm start from x0: the same with x = m = x0.
    """
    warm = x0 is not None
    x = np.array(x0 if warm else y, dtype=np.float64)
    if warm and x.shape != y.shape:
        raise ParameterError(f"Warm start shape {x.shape} differs from data {y.shape}")

    n, mask = fpmp(x, cfg.patch_size)
    zeros = np.zeros_like(x)
    return AdmmState(
        x=x,
        v=y.copy(),
        m=x.copy() if warm else zeros.copy(),
        z=ops.gradient(x),
        n=n,
        mask=mask,
        p1=zeros.copy(),
        p2=zeros.copy(),
        p3=GradPair(zeros.copy(), zeros.copy()),
    )


def solve_nonblind(
    y: ImageField,
    k: Kernel,
    cfg: Optional[SolverConfig] = None,
    reference: Optional[ImageField] = None,
    peak: Optional[float] = None,
    x0: Optional[ImageField] = None,
) -> tuple[ImageField, pd.DataFrame]:
    """
    Restore a Poisson-blurred image with a known kernel.

    Each iteration runs update_v, update_x, the FPMP refresh with update_n,
    update_z, update_m and the multiplier updates, then records the energy
    (of the non-negative part of x) and the relative change. The loop stops
    once the relative change reaches `cfg.tol` or after `cfg.max_iter`.

    Args:
        y (ImageField): observed counts, >= 0
        k (Kernel): blur kernel
        cfg (Optional[SolverConfig]): solver settings, defaults if omitted
        reference (Optional[ImageField]): clean image for PSNR/SSIM tracking
        peak (Optional[float]): PSNR/SSIM peak, defaults to reference.max()
        x0 (Optional[ImageField]): warm start

    Raises:
        ParameterError: negative data or bad warm start
        SolverDivergenceError: an iterate became non-finite

    Returns:
        tuple[ImageField, pd.DataFrame]: restored image (>= 0) and history
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(y, dtype=np.float64)
    if np.any(y < 0):
        raise ParameterError("Observed counts must be non-negative")
    k = as_kernel(k)
    if reference is not None and peak is None:
        peak = float(np.max(reference))

    ops = XOperators.build(k, y.shape, cfg)
    state = init_state(y, ops, cfg, x0)
    logger.info(
        "Non-blind solve of %s image: "
        "mu=%g lam=%g gamma=%g eta=%g beta=%g rho=%g alpha=%g norm=%s",
        y.shape,
        cfg.mu,
        cfg.lam,
        cfg.gamma,
        cfg.eta,
        cfg.beta,
        cfg.rho,
        cfg.alpha,
        cfg.norm,
    )

    # penalties of the current iteration, grown from cfg when the change stalls
    run = cfg
    previous = float(np.inf)
    converged = False
    for iteration in range(1, cfg.max_iter + 1):
        state.iteration = iteration
        x_old = state.x

        state.v = update_v(ops.blur(x_old), state.p1, y, run.mu, run.gamma)
        state.x = update_x(state, k, run, ops)

        minima, state.mask = fpmp(state.x, run.patch_size)
        state.n = update_n(minima, run.lam, run.rho)
        state.z = update_z(ops.gradient(state.x), state.p3, run.beta, run.norm)
        state.m = update_m(state.x, state.p2, run.eta)
        state.p1, state.p2, state.p3 = update_multipliers(state, k, run, ops)

        if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.v))):
            raise SolverDivergenceError("Non-finite iterate", iteration)

        if np.any(x_old):
            change = rel_change(state.x, x_old)
        else:
            # all-zero start: stop only if x is still zero
            change = float(np.inf) if np.any(state.x) else 0.0
        estimate = np.maximum(state.x, 0.0)
        record = {
            "iter": iteration,
            "energy": objective_energy(estimate, y, k, cfg, ops),
            "rel_change": change,
            "psnr": np.nan,
            "ssim": np.nan,
        }
        if reference is not None:
            record["psnr"] = psnr(estimate, reference, peak)
            record["ssim"] = ssim(estimate, reference, peak)
        state.history.append(record)
        logger.debug(
            "iter %d: energy %.6g, rel_change %.3e", iteration, record["energy"], change
        )

        if change <= cfg.tol:
            converged = True
            break
        if run.penalty_growth > 1.0 and change > STALL_RATIO * previous:
            run = grow_penalties(run)
            logger.debug("iter %d: penalties grown to gamma=%g", iteration, run.gamma)
        previous = change

    if converged:
        logger.info("Converged after %d iterations", state.iteration)
    else:
        logger.info("Stopped at max_iter=%d (rel_change %.3e)", cfg.max_iter, change)

    return np.maximum(state.x, 0.0), history_frame(state.history)


def grid_search(
    y: ImageField,
    k: Kernel,
    reference: ImageField,
    grid: dict[str, list[Any]],
    base: Optional[SolverConfig] = None,
    peak: Optional[float] = None,
) -> dict[str, Any]:
    """
    Run the solver on every parameter combination and keep the best PSNR.

    Combinations that diverge are logged and skipped.

    Args:
        y (ImageField): observed counts
        k (Kernel): blur kernel
        reference (ImageField): clean image in count units
        grid (dict[str, list[Any]]): SolverConfig field name -> candidate values
        base (Optional[SolverConfig]): settings for the fields not in the grid
        peak (Optional[float]): PSNR peak, defaults to reference.max()

    Raises:
        ConfigError: a grid key is not a solver setting
        ParameterError: every combination diverged

    Returns:
        dict[str, Any]: best config, image, PSNR and history, plus a results
            DataFrame with one row per combination
    """
    base = base or SolverConfig()
    peak = float(np.max(reference)) if peak is None else peak

    best: dict[str, Any] = {}
    rows = []
    for params in ParameterGrid(grid):
        cfg = make_config(base, **params)
        try:
            x, history = solve_nonblind(y, k, cfg)
        except SolverDivergenceError as e:
            logger.warning("Skipping %s: %s", params, e)
            failed = {"psnr": np.nan, "ssim": np.nan, "iterations": e.iteration}
            rows.append({**params, **failed})
            continue

        score = psnr(x, reference, peak)
        rows.append(
            {
                **params,
                "psnr": score,
                "ssim": ssim(x, reference, peak),
                "iterations": len(history),
            }
        )
        logger.info("Grid point %s: PSNR %.2f dB", params, score)
        if not best or score > best["psnr"]:
            best = {"config": cfg, "image": x, "psnr": score, "history": history}

    if not best:
        raise ParameterError("Every parameter combination diverged")

    logger.info("Best grid point: PSNR %.2f dB", best["psnr"])
    return {**best, "results": pd.DataFrame(rows)}
