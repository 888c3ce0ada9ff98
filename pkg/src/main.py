"""
Poisson deblurring CLI.

This file defines the command line of the package.

usage: python -m src.main [-h] [-v | -q] {degrade,deblur,blind,priors,evaluate} ...

    degrade   blur a clean image and draw Poisson counts
    deblur    restore an image with a known kernel
    blind     restore an image and estimate its kernel
    priors    histograms of the FPMP, FDC, PMP and DC priors
    evaluate  PSNR, SSIM and MSE of an image against a reference

Every option of a command can also be given in a `--config` file of
key=value lines (keys are option names with underscores); options given on
the command line win over the file.
"""
import argparse
import logging
import os
from typing import Any, Callable, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

import src.data.helpers as data_helpers
from src.data.degrade import NoiseSpec, make_psf, parse_psf_spec
from src.data.degrade import degrade as degrade_image
from src.exceptions import ConfigError, DeblurError
from src.models.blind import BlindConfig, solve_blind
from src.models.metrics import PSNR_CAP, QualityReport, psnr, quality_report
from src.models.solver import SolverConfig, make_config, solve_nonblind
from src.visualization.helpers import (
    PRIORS,
    plot_convergence,
    plot_prior_histograms,
    prior_histograms,
)

logger = logging.getLogger(__name__)

SOLVER_OPTIONS: dict[str, Callable[[str], Any]] = {
    "mu": float,
    "lam": float,
    "gamma": float,
    "eta": float,
    "beta": float,
    "rho": float,
    "alpha": float,
    "gl_length": int,
    "patch_size": int,
    "norm": str,
    "tol": float,
    "max_iter": int,
    "sweeps": int,
    "penalty_growth": float,
}

BLIND_OPTIONS = (
    "varrho_over_mu",
    "outer_tol",
    "outer_max_iter",
    "inner_max_iter",
    "kernel_iters",
    "estimate_mu_scale",
    "kernel_threshold",
)

# Keys that are flags without value; in a config file they take true/false
FLAG_KEYS = {"no_boundary_prep", "no_final_restore"}
TRUE_VALUES = {"1", "true", "yes", "on"}

# Parser bookkeeping entries, never settings
_INTERNAL_KEYS = {"handler", "subparser", "config", "verbose", "quiet", "command"}


def _add_solver_options(parser: argparse.ArgumentParser) -> None:
    for name, kind in SOLVER_OPTIONS.items():
        parser.add_argument(
            f"--{name.replace('_', '-')}",
            type=kind,
            choices=["l0", "l1"] if name == "norm" else None,
            help=f"solver {name} (default {SolverConfig.__fields__[name].default})",
        )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-command per operation."""
    parser = argparse.ArgumentParser(description="Poisson image deblurring.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    degrade = commands.add_parser("degrade", help="blur and add Poisson noise")
    degrade.add_argument("--in", help="clean input image")
    degrade.add_argument(
        "--psf",
        help="gaussian:SIZE:SIGMA, motion:LENGTH:ANGLE, average:SIZE or disk:RADIUS",
    )
    degrade.add_argument("--peak", type=float, help="peak photon count")
    degrade.add_argument("--seed", type=int, help="random seed (default 0)")
    degrade.add_argument("--out", help="degraded image")
    degrade.add_argument("--kout", help="kernel text file (default <out>.kernel.txt)")
    degrade.set_defaults(handler=cmd_degrade, subparser=degrade)

    deblur = commands.add_parser("deblur", help="non-blind restoration")
    deblur.add_argument("--in", help="degraded image")
    deblur.add_argument("--kernel", help="kernel text file")
    deblur.add_argument("--out", help="restored image")
    deblur.add_argument("--curves", help="CSV file for the per-iteration history")
    deblur.add_argument("--ref", help="clean image, in pixel units")
    deblur.add_argument(
        "--scale", type=float, help="count scale printed by degrade (default 1)"
    )
    deblur.add_argument("--plot", help="PNG file for the convergence curves")
    _add_solver_options(deblur)
    deblur.set_defaults(handler=cmd_deblur, subparser=deblur)

    blind = commands.add_parser("blind", help="blind restoration")
    blind.add_argument("--in", help="degraded image")
    blind.add_argument("--ksize", type=int, help="odd kernel size (default 9)")
    blind.add_argument("--out", help="restored image")
    blind.add_argument("--kout", help="kernel text file (default <out>.kernel.txt)")
    blind.add_argument(
        "--no-boundary-prep",
        action="store_true",
        default=None,
        help="skip edge tapering",
    )
    blind.add_argument("--varrho-over-mu", type=float, help="kernel TV weight over mu")
    blind.add_argument("--outer-tol", type=float, help="outer relative change bound")
    blind.add_argument("--outer-max-iter", type=int, help="outer iteration cap")
    blind.add_argument(
        "--inner-max-iter", type=int, help="non-blind iterations per outer step"
    )
    blind.add_argument("--kernel-iters", type=int, help="kernel updates per outer step")
    blind.add_argument(
        "--estimate-mu-scale", type=float, help="mu factor while estimating the kernel"
    )
    blind.add_argument(
        "--kernel-threshold", type=float, help="clear entries below this share of max"
    )
    blind.add_argument(
        "--no-final-restore",
        action="store_true",
        default=None,
        help="return the last estimation image instead of a final restoration",
    )
    blind.add_argument("--curves", help="CSV file for the per-outer-iteration history")
    _add_solver_options(blind)
    blind.set_defaults(handler=cmd_blind, subparser=blind)

    priors = commands.add_parser(
        "priors", help="prior histograms of a clear/blurred pair"
    )
    priors.add_argument("--clear", help="clear image")
    priors.add_argument("--blurred", help="blurred image")
    priors.add_argument("--patch-size", type=int, help="patch size (default 15)")
    priors.add_argument("--out-prefix", help="prefix of the <prefix>_<prior>.csv files")
    priors.add_argument("--bins", type=int, help="histogram bins (default 50)")
    priors.add_argument("--plot", help="PNG file for the histograms")
    priors.set_defaults(handler=cmd_priors, subparser=priors)

    evaluate = commands.add_parser(
        "evaluate", help="quality of an image against a reference"
    )
    evaluate.add_argument("--ref", help="reference image")
    evaluate.add_argument("--img", help="image to evaluate")
    evaluate.add_argument("--peak", type=float, help="peak value (default 255)")
    evaluate.add_argument(
        "--scale", type=float, help="count scale of --img over --ref (default 1)"
    )
    evaluate.set_defaults(handler=cmd_evaluate, subparser=evaluate)

    for sub in (degrade, deblur, blind, priors, evaluate):
        sub.add_argument("--config", help="key=value file with default settings")

    return parser


def collect_settings(args: argparse.Namespace) -> dict[str, Any]:
    """
    Merge command-line options over the values of the `--config` file.

    Raises:
        ConfigError: unknown key or invalid value in the file
        FileNotFoundError: missing file
    """
    values = {
        key: value
        for key, value in vars(args).items()
        if value is not None and key not in _INTERNAL_KEYS
    }
    if not args.config:
        return values

    subparser: argparse.ArgumentParser = args.subparser
    allowed = set(vars(subparser.parse_args([]))) - _INTERNAL_KEYS
    file_values = data_helpers.load_run_config(args.config, allowed)

    argv = []
    for key, raw in file_values.items():
        flag = f"--{key.replace('_', '-')}"
        if key in FLAG_KEYS:
            if raw.strip().lower() in TRUE_VALUES:
                argv.append(flag)
        else:
            argv.extend([flag, raw])
    try:
        from_file = subparser.parse_args(argv)
    except SystemExit as e:
        raise ConfigError(f"Invalid value in {args.config}") from e

    for key, value in vars(from_file).items():
        if value is not None and key not in _INTERNAL_KEYS:
            values.setdefault(key, value)
    return values


def _require(values: dict[str, Any], *keys: str) -> None:
    missing = [key for key in keys if key not in values]
    if missing:
        raise ConfigError(f"Missing required setting(s): {', '.join(missing)}")


def _scale(values: dict[str, Any]) -> float:
    scale = values.get("scale", 1.0)
    if scale <= 0:
        raise ConfigError(f"Scale must be positive, got {scale}")
    return scale


def _solver_config(values: dict[str, Any]) -> SolverConfig:
    return make_config(**{key: values[key] for key in SOLVER_OPTIONS if key in values})


def cmd_degrade(values: dict[str, Any]) -> int:
    """Write the degraded image and its kernel; print the PSNR and the count scale."""
    _require(values, "in", "psf", "peak", "out")
    img, bit_depth = data_helpers.read_image(values["in"])
    psf = parse_psf_spec(values["psf"])
    try:
        noise = NoiseSpec(peak=values["peak"], seed=values.get("seed", 0))
    except ValidationError as e:
        raise ConfigError(f"Invalid noise settings: {e}") from e

    counts, scale = degrade_image(img, psf, noise)
    data_helpers.write_image(
        values["out"],
        counts,
        data_helpers.output_bit_depth(counts, bit_depth),
    )
    kernel_path = values.get("kout", f"{values['out']}.kernel.txt")
    data_helpers.write_kernel(kernel_path, make_psf(psf))

    score = psnr(counts, img * scale, noise.peak)
    print("psnr,scale")
    print(f"{min(score, PSNR_CAP):.4f},{scale:.10g}")
    return 0


def cmd_deblur(values: dict[str, Any]) -> int:
    """Run the non-blind solver and write the restored image."""
    _require(values, "in", "kernel", "out")
    y, bit_depth = data_helpers.read_image(values["in"])
    k = data_helpers.read_kernel(values["kernel"])
    cfg = _solver_config(values)
    reference = None
    if "ref" in values:
        reference = data_helpers.read_image(values["ref"])[0] * _scale(values)

    x, history = solve_nonblind(y, k, cfg, reference=reference)
    out_depth = data_helpers.output_bit_depth(x, bit_depth)
    data_helpers.write_image(values["out"], x, out_depth)

    if "curves" in values:
        history.to_csv(values["curves"], index=False)
        logger.info("Saved history to %s", values["curves"])
    if "plot" in values:
        plot_convergence(history, values["plot"])
    return 0


def cmd_blind(values: dict[str, Any]) -> int:
    """Run the blind solver; write the image, the kernel and its picture."""
    _require(values, "in", "out")
    y, bit_depth = data_helpers.read_image(values["in"])
    size = values.get("ksize", 9)
    settings = {key: values[key] for key in BLIND_OPTIONS if key in values}
    try:
        cfg = BlindConfig(
            inner=_solver_config(values),
            kernel_size=(size, size),
            boundary_prep=not values.get("no_boundary_prep", False),
            final_restore=not values.get("no_final_restore", False),
            **settings,
        )
    except ValidationError as e:
        raise ConfigError(f"Invalid blind settings: {e}") from e

    x, k, history = solve_blind(y, cfg)
    out_depth = data_helpers.output_bit_depth(x, bit_depth)
    data_helpers.write_image(values["out"], x, out_depth)

    kernel_path = values.get("kout", f"{values['out']}.kernel.txt")
    data_helpers.write_kernel(kernel_path, k)
    data_helpers.write_kernel_image(f"{os.path.splitext(kernel_path)[0]}.png", k)

    if "curves" in values:
        history.to_csv(values["curves"], index=False)
        logger.info("Saved history to %s", values["curves"])
    return 0


def cmd_priors(values: dict[str, Any]) -> int:
    """Write one histogram CSV per prior and print the zero counts."""
    _require(values, "clear", "blurred", "out_prefix")
    clear, _ = data_helpers.read_image(values["clear"])
    blurred, _ = data_helpers.read_image(values["blurred"])

    tables = prior_histograms(
        clear,
        blurred,
        values.get("patch_size", 15),
        values.get("bins", 50),
    )
    for name in PRIORS:
        path = f"{values['out_prefix']}_{name}.csv"
        tables[name].to_csv(path, index=False)
        logger.info("Saved %s histogram to %s", name.upper(), path)

    print("prior,zero_clear,zero_blurred")
    for name, row in tables["zero_counts"].iterrows():
        print(f"{name},{row['clear']},{row['blurred']}")

    if "plot" in values:
        plot_prior_histograms(tables, values["plot"])
    return 0


def cmd_evaluate(values: dict[str, Any]) -> int:
    """
    Print PSNR, SSIM and MSE as a CSV header and row.

    With `--scale`, the reference and the peak are multiplied by the scale so
    a restoration in count units can be compared with the clean image.
    """
    _require(values, "ref", "img")
    reference, _ = data_helpers.read_image(values["ref"])
    img, _ = data_helpers.read_image(values["img"])

    scale = _scale(values)
    peak = values.get("peak", 255.0) * scale
    report = quality_report(img, reference * scale, peak)
    print(QualityReport.csv_header())
    print(report.csv_row())
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    """Main function.

    Args:
        argv (Optional[list[str]]): arguments, sys.argv[1:] if omitted

    Returns:
        int: zero on success, one on a deblurring or I/O error
    """
    load_dotenv()
    args = build_parser().parse_args(argv)

    if args.verbose:
        level = "DEBUG"
    elif args.quiet:
        level = "WARNING"
    else:
        level = os.getenv("LOG_LEVEL", "INFO").upper()
    unknown = not isinstance(logging.getLevelName(level), int)
    logging.basicConfig(level="INFO" if unknown else level, force=True)
    if unknown:
        logger.warning("Unknown LOG_LEVEL %s, using INFO", level)

    try:
        return args.handler(collect_settings(args))
    except (DeblurError, OSError) as e:
        logger.error("%s", e)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
