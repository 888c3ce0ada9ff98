"""Prior histograms and convergence curves."""

import logging
from typing import Callable

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from src.features.convolution import ImageField  # noqa: E402
from src.features.framelet import (  # noqa: E402
    dark_channel,
    fdc,
    fpmp,
    patch_minima,
    zero_count,
)

logger = logging.getLogger(__name__)

PRIORS = ("fpmp", "fdc", "pmp", "dc")


def _odd(r: int) -> int:
    return r if r % 2 == 1 else r + 1


def _prior_values(name: str, img: ImageField, r: int) -> np.ndarray:
    extractors: dict[str, Callable[[ImageField], np.ndarray]] = {
        "fpmp": lambda u: fpmp(u, r)[0].values,
        "fdc": lambda u: fdc(u, _odd(r)),
        "pmp": lambda u: patch_minima(u, r),
        "dc": lambda u: dark_channel(u, _odd(r)),
    }
    return np.ravel(extractors[name](img))


def prior_histograms(
    clear: ImageField,
    blurred: ImageField,
    r: int,
    bins: int = 50,
) -> dict[str, pd.DataFrame]:
    """
    Histograms of the four local-minimal priors for a clear / blurred pair.

    Sliding-window priors (FDC, DC) use the next odd window when r is even.

    Args:
        clear (ImageField): sharp image
        blurred (ImageField): blurred version of the same scene
        r (int): patch size
        bins (int): number of bins, shared by both images

    Returns:
        dict[str, pd.DataFrame]: one table per prior (bin_left, bin_right,
            clear, blurred) and "zero_counts" with one row per prior
    """
    tables: dict[str, pd.DataFrame] = {}
    zeros = []
    for name in PRIORS:
        values_clear = _prior_values(name, clear, r)
        values_blurred = _prior_values(name, blurred, r)
        pooled = np.concatenate([values_clear, values_blurred])
        edges = np.histogram_bin_edges(pooled, bins=bins)
        tables[name] = pd.DataFrame(
            {
                "bin_left": edges[:-1],
                "bin_right": edges[1:],
                "clear": np.histogram(values_clear, bins=edges)[0],
                "blurred": np.histogram(values_blurred, bins=edges)[0],
            }
        )
        zeros.append(
            {
                "prior": name,
                "clear": zero_count(values_clear),
                "blurred": zero_count(values_blurred),
            }
        )
        logger.info(
            "%s zero count: clear %d, blurred %d",
            name.upper(),
            zeros[-1]["clear"],
            zeros[-1]["blurred"],
        )

    tables["zero_counts"] = pd.DataFrame(zeros).set_index("prior")
    return tables


def plot_prior_histograms(tables: dict[str, pd.DataFrame], path: str) -> None:
    """
    Draw the clear and blurred histograms of every prior side by side.

    Args:
        tables (dict[str, pd.DataFrame]): output of `prior_histograms`
        path (str): PNG file to write
    """
    fig, axes = plt.subplots(nrows=1, ncols=len(PRIORS), figsize=(6 * len(PRIORS), 5))
    for ax, name in zip(axes, PRIORS):
        table = tables[name]
        centers = (table["bin_left"] + table["bin_right"]) / 2
        width = float((table["bin_right"] - table["bin_left"]).iloc[0])
        ax.bar(centers, table["clear"], width=width, alpha=0.6, label="clear")
        ax.bar(centers, table["blurred"], width=width, alpha=0.6, label="blurred")
        ax.set_title(name.upper())
        ax.set_yscale("log")
        ax.legend()

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info("Saved prior histograms to %s", path)


def plot_convergence(history: pd.DataFrame, path: str) -> None:
    """
    Energy, PSNR, relative change and SSIM against the iteration number.

    Panels without data (PSNR and SSIM without a reference) are left empty.
    """
    panels = [
        ("energy", "Energy"),
        ("psnr", "PSNR (dB)"),
        ("rel_change", "Error"),
        ("ssim", "SSIM"),
    ]
    fig, axes = plt.subplots(nrows=1, ncols=len(panels), figsize=(20, 4))
    for ax, (column, title) in zip(axes, panels):
        series = history[column]
        if series.notna().any():
            ax.plot(history["iter"], series)
        if column == "rel_change":
            ax.set_yscale("log")
        ax.set_title(title)
        ax.set_xlabel("iteration")

    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    logger.info("Saved convergence curves to %s", path)
