import math

import numpy as np
import pandas as pd

from src.data.degrade import PsfSpec, make_psf
from src.features.convolution import conv2_periodic
from src.models.solver import HISTORY_COLUMNS
from src.visualization.helpers import (
    PRIORS,
    plot_convergence,
    plot_prior_histograms,
    prior_histograms,
)


def _pair(cameraman):
    clear = cameraman[:64, :48]
    k = make_psf(PsfSpec(kind="gaussian", size=9, sigma=math.sqrt(3)))
    return clear, conv2_periodic(clear, k)


def test_prior_histograms_counts(cameraman):
    clear, blurred = _pair(cameraman)
    tables = prior_histograms(clear, blurred, r=8, bins=20)
    expected = {
        "fpmp": 9 * 8 * 6,
        "fdc": 9 * 64 * 48,
        "pmp": 8 * 6,
        "dc": 64 * 48,
    }
    for name in PRIORS:
        table = tables[name]
        columns = ["bin_left", "bin_right", "clear", "blurred"]
        assert list(table.columns) == columns  # nosec: B101
        assert len(table) == 20  # nosec: B101
        assert table["clear"].sum() == expected[name]  # nosec: B101
        assert table["blurred"].sum() == expected[name]  # nosec: B101
        edges = table["bin_left"].to_numpy()
        assert np.allclose(table["bin_right"].to_numpy()[:-1], edges[1:])  # nosec: B101


def test_zero_counts_table(cameraman):
    clear, blurred = _pair(cameraman)
    zeros = prior_histograms(clear, blurred, r=15)["zero_counts"]
    assert list(zeros.index) == list(PRIORS)  # nosec: B101
    assert list(zeros.columns) == ["clear", "blurred"]  # nosec: B101
    assert (zeros >= 0).all().all()  # nosec: B101


def test_plots_are_written(tmp_path, cameraman):
    clear, blurred = _pair(cameraman)
    histogram_path = tmp_path / "priors.png"
    plot_prior_histograms(prior_histograms(clear, blurred, r=8), str(histogram_path))
    assert histogram_path.stat().st_size > 0  # nosec: B101

    history = pd.DataFrame(
        {
            "iter": [1, 2, 3],
            "energy": [10.0, 8.0, 7.5],
            "rel_change": [1.0, 0.1, 0.01],
            "psnr": [np.nan] * 3,
            "ssim": [np.nan] * 3,
        },
        columns=HISTORY_COLUMNS,
    )
    curves_path = tmp_path / "curves.png"
    plot_convergence(history, str(curves_path))
    assert curves_path.stat().st_size > 0  # nosec: B101
