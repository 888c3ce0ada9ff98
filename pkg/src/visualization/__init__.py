"""Prior histograms and convergence plots."""
