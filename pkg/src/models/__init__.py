"""Deblurring solvers and quality metrics."""
