"""Convolution, fractional-order gradient and framelet prior operators."""
