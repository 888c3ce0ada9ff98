"""Exceptions raised by the deblurring package."""
from typing import Optional


class DeblurError(Exception):
    """Base class of every error raised by this package."""


class DimensionError(DeblurError, ValueError):
    """Array shapes or sizes are incompatible."""


class ParameterError(DeblurError, ValueError):
    """A numeric parameter is outside its valid range."""


class ConfigError(DeblurError, ValueError):
    """A run configuration has unknown, missing or invalid keys."""


class DegenerateKernelError(DeblurError, ValueError):
    """A kernel update produced no positive entry."""


class SolverDivergenceError(DeblurError, ArithmeticError):
    """An iterate became non-finite.

    Args:
        message (str): description of the failure
        iteration (int): inner (ADMM) iteration index
        outer_iteration (Optional[int]): blind loop index, when applicable
    """

    def __init__(
        self,
        message: str,
        iteration: int,
        outer_iteration: Optional[int] = None,
    ) -> None:
        self.iteration = iteration
        self.outer_iteration = outer_iteration
        where = f"iteration {iteration}"
        if outer_iteration is not None:
            where = f"outer iteration {outer_iteration}, {where}"
        super().__init__(f"{message} ({where})")
