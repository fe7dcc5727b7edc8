"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError -> 2,
BudgetError -> 3, ConsistencyError -> 4.
"""


class ConfigError(ValueError):
    """A configuration file or flag set failed validation."""


class BudgetError(RuntimeError):
    """A resource budget (word count, raster cells, samples) would be exceeded.

    The message always names the budget and the requested size so runs fail
    loudly instead of thrashing.
    """


class ConsistencyError(RuntimeError):
    """An internal invariant that should hold by construction was violated.

    Raised by runtime bug traps, e.g. a union measure exceeding its analytic
    hard bound by more than the rasterization error.
    """
