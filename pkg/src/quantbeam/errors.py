"""Exception types shared across the package.

The CLI maps these to exit codes: ConfigError -> 2, InfeasibleError -> 3,
SolverError -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration input."""


class InfeasibleError(RuntimeError):
    """The requested design is provably infeasible.

    Carries a human-readable diagnosis (which constraint set cannot be met
    and why, e.g. an SQINR target above the quantizer ceiling).
    """


class SolverError(RuntimeError):
    """A numerical solve failed to reach an acceptable status."""
