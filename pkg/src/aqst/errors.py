"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 1, numerical failures with 2, and I/O problems with 3 (plain
``OSError`` is used for the latter).
"""


class ConfigError(ValueError):
    """A run configuration, layout, or parameter set is invalid."""


class NumericalError(RuntimeError):
    """An integrator or root-finder failed to converge."""
