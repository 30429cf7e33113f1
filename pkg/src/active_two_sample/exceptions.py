"""Exception types raised by the package.

The CLI maps :class:`ConfigError` to exit code 2 and
:class:`ContractViolation` to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid scenario, run configuration or argument."""


class ContractViolation(RuntimeError):
    """An operation was called outside its documented preconditions."""


class CapabilityError(NotImplementedError):
    """The requested quantity is not available for this source/feature combination."""
