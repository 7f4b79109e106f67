"""Shared exception types."""


class ConfigurationError(ValueError):
    """Raised for invalid problem setups (bad counts, non-SPD systems, ...).

    The CLI maps this to exit code 3.
    """
