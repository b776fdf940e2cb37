"""Exception hierarchy, mapped to CLI exit codes in cli.py."""


class AlforgeError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(AlforgeError):
    """Invalid configuration, template, or spec file (exit code 2)."""

    exit_code = 2


class ProviderError(AlforgeError):
    """A provider call failed after retries, or a contract was violated (exit code 3)."""

    exit_code = 3


class StateError(AlforgeError):
    """An operation was attempted against incompatible pool or loop state (exit code 4)."""

    exit_code = 4


class PoolError(StateError):
    """Pool-level data errors: malformed input, duplicate ids, bad transitions."""
