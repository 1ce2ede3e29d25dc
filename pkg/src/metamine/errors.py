"""Exception types shared across the package.

Every error raised on a validated code path carries a short machine-readable
``code`` so tests and the CLI can react to the category rather than parse
prose. The CLI maps exception classes to exit codes; see cli.EXIT_*.
"""

from __future__ import annotations


class MetamineError(Exception):
    """Base class for all package errors."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class InputFormatError(MetamineError):
    """A file or payload could not be parsed into the expected shape."""


class SchemaError(MetamineError):
    """A schema, attribute, or instance violates the schema rules."""


class ConsistencyError(MetamineError):
    """Two otherwise valid objects do not fit together."""


class MiningError(MetamineError):
    """A dataset cannot support the requested mining operation."""


class PolicyError(MetamineError):
    """A rule, ruleset, or policy violates the policy rules."""
