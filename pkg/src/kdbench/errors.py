"""Exception hierarchy shared across the harness.

Each class maps to one CLI exit code so that pipeline failures are
machine-distinguishable (see `kdbench.cli`).
"""

from __future__ import annotations


class KdbenchError(Exception):
    """Base class for all harness errors."""


class ConfigError(KdbenchError):
    """Invalid configuration or malformed input file (exit code 2)."""


class ParseError(ConfigError):
    """Malformed record in an input file.

    Carries the 1-based line number when the failing line is known.
    """

    def __init__(self, message: str, line_number: int | None = None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ProtocolError(KdbenchError):
    """Protocol precondition failure (exit code 3)."""


class DataReferenceError(KdbenchError):
    """A comparison references a subject or session that does not exist (exit code 4)."""


class AlignmentError(KdbenchError):
    """Score file and comparison file do not line up (exit code 5)."""
