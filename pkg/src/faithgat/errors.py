"""Exception taxonomy shared by every module.

The CLI maps these onto exit codes (config 2, dependency 3, numerical 4),
so new error conditions should reuse one of the classes below instead of
raising bare ValueError.
"""


class FaithgatError(Exception):
    """Base class for all package errors."""


class ParseError(FaithgatError):
    """Malformed input file; message names the file and 1-based line."""

    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class StructuralError(FaithgatError):
    """Violated precondition or shape/consistency contract."""


class NumericalError(FaithgatError):
    """Non-finite value produced; message names the stage."""


class TrainingError(NumericalError):
    """Training diverged; carries the offending step index."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class EvaluationError(FaithgatError):
    """A metric is undefined for the given inputs (e.g. empty node set)."""


class ConfigError(FaithgatError):
    """Invalid run configuration."""


class DependencyError(FaithgatError):
    """A pipeline stage ran before its upstream stage; names the missing stage."""
