# -*- coding: utf-8 -*-
"""
Exception types shared by every module of the project.

Library code raises these; main.py catches DeblurNerfError per command,
logs the message and exits with a nonzero status.
"""

from typing import Optional, Sequence, Tuple


class DeblurNerfError(Exception):
    """Base class for all errors raised by the project."""


class ShapeError(DeblurNerfError, ValueError):
    """Raised when the operand shapes of a tensor operation do not conform."""

    def __init__(self, op: str, shapes: Sequence[Tuple[int, ...]], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        shape_text = " and ".join(str(s) for s in self.shapes)
        message = f"{op}: incompatible shapes {shape_text}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class BackwardError(DeblurNerfError, RuntimeError):
    """Raised when backward is called on an invalid loss or a consumed tape."""


class NonFiniteError(DeblurNerfError, ValueError):
    """Raised when a NaN or infinite value reaches a place that forbids it."""

    def __init__(self, what: str):
        self.what = what
        super().__init__(f"non-finite values in {what}")


class ParseError(DeblurNerfError, ValueError):
    """Raised when a text file cannot be parsed.

    Args:
        path: The file being parsed.
        message: What went wrong.
        line: 1-based line number, when the error is tied to a line.
    """

    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path = str(path)
        self.line = line
        location = self.path if line is None else f"{self.path}:{line}"
        super().__init__(f"{location}: {message}")


class ConfigError(DeblurNerfError, ValueError):
    """Raised when a configuration violates its invariants."""


class CheckpointError(DeblurNerfError, ValueError):
    """Raised when a checkpoint cannot be written or read back."""


class DatasetError(DeblurNerfError, ValueError):
    """Raised when a dataset is inconsistent or cannot be written."""
