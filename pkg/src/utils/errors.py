"""
Error Types
===========

Every failure the pipeline can report is a subclass of ``WhcnError`` so that
entry points can catch one type and print a readable message.
"""

from typing import Optional


class WhcnError(Exception):
    """Base class for all pipeline errors."""


class NotSquare(WhcnError):
    pass


class NotSymmetric(WhcnError):
    pass


class ShapeMismatch(WhcnError):
    pass


class NonFiniteEvaluation(WhcnError):
    pass


class InvalidConfig(WhcnError):
    pass


class CloudIoError(WhcnError, OSError):
    pass


class ParseError(WhcnError):
    """Malformed line in a text artifact; ``line`` is 1-based."""

    def __init__(self, line: int, token: str, message: Optional[str] = None):
        self.line = line
        self.token = token
        super().__init__(message or f"line {line}: cannot parse token '{token}'")


class EmptyCloud(WhcnError):
    pass


class TooFewPoints(WhcnError):
    pass


class InvalidK(WhcnError):
    pass


class TooLarge(WhcnError):
    pass


class EmptyCorpus(WhcnError):
    pass


class EmptySceneLabels(WhcnError):
    pass


class NoSeeds(WhcnError):
    pass


class DegenerateHyperedge(WhcnError):
    pass


class NoLabeledVertices(WhcnError):
    pass


class LengthMismatch(WhcnError):
    pass


class ReportIoError(WhcnError, OSError):
    pass


class StageError(WhcnError):
    """A pipeline stage failed; the message is prefixed with the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
