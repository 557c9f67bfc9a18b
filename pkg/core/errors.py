"""
Exception hierarchy for emgkit.

Every failure a pipeline stage can report is a subclass of EmgKitError.
DataError subclasses mean the input data is bad (CLI exit code 1);
UsageError subclasses mean the caller asked for something invalid
(CLI exit code 2).
"""
from typing import Any, Dict


class EmgKitError(Exception):
    """Root of all emgkit errors"""

    def __init__(self, message: str = "", **context: Any):
        self.context: Dict[str, Any] = dict(context)
        super().__init__(message or self.__class__.__name__)

    @property
    def message(self) -> str:
        base = self.args[0] if self.args else self.__class__.__name__
        if not self.context:
            return base
        ctx = ", ".join(f"{k}={v}" for k, v in self.context.items())
        return f"{base} ({ctx})"

    def add_context(self, **context: Any) -> "EmgKitError":
        """
        Attach extra context (path, channel, fold, ...) to the error

        Args:
            **context: Key/value pairs describing where the error happened

        Returns:
            The same error instance, so callers can ``raise err.add_context(...)``
        """
        for key, value in context.items():
            self.context.setdefault(key, value)
        return self

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": self.__class__.__name__,
            "message": self.args[0] if self.args else "",
            "context": {k: str(v) for k, v in self.context.items()},
        }

    def __str__(self) -> str:
        return self.message


class DataError(EmgKitError):
    """The input data cannot be processed"""


class UsageError(EmgKitError):
    """Invalid parameters, configuration or command line"""


# dataset_io

class MalformedLine(DataError):
    def __init__(self, line_no: int, reason: str = "", **context: Any):
        self.line_no = line_no
        msg = f"Malformed line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg, **context)


class UnknownLabel(DataError):
    def __init__(self, value: Any, **context: Any):
        self.value = value
        super().__init__(f"Unknown gesture label {value!r}", **context)


class EmptyFile(DataError):
    pass


class NoRecordingsFound(DataError):
    pass


# preprocess

class InvalidWindowing(UsageError):
    pass


# features

class EmptySeries(DataError):
    pass


class SeriesTooShort(DataError):
    pass


class InvalidPercent(UsageError):
    pass


class EmptyInput(DataError):
    pass


# trees

class EmptyNode(DataError):
    pass


class DegenerateData(DataError):
    pass


class WidthMismatch(DataError):
    def __init__(self, expected: int, got: int, **context: Any):
        self.expected = expected
        self.got = got
        super().__init__(f"Row width {got} does not match training width {expected}", **context)


class UnfittedForest(UsageError):
    pass


# selection

class KOutOfRange(UsageError):
    pass


class UnknownFeature(UsageError):
    def __init__(self, name: str, **context: Any):
        self.name = name
        super().__init__(f"Unknown feature {name!r}", **context)


# classifiers

class KTooLarge(UsageError):
    pass


class EmptyTraining(DataError):
    pass


class EmptyClass(DataError):
    pass


# evaluation

class LengthMismatch(DataError):
    pass


class EmptyMatrix(DataError):
    pass


class TooFewSamplesPerClass(DataError):
    pass


# cli / synthetic / config

class InvalidParams(UsageError):
    pass


class ConfigError(UsageError):
    pass


class UnknownModel(UsageError):
    def __init__(self, name: str, **context: Any):
        self.name = name
        super().__init__(f"Unknown model {name!r}", **context)
