"""Exception types shared across the toolkit."""


class ComforgeError(Exception):
    """Base class for all toolkit errors."""


class MalformedCall(ComforgeError):
    """A manipulation call could not be parsed (unbalanced parentheses,
    missing result variable after the arrow, ...)."""


class EmptyArgument(ComforgeError):
    """A manipulation call contains an empty argument slot."""


class ChainParseError(ComforgeError):
    """A completion could not be parsed into a chain; keeps the raw text."""

    def __init__(self, message, raw_text=""):
        super().__init__(message)
        self.raw_text = raw_text


class WrongDemoCount(ComforgeError):
    """Demonstration list length does not match the configured count."""


class TransportError(ComforgeError):
    """A client call failed after exhausting its retries."""

    def __init__(self, message, attempts=1):
        super().__init__(message)
        self.attempts = attempts


class ImageDecodeError(ComforgeError):
    """An image could not be read or encoded."""


class DegenerateRegion(ComforgeError):
    """A crop region has no pixels."""


class TooFewPoints(ComforgeError):
    """Line drawing needs at least two points."""


class ExpressionError(ComforgeError):
    """An arithmetic expression is not syntactically valid."""


class ShapeMismatch(ComforgeError):
    """Matrix shapes are incompatible."""


class EmptyMemory(ComforgeError):
    """Attention was requested against an empty memory."""


class DatasetIOError(ComforgeError):
    """A dataset file could not be read or written."""

    def __init__(self, path, message=""):
        super().__init__(f"{path}: {message}" if message else str(path))
        self.path = str(path)
