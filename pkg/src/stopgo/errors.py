"""Exception types shared across the pipeline."""


class StopGoError(Exception):
    """Base class for all package errors."""


class ConfigError(StopGoError, ValueError):
    """Invalid configuration: unknown layout, bad spec values, missing modality."""


class DataError(StopGoError):
    """Input data cannot be used (empty split, missing class, bad feature file)."""


class ParseError(DataError):
    """A source record could not be parsed."""

    def __init__(self, path, line, field, message=""):
        self.path = str(path)
        self.line = line
        self.field = field
        text = f"{self.path}:{line}: field {field!r}"
        if message:
            text += f": {message}"
        super().__init__(text)


class ShapeError(StopGoError, ValueError):
    """Operand shapes are incompatible for an operation."""

    def __init__(self, op, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        joined = " and ".join(str(list(s)) for s in self.shapes)
        super().__init__(f"{op}: incompatible shapes {joined}")


class DivergenceError(StopGoError):
    """Training produced a non-finite loss."""
