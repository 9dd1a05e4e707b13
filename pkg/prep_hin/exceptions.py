import typing as t


class PrepError(Exception):
    """Base class for every error raised by prep-hin"""

    exit_code: t.ClassVar[int] = 2


class InputError(PrepError):
    """Bad input file, bad schema or bad parameters"""


class ParseError(InputError):
    """A line of an input file could not be parsed"""

    def __init__(self, path: str, line_number: int, message: str) -> None:
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class GraphValidationError(InputError):
    """The graph violates one of its structural invariants"""

    def __init__(self, message: str, offending: t.Sequence[str] = ()) -> None:
        self.offending = tuple(offending)
        if self.offending:
            message = f"{message}: {', '.join(self.offending)}"
        super().__init__(message)


class SchemaError(InputError):
    """A meta-path does not type-check against the graph schema"""


class ParameterError(InputError):
    """Model parameters or hyperparameters outside their domain"""


class PairLookupError(InputError, KeyError):
    """Requested node pair is not a nontrivial pair of the table"""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class MetricError(InputError):
    """A metric is undefined for the given labels"""


class DirectionMismatchError(InputError):
    """Score tables with inconsistent direction flags"""


class NumericalError(PrepError):
    """Non-finite value met during evaluation or fitting"""

    exit_code: t.ClassVar[int] = 1

    def __init__(
        self,
        message: str,
        pair_index: int | None = None,
        iteration: int | None = None,
    ) -> None:
        self.pair_index = pair_index
        self.iteration = iteration
        self.reason = message
        super().__init__(self._render())

    def _render(self) -> str:
        parts = [self.reason]
        if self.pair_index is not None:
            parts.append(f"pair index {self.pair_index}")
        if self.iteration is not None:
            parts.append(f"outer iteration {self.iteration}")
        return "; ".join(parts)

    def at_iteration(self, iteration: int) -> "NumericalError":
        """Copy of this error carrying the outer iteration"""
        return NumericalError(self.reason, self.pair_index, iteration)


__all__ = [
    "DirectionMismatchError",
    "GraphValidationError",
    "InputError",
    "MetricError",
    "NumericalError",
    "PairLookupError",
    "ParameterError",
    "ParseError",
    "PrepError",
    "SchemaError",
]
