"""Exception types shared across the toolkit."""


class AplError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModel(AplError):
    """A concrete POMDP violates its structural invariants."""


class ZeroProbabilityObservation(AplError):
    """A belief update hit an observation with zero probability."""


class ImpossibleTrace(AplError):
    """A demonstration has zero probability under the given model."""


class OutOfSupport(AplError):
    """A parameter vector lies outside the prior's support."""


class UnsupportedParameterRole(AplError):
    """A parameter's table occurrences do not fit the conjugate update."""


class NoFeasibleStart(AplError):
    """The MAP search was given a start point outside the feasible box."""


class EpisodicTemplate(AplError):
    """A template with absorbing terminal structure cannot be extended."""


class ParseError(AplError):
    """A text artifact (trace file, expression) failed to parse."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
