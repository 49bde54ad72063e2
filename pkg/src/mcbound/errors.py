"""Exception hierarchy shared by every analysis stage."""

from __future__ import annotations


class McBoundError(Exception):
    """Base class for all errors raised by the package."""


class MismatchedPoints(McBoundError):
    pass


class NegativeCycle(McBoundError):
    """A multipath contains a strict cycle, so it has no satisfying assignment."""


class InconsistentRestriction(McBoundError):
    pass


class CtsSyntaxError(McBoundError):
    def __init__(self, message: str, line: int = 0, column: int = 0) -> None:
        self.line = line
        self.column = column
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{where}{message}")


class ArityMismatch(McBoundError):
    pass


class UnknownPoint(McBoundError):
    pass


class UnknownTransition(McBoundError):
    pass


class UnsatisfiableInvariant(McBoundError):
    pass


class Explosion(McBoundError):
    """A resource cap (elaborated points, closure elements) was exceeded."""

    def __init__(self, what: str, limit: int, detail: str = "") -> None:
        self.what = what
        self.limit = limit
        self.detail = detail
        msg = f"{what} exceeded the cap of {limit}"
        super().__init__(f"{msg} ({detail})" if detail else msg)


class StateExplosion(Explosion):
    def __init__(self, limit: int, detail: str = "") -> None:
        super().__init__("explored states", limit, detail)


class NotInstrumented(McBoundError):
    pass


class NotIdempotent(McBoundError):
    pass


class NoBound(McBoundError):
    """The visits to a flow point are not bounded by any function of N."""


class InconsistentCertificate(McBoundError):
    pass


class CertificateViolation(McBoundError):
    pass


class DegenerateSamples(McBoundError):
    pass


class FuelExhausted(McBoundError):
    pass


class VariantViolation(McBoundError):
    pass


class MissingFixture(McBoundError):
    pass


class SfplSyntaxError(CtsSyntaxError):
    pass
