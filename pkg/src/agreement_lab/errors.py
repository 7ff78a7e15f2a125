"""Exception hierarchy shared by every module."""

from __future__ import annotations


class AgreementLabError(ValueError):
    """Base class for all input/contract errors raised by the library."""


class SchemaError(AgreementLabError):
    """Malformed structure file: missing or unknown keys, wrong types."""


class DimensionMismatch(AgreementLabError):
    pass


class NegativeProbability(AgreementLabError):
    pass


class MassNotOne(AgreementLabError):
    pass


class MeanOutOfRange(AgreementLabError):
    pass


class ZeroMassSlice(AgreementLabError):
    """The conditioning event has probability zero."""


class DomainError(AgreementLabError):
    pass


class EpsilonOutOfRange(AgreementLabError):
    pass


class NotARefinement(AgreementLabError):
    pass


class TooLargeForEnumeration(AgreementLabError):
    pass


class SynthesisFailed(AgreementLabError):
    def __init__(self, message: str, best_violation: float):
        super().__init__(message)
        self.best_violation = best_violation


class NotBoolean(AgreementLabError):
    pass


class UnknownGenerator(AgreementLabError):
    pass
