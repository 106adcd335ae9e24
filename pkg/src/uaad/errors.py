"""Exception types raised across the package.

Every error derives from :class:`AadError` so callers (and the CLI) can catch
the whole family at once. The class name doubles as the machine-readable error
code written by the CLI.
"""


class AadError(Exception):
    """Base class for all package errors."""


# core_io
class BadMagic(AadError, ValueError):
    pass


class TruncatedPayload(AadError, ValueError):
    pass


class MissingSidecar(AadError, FileNotFoundError):
    pass


class NonFiniteData(AadError, ValueError):
    pass


class IoFailure(AadError, OSError):
    pass


class RateMismatch(AadError, ValueError):
    pass


class WindowTooShort(AadError, ValueError):
    pass


# dsp
class NotMono(AadError, ValueError):
    pass


class RateTooLow(AadError, ValueError):
    pass


class InvalidBand(AadError, ValueError):
    pass


class RankDeficient(AadError, ValueError):
    pass


# linalg / cca
class ShapeMismatch(AadError, ValueError):
    pass


class NoPositiveMass(AadError, ValueError):
    pass


class NotPositiveDefinite(AadError, ValueError):
    pass


class ConvergenceFailure(AadError, RuntimeError):
    pass


class DegenerateLabels(AadError, ValueError):
    pass


# classify
class SingleClass(AadError, ValueError):
    pass


class DegenerateCovariance(AadError, ValueError):
    pass


class ZeroSpread(AadError, ValueError):
    pass


class Collapse(AadError, RuntimeError):
    pass


# synth / eval
class InvalidProfile(AadError, ValueError):
    pass


class Unreachable(AadError, ValueError):
    pass


class SingleClassTruth(AadError, ValueError):
    pass


class AllZeroDifferences(AadError, ValueError):
    pass


class UsageError(AadError, ValueError):
    pass
