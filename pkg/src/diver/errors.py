"""Error taxonomy shared by the device, measurer, and listener.

Every error that can cross the wire has a stable symbolic code; the
measurer serializes them as ``#error code=<Name> msg="..."`` records and
the listener re-raises the matching class.
"""

from __future__ import annotations


class DiverError(Exception):
    """Base class; ``code`` is the wire-visible symbolic name."""

    code = "Error"

    def __init__(self, msg: str = ""):
        super().__init__(msg)
        self.msg = msg


# --- secure channel ---

class AuthFailure(DiverError):
    code = "AuthFailure"


class ReplayDetected(DiverError):
    code = "ReplayDetected"


class StaleTimestamp(DiverError):
    code = "StaleTimestamp"


class BadMagic(DiverError):
    code = "BadMagic"


class BadVersion(DiverError):
    code = "BadVersion"


class BadFrame(DiverError):
    code = "BadFrame"


# --- command dispatch / back-ends ---

class UnknownVerb(DiverError):
    code = "UnknownVerb"


class BadArgument(DiverError):
    code = "BadArgument"


class DeviceFault(DiverError):
    code = "DeviceFault"


class NoSuchTask(DiverError):
    code = "NoSuchTask"


class DuplicateName(DiverError):
    code = "DuplicateName"


class InvalidScenario(DiverError):
    code = "InvalidScenario"


class UnmappedAddress(DiverError):
    code = "UnmappedAddress"


class ChannelOutOfRange(DiverError):
    code = "ChannelOutOfRange"


class FlashOutOfRange(DiverError):
    code = "FlashOutOfRange"


class RateTooHigh(DiverError):
    code = "RateTooHigh"


class NoSuchTimer(DiverError):
    code = "NoSuchTimer"


class ParseError(DiverError):
    code = "ParseError"


class DivByZero(DiverError):
    code = "DivByZero"


class UnknownFunction(DiverError):
    code = "UnknownFunction"


class Timeout(DiverError):
    code = "Timeout"


# --- listener ---

class ConnectionLost(DiverError):
    code = "ConnectionLost"


class InsufficientSamples(DiverError):
    code = "InsufficientSamples"


class VersionMismatch(DiverError):
    code = "VersionMismatch"


class CorruptFile(DiverError):
    code = "CorruptFile"


_BY_CODE = {cls.code: cls for cls in list(globals().values())
            if isinstance(cls, type) and issubclass(cls, DiverError)}


def error_from_code(code: str, msg: str = "") -> DiverError:
    """Reconstruct an error instance from its wire code."""
    cls = _BY_CODE.get(code, DiverError)
    err = cls(msg)
    if cls is DiverError:
        err.code = code
    return err
