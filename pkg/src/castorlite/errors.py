"""Shared error model.

Every daemon reply carries either a value or an error {code, message}.
Codes map one-to-one onto exception classes so a client call raises the
same type the server handler raised.
"""

from __future__ import annotations


class CastorError(Exception):
    """Base class for protocol-visible errors."""

    code = "InternalError"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


_REGISTRY: dict[str, type] = {}


def _register(cls: type) -> type:
    _REGISTRY[cls.code] = cls
    return cls


def error_for_code(code: str, message: str = "") -> CastorError:
    cls = _REGISTRY.get(code)
    if cls is None:
        err = CastorError(f"{code}: {message}")
        err.message = message
        return err
    return cls(message)


def _make(name: str, code: str | None = None) -> type:
    cls = type(name, (CastorError,), {"code": code or name})
    _register(cls)
    return cls


# Namespace
MalformedPath = _make("MalformedPath")
UnknownRoute = _make("UnknownRoute")
NotFound = _make("NotFound")
Exists = _make("Exists")
NotADirectory = _make("NotADirectory")
IsADirectory = _make("IsADirectory")
NotEmpty = _make("NotEmpty")
CycleError = _make("CycleError")
DuplicateTapeLocation = _make("DuplicateTapeLocation")
SizeMismatch = _make("SizeMismatch")

# Volume manager
NoEligibleVolume = _make("NoEligibleVolume")
Underflow = _make("Underflow")

# Drive queue
UnknownModel = _make("UnknownModel")
IllegalTransition = _make("IllegalTransition")
NotAssigned = _make("NotAssigned")

# Mover
ChecksumMismatch = _make("ChecksumMismatch")
NoSuchFseq = _make("NoSuchFseq")
VolumeFull = _make("VolumeFull")
FseqMismatch = _make("FseqMismatch")
AlreadyMounted = _make("AlreadyMounted")
NotMounted = _make("NotMounted")
SourceTruncated = _make("SourceTruncated")
SinkError = _make("SinkError")

# Stager
NoSpace = _make("NoSpace")
NoTapeCopy = _make("NoTapeCopy")
RecallFailed = _make("RecallFailed")
NotOpenForWrite = _make("NotOpenForWrite")

# Remote file IO
BadHandle = _make("BadHandle")
IoError = _make("IoError")
NegativePosition = _make("NegativePosition")
SingleWriter = _make("SingleWriter")

# Harness / misc
SpecInvalid = _make("SpecInvalid")
EnvironmentDown = _make("EnvironmentDown")
BadRequest = _make("BadRequest")
InternalError = _register(CastorError)
