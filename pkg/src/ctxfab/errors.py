"""Exception hierarchy shared by all framework modules.

Every error carries a stable ``code`` (its class name) that the service
layer maps to an HTTP status and that the CLI prints verbatim.
"""

from __future__ import annotations


class FrameworkError(Exception):
    """Base class for all errors raised by the framework."""

    def __init__(self, detail: str = ""):
        super().__init__(detail)
        self.detail = detail

    @property
    def code(self) -> str:
        return type(self).__name__

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}" if self.detail else self.code


class ValidationError(FrameworkError):
    """A fact, fix or request body violated a schema rule."""


# -- schema / input validation ------------------------------------------------

class UnknownType(ValidationError): ...
class SchemaMismatch(ValidationError): ...
class MissingTimestamp(ValidationError): ...
class MissingUser(ValidationError): ...
class BadCoordinates(ValidationError): ...
class UnknownDevice(ValidationError): ...
class DeviceOwnerMismatch(ValidationError): ...
class BadRange(ValidationError): ...
class ParseError(ValidationError): ...


# -- registries ----------------------------------------------------------------

class DuplicateTypeName(FrameworkError): ...
class DuplicateDevice(FrameworkError): ...
class UnknownOwner(FrameworkError): ...
class DuplicateRule(FrameworkError): ...
class UnknownRule(FrameworkError): ...
class UnknownTarget(FrameworkError): ...


# -- geometry ------------------------------------------------------------------

class PoleProximity(FrameworkError): ...
class NotAreal(FrameworkError): ...
class InvalidGeometry(FrameworkError): ...
class NoNearbyNode(FrameworkError): ...
class NoAccessibleRoute(FrameworkError): ...


# -- location ------------------------------------------------------------------

class NoRecentFix(FrameworkError): ...


# -- persistence / service -----------------------------------------------------

class IoError(FrameworkError): ...
class CorruptSnapshot(FrameworkError): ...
class BadConfig(FrameworkError): ...
class ModelLoadError(FrameworkError): ...
class BindError(FrameworkError): ...
