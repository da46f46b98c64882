"""Canonical domain types, registries and schema validation.

All identifiers are opaque non-empty strings; timestamps are integer
milliseconds since the Unix epoch (UTC).  Coordinates are strictly 2D:
a third axis anywhere in the input is a validation error, never silently
dropped.  Positions carry per-axis 1-sigma precision in meters plus a
scalar confidence probability in (0, 1]; the probability only ever
influences fusion weighting, never geometry.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import (
    BadCoordinates,
    DeviceOwnerMismatch,
    DuplicateDevice,
    DuplicateTypeName,
    MissingTimestamp,
    MissingUser,
    SchemaMismatch,
    UnknownDevice,
    UnknownOwner,
    UnknownType,
)

UserId = str
DeviceId = str
FeatureId = str
ItemId = str
Timestamp = int  # ms since Unix epoch, UTC

#: Coordinate-system marker for WGS84-like lon/lat degrees; any other
#: system string is the id of a registered LocalFrame.
GLOBAL = "global"

TECHNOLOGIES = frozenset({"GPS", "GSM", "WLAN", "RFID", "OTHER"})

#: Initial closed disability tag set; deployments may register a
#: "disability" descriptor with a different allowed set.
DISABILITY_TAGS = frozenset({"wheelchair", "low_vision", "blear_eyed", "hearing_impaired"})

#: A disability profile is just the tag set of the user's latest
#: "disability" fact.
DisabilityProfile = frozenset

VALUE_KINDS = frozenset({"number", "text", "enum", "tag_set", "weighted_tags", "coordinates"})

#: Keys of the flat wire encoding of a 2D coordinates value.  The set is
#: fixed: any extra key (in particular "z") is rejected.
_COORD_WIRE_KEYS = frozenset({"sys", "x", "y", "px", "py", "p"})

_LAT_POLE_LIMIT = 89.9  # degrees; equirectangular frames degenerate near the poles


@dataclass(frozen=True)
class LocalFrame:
    """A local metric frame anchored at (origin_lon, origin_lat).

    ``rotation`` is the frame's x-axis heading in radians,
    counter-clockwise from east, normalized to [-pi, pi).
    """

    frame_id: str
    origin_lon: float
    origin_lat: float
    rotation: float = 0.0

    def __post_init__(self):
        if not self.frame_id or self.frame_id == GLOBAL:
            raise BadCoordinates(f"invalid frame id {self.frame_id!r}")
        if not abs(self.origin_lat) < 90.0:
            raise BadCoordinates(f"frame origin latitude {self.origin_lat} out of range")
        theta = math.remainder(self.rotation, 2.0 * math.pi)
        if theta >= math.pi:  # remainder returns (-pi, pi]; fold pi to -pi
            theta -= 2.0 * math.pi
        object.__setattr__(self, "rotation", theta)


@dataclass(frozen=True)
class Coordinates2D:
    """A 2D position with per-axis precision and a confidence probability.

    x/y are meters in a LOCAL system and lon/lat degrees in GLOBAL;
    precision is 1-sigma meters on each axis in either system.
    """

    system: str
    x: float
    y: float
    precision_x: float
    precision_y: float
    probability: float

    def to_wire(self) -> dict:
        return {
            "sys": self.system,
            "x": self.x,
            "y": self.y,
            "px": self.precision_x,
            "py": self.precision_y,
            "p": self.probability,
        }


@dataclass(frozen=True)
class PositionFix:
    """One timestamped reading from one positioning device."""

    user: UserId
    device: DeviceId
    technology: str
    timestamp: Timestamp
    coords: Coordinates2D


@dataclass(frozen=True)
class ContextTypeDescriptor:
    """Schema of one context type.

    kind is one of number / text / enum / tag_set / weighted_tags /
    coordinates.  ``allowed`` restricts enum values (required) and,
    optionally, tag_set members.  ``unit`` documents number units.
    """

    name: str
    kind: str
    unit: str | None = None
    allowed: frozenset[str] | None = None

    def __post_init__(self):
        if not self.name:
            raise SchemaMismatch("context type name must be non-empty")
        if self.kind not in VALUE_KINDS:
            raise SchemaMismatch(f"unknown value kind {self.kind!r}")
        if self.kind == "enum" and not self.allowed:
            raise SchemaMismatch(f"enum type {self.name!r} needs a non-empty allowed set")
        if self.allowed is not None:
            object.__setattr__(self, "allowed", frozenset(self.allowed))


@dataclass(frozen=True)
class ContextFact:
    """A typed, timestamped value about exactly one user.

    ``device`` optionally records the reporting device so consistency
    checks can verify it is registered.
    """

    user: UserId
    type: str
    timestamp: Timestamp
    value: Any
    device: DeviceId | None = None


@dataclass(frozen=True)
class DeviceRecord:
    """Registration of a positioning/context device to its owner."""

    device: DeviceId
    owner: UserId
    technology: str
    context_types: frozenset[str] = frozenset()
    metadata: str = ""

    def __post_init__(self):
        object.__setattr__(self, "context_types", frozenset(self.context_types))


class ContextTypeRegistry:
    """Named context-type descriptors; concurrent reads, serialized writes."""

    def __init__(self):
        self._types: dict[str, ContextTypeDescriptor] = {}
        self._lock = threading.Lock()

    def register(self, descriptor: ContextTypeDescriptor) -> None:
        with self._lock:
            if descriptor.name in self._types:
                raise DuplicateTypeName(descriptor.name)
            self._types[descriptor.name] = descriptor

    def lookup(self, name: str) -> ContextTypeDescriptor:
        try:
            return self._types[name]
        except KeyError:
            raise UnknownType(name) from None

    def __contains__(self, name: str) -> bool:
        return name in self._types

    def names(self) -> list[str]:
        return sorted(self._types)


class UserRegistry:
    """Known users.  A context fact about a new user introduces that user;
    device registration requires the owner to exist already."""

    def __init__(self, users: Iterable[UserId] = ()):
        self._users: set[UserId] = set(users)
        self._lock = threading.Lock()

    def add(self, user: UserId) -> None:
        if not user:
            raise MissingUser("empty user id")
        with self._lock:
            self._users.add(user)

    def __contains__(self, user: UserId) -> bool:
        return user in self._users

    def all(self) -> list[UserId]:
        return sorted(self._users)


class DeviceRegistry:
    """Device records keyed by device id; owners must be registered users."""

    def __init__(self, users: UserRegistry):
        self._users = users
        self._devices: dict[DeviceId, DeviceRecord] = {}
        self._lock = threading.Lock()

    def register(self, record: DeviceRecord) -> None:
        if record.technology not in TECHNOLOGIES:
            raise SchemaMismatch(f"unknown technology {record.technology!r}")
        with self._lock:
            if record.device in self._devices:
                raise DuplicateDevice(record.device)
            if record.owner not in self._users:
                raise UnknownOwner(record.owner)
            self._devices[record.device] = record

    def lookup(self, device: DeviceId) -> DeviceRecord:
        try:
            return self._devices[device]
        except KeyError:
            raise UnknownDevice(device) from None

    def __contains__(self, device: DeviceId) -> bool:
        return device in self._devices

    def all(self) -> list[DeviceRecord]:
        return sorted(self._devices.values(), key=lambda r: r.device)


def default_registry() -> ContextTypeRegistry:
    """Registry preloaded with the context types the framework itself uses."""
    reg = ContextTypeRegistry()
    reg.register(ContextTypeDescriptor("disability", "tag_set", allowed=DISABILITY_TAGS))
    reg.register(ContextTypeDescriptor("preference", "weighted_tags"))
    reg.register(ContextTypeDescriptor("visit", "text"))
    reg.register(ContextTypeDescriptor("activity", "text"))
    return reg


# ---------------------------------------------------------------------------
# validation


def _require_timestamp(ts: Any) -> None:
    if ts is None:
        raise MissingTimestamp("timestamp is required")
    if isinstance(ts, bool) or not isinstance(ts, int):
        raise MissingTimestamp(f"timestamp must be integer milliseconds, got {ts!r}")
    if ts < 0:
        raise MissingTimestamp(f"timestamp must be >= 0, got {ts}")


def _require_finite(name: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise BadCoordinates(f"{name} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise BadCoordinates(f"{name} must be finite, got {value!r}")
    return float(value)


def validate_coords(coords: Coordinates2D, frames: Mapping[str, LocalFrame] | None = None) -> None:
    """Check the Coordinates2D invariants; raise BadCoordinates otherwise.

    Frame resolution is only checked when ``frames`` is given.
    """
    if not isinstance(coords, Coordinates2D):
        raise BadCoordinates(f"expected coordinates, got {type(coords).__name__}")
    x = _require_finite("x", coords.x)
    y = _require_finite("y", coords.y)
    px = _require_finite("precision_x", coords.precision_x)
    py = _require_finite("precision_y", coords.precision_y)
    p = _require_finite("probability", coords.probability)
    if px <= 0 or py <= 0:
        raise BadCoordinates(f"precision must be > 0, got ({px}, {py})")
    if not 0 < p <= 1:
        raise BadCoordinates(f"probability must be in (0, 1], got {p}")
    if coords.system == GLOBAL:
        if abs(y) >= _LAT_POLE_LIMIT:
            raise BadCoordinates(f"latitude {y} too close to a pole")
        if abs(x) > 180.0:
            raise BadCoordinates(f"longitude {x} out of range")
    elif frames is not None and coords.system not in frames:
        raise BadCoordinates(f"unresolved coordinate frame {coords.system!r}")


def coords_from_wire(data: Any, error: type[Exception] = BadCoordinates) -> Coordinates2D:
    """Parse the flat wire encoding {sys, x, y, px, py, p}.

    Exactly those keys are accepted; a "z" key (or any other extra) is a
    schema violation, keeping positions strictly two-dimensional.
    """
    if not isinstance(data, dict):
        raise error(f"coordinates must be an object, got {type(data).__name__}")
    extra = set(data) - _COORD_WIRE_KEYS
    if extra:
        raise error(f"unexpected coordinate component(s): {', '.join(sorted(extra))}")
    missing = _COORD_WIRE_KEYS - set(data)
    if missing:
        raise error(f"missing coordinate component(s): {', '.join(sorted(missing))}")
    sys = data["sys"]
    if not isinstance(sys, str) or not sys:
        raise error(f"coordinate system must be a non-empty string, got {sys!r}")
    return Coordinates2D(
        system=sys,
        x=_wire_number("x", data["x"], error),
        y=_wire_number("y", data["y"], error),
        precision_x=_wire_number("px", data["px"], error),
        precision_y=_wire_number("py", data["py"], error),
        probability=_wire_number("p", data["p"], error),
    )


def _wire_number(name: str, value: Any, error: type[Exception]) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise error(f"{name} must be a number, got {value!r}")
    return float(value)


def validate_fact(fact: ContextFact, registry: ContextTypeRegistry,
                  frames: Mapping[str, LocalFrame] | None = None) -> None:
    """Check every ContextFact invariant; raise naming the first violated rule."""
    if not fact.user or not isinstance(fact.user, str):
        raise MissingUser("fact must reference exactly one user")
    _require_timestamp(fact.timestamp)
    descriptor = registry.lookup(fact.type)
    _validate_value(descriptor, fact.value, frames)


def _validate_value(descriptor: ContextTypeDescriptor, value: Any,
                    frames: Mapping[str, LocalFrame] | None = None) -> None:
    kind = descriptor.kind
    if kind == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise SchemaMismatch(f"{descriptor.name}: expected a finite number, got {value!r}")
    elif kind == "text":
        if not isinstance(value, str):
            raise SchemaMismatch(f"{descriptor.name}: expected text, got {type(value).__name__}")
    elif kind == "enum":
        if value not in descriptor.allowed:
            raise SchemaMismatch(f"{descriptor.name}: {value!r} not in allowed set")
    elif kind == "tag_set":
        if not isinstance(value, (set, frozenset)) or not all(isinstance(t, str) and t for t in value):
            raise SchemaMismatch(f"{descriptor.name}: expected a set of non-empty tags")
        if descriptor.allowed is not None and not set(value) <= descriptor.allowed:
            bad = sorted(set(value) - descriptor.allowed)
            raise SchemaMismatch(f"{descriptor.name}: tag(s) outside allowed set: {', '.join(bad)}")
    elif kind == "weighted_tags":
        if not isinstance(value, dict) or not value:
            raise SchemaMismatch(f"{descriptor.name}: expected a non-empty tag->weight map")
        for tag, weight in value.items():
            if not isinstance(tag, str) or not tag:
                raise SchemaMismatch(f"{descriptor.name}: tags must be non-empty strings")
            if isinstance(weight, bool) or not isinstance(weight, (int, float)) or not 0 <= weight <= 1:
                raise SchemaMismatch(f"{descriptor.name}: weight for {tag!r} must be in [0, 1]")
    elif kind == "coordinates":
        try:
            validate_coords(value, frames)
        except BadCoordinates as exc:
            raise SchemaMismatch(f"{descriptor.name}: {exc.detail}") from None


def normalize_value(descriptor: ContextTypeDescriptor, value: Any) -> Any:
    """Convert a JSON-decoded value into the internal representation
    (lists become tag frozensets, coordinate objects become Coordinates2D)."""
    if descriptor.kind == "tag_set" and isinstance(value, (list, tuple)):
        if not all(isinstance(t, str) for t in value):
            raise SchemaMismatch(f"{descriptor.name}: expected a list of tags")
        return frozenset(value)
    if descriptor.kind == "coordinates" and isinstance(value, dict):
        return coords_from_wire(value, error=SchemaMismatch)
    return value


def validate_fix(fix: PositionFix, devices: DeviceRegistry,
                 frames: Mapping[str, LocalFrame] | None = None) -> None:
    """Check every PositionFix invariant, including the device-owner match."""
    if not fix.user or not isinstance(fix.user, str):
        raise MissingUser("fix must reference exactly one user")
    _require_timestamp(fix.timestamp)
    if fix.technology not in TECHNOLOGIES:
        raise SchemaMismatch(f"unknown technology {fix.technology!r}")
    record = devices.lookup(fix.device)
    if record.owner != fix.user:
        raise DeviceOwnerMismatch(
            f"device {fix.device!r} belongs to {record.owner!r}, not {fix.user!r}")
    validate_coords(fix.coords, frames)
