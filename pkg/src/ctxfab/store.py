"""Validated, append-only storage of user context facts.

History is just the stored timeline: every accepted fact keeps its
timestamp and optional satisfaction rating, and queries never mutate.
Snapshots are canonical JSON (sorted keys, facts ordered by user, type,
timestamp, insertion) so save-load-save is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Iterable

from .errors import (
    BadRange,
    CorruptSnapshot,
    IoError,
    SchemaMismatch,
    UnknownType,
)
from .model import (
    ContextFact,
    ContextTypeDescriptor,
    ContextTypeRegistry,
    Coordinates2D,
    DeviceRecord,
    ItemId,
    Timestamp,
    UserId,
    UserRegistry,
    coords_from_wire,
    normalize_value,
    validate_fact,
)

SNAPSHOT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class HistoryEntry:
    """An accepted fact plus an optional satisfaction rating in [1, 5]."""

    fact: ContextFact
    rating: float | None = None
    seq: int = 0


@dataclass(frozen=True)
class Violation:
    """One consistency rule broken by one stored fact."""

    user: UserId
    type: str
    timestamp: Timestamp
    rule: str
    detail: str


class ContextStore:
    """Append-only fact store indexed by (user, type), timestamp-ordered.

    Readers see a consistent prefix of the append log; appends are
    serialized by the caller-facing methods (CPython-atomic appends plus
    validation-before-commit keep partial state out of queries).
    """

    def __init__(self, registry: ContextTypeRegistry, users: UserRegistry):
        self.registry = registry
        self.users = users
        self._entries: list[HistoryEntry] = []
        self._index: dict[tuple[UserId, str], list[HistoryEntry]] = {}
        self._seq = 0

    # -- writes ---------------------------------------------------------------

    def put_fact(self, fact: ContextFact, rating: float | None = None) -> None:
        """Validate then append; a fact about a new user introduces the user."""
        validate_fact(fact, self.registry)
        if rating is not None:
            if isinstance(rating, bool) or not isinstance(rating, (int, float)) or not 1 <= rating <= 5:
                raise SchemaMismatch(f"rating must be in [1, 5], got {rating!r}")
            rating = float(rating)
        self.users.add(fact.user)
        self._seq += 1
        entry = HistoryEntry(fact, rating, self._seq)
        self._entries.append(entry)
        key = (fact.user, fact.type)
        bucket = self._index.setdefault(key, [])
        # facts may arrive out of order; keep the index timestamp-sorted
        pos = len(bucket)
        while pos > 0 and bucket[pos - 1].fact.timestamp > fact.timestamp:
            pos -= 1
        bucket.insert(pos, entry)

    # -- queries ---------------------------------------------------------------

    def get_latest(self, user: UserId, type_name: str) -> ContextFact | None:
        if type_name not in self.registry:
            raise UnknownType(type_name)
        bucket = self._index.get((user, type_name))
        return bucket[-1].fact if bucket else None

    def query_history(self, user: UserId, type_name: str,
                      t0: Timestamp, t1: Timestamp) -> list[ContextFact]:
        if type_name not in self.registry:
            raise UnknownType(type_name)
        if t0 > t1:
            raise BadRange(f"t0={t0} > t1={t1}")
        bucket = self._index.get((user, type_name), [])
        return [e.fact for e in bucket if t0 <= e.fact.timestamp <= t1]

    def entries(self, user: UserId | None = None, type_name: str | None = None
                ) -> list[HistoryEntry]:
        """All accepted entries, optionally filtered, in insertion order."""
        result = self._entries
        if user is not None:
            result = [e for e in result if e.fact.user == user]
        if type_name is not None:
            result = [e for e in result if e.fact.type == type_name]
        return list(result)

    def __len__(self) -> int:
        return len(self._entries)

    # -- consistency -------------------------------------------------------------

    def check_consistency(self, items: Iterable[ItemId] = (),
                          devices: Iterable[str] = ()) -> list[Violation]:
        """Scan all stored facts against the current schemas and cross-fact
        rules; an empty list means the store is consistent."""
        known_items = set(items)
        known_devices = set(devices)
        violations: list[Violation] = []

        def flag(entry: HistoryEntry, rule: str, detail: str) -> None:
            violations.append(Violation(entry.fact.user, entry.fact.type,
                                        entry.fact.timestamp, rule, detail))

        for entry in self._entries:
            fact = entry.fact
            if fact.type not in self.registry:
                flag(entry, "type_registered", f"type {fact.type!r} is not registered")
                continue
            try:
                validate_fact(fact, self.registry)
            except Exception as exc:  # registry may have changed since acceptance
                flag(entry, "schema_conformance", str(exc))
            if fact.type == "visit" and known_items and fact.value not in known_items:
                flag(entry, "visit_item_known", f"visited item {fact.value!r} is not in the catalogue")
            if fact.device is not None and fact.device not in known_devices:
                flag(entry, "device_registered", f"device {fact.device!r} is not registered")
        return violations


# ---------------------------------------------------------------------------
# snapshot persistence


def _value_to_wire(value: Any) -> Any:
    if isinstance(value, frozenset):
        return sorted(value)
    if isinstance(value, Coordinates2D):
        return value.to_wire()
    return value


def _fact_to_wire(entry: HistoryEntry) -> dict:
    doc: dict[str, Any] = {
        "user": entry.fact.user,
        "type": entry.fact.type,
        "ts": entry.fact.timestamp,
        "value": _value_to_wire(entry.fact.value),
    }
    if entry.rating is not None:
        doc["rating"] = entry.rating
    if entry.fact.device is not None:
        doc["device"] = entry.fact.device
    return doc


def snapshot_document(store: ContextStore, devices: Iterable[DeviceRecord] = ()) -> dict:
    """Canonical snapshot of registries, users, devices and facts."""
    reg = store.registry
    type_docs = []
    for name in reg.names():
        d = reg.lookup(name)
        td: dict[str, Any] = {"name": d.name, "kind": d.kind}
        if d.unit is not None:
            td["unit"] = d.unit
        if d.allowed is not None:
            td["allowed"] = sorted(d.allowed)
        type_docs.append(td)
    ordered = sorted(store.entries(),
                     key=lambda e: (e.fact.user, e.fact.type, e.fact.timestamp, e.seq))
    return {
        "schema_version": SNAPSHOT_SCHEMA_VERSION,
        "context_types": type_docs,
        "users": store.users.all(),
        "devices": [
            {
                "device": r.device,
                "owner": r.owner,
                "technology": r.technology,
                "context_types": sorted(r.context_types),
                "metadata": r.metadata,
            }
            for r in sorted(devices, key=lambda r: r.device)
        ],
        "facts": [_fact_to_wire(e) for e in ordered],
    }


def snapshot_save(store: ContextStore, path: str,
                  devices: Iterable[DeviceRecord] = ()) -> None:
    doc = snapshot_document(store, devices)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write snapshot {path}: {exc}") from exc


def snapshot_load(path: str) -> tuple[ContextStore, list[DeviceRecord]]:
    """Restore a store (registry + users + facts) and the device records."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read snapshot {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"snapshot {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("schema_version") != SNAPSHOT_SCHEMA_VERSION:
        raise CorruptSnapshot(
            f"snapshot {path}: expected schema_version {SNAPSHOT_SCHEMA_VERSION}, "
            f"got {doc.get('schema_version')!r}" if isinstance(doc, dict)
            else f"snapshot {path}: top level must be an object")
    try:
        registry = ContextTypeRegistry()
        for td in doc["context_types"]:
            registry.register(ContextTypeDescriptor(
                name=td["name"],
                kind=td["kind"],
                unit=td.get("unit"),
                allowed=frozenset(td["allowed"]) if "allowed" in td else None,
            ))
        users = UserRegistry(doc["users"])
        store = ContextStore(registry, users)
        for fd in doc["facts"]:
            descriptor = registry.lookup(fd["type"])
            fact = ContextFact(
                user=fd["user"],
                type=fd["type"],
                timestamp=fd["ts"],
                value=normalize_value(descriptor, fd["value"]),
                device=fd.get("device"),
            )
            store.put_fact(fact, rating=fd.get("rating"))
        device_records = [
            DeviceRecord(
                device=dd["device"],
                owner=dd["owner"],
                technology=dd["technology"],
                context_types=frozenset(dd.get("context_types", [])),
                metadata=dd.get("metadata", ""),
            )
            for dd in doc["devices"]
        ]
    except CorruptSnapshot:
        raise
    except Exception as exc:
        raise CorruptSnapshot(f"snapshot {path} is malformed: {exc}") from exc
    return store, device_records
