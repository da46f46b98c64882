"""Positioning middleware: masks technology differences behind one fused
per-user position estimate.

Fusion takes the newest fix per source technology inside the staleness
window, inflates each axis sigma for age (sigma' = sqrt(sigma^2 +
(v_drift * age)^2)), and combines with probability-scaled inverse-variance
weights.  The scalar fused probability uses the mean of the two per-axis
weights, since the source probability itself is scalar.
"""

from __future__ import annotations

import bisect
import math
import threading
from dataclasses import dataclass
from typing import Callable

from .errors import BadRange, NoRecentFix
from .geometry import to_local
from .model import (
    GLOBAL,
    DeviceRecord,
    DeviceRegistry,
    LocalFrame,
    PositionFix,
    Timestamp,
    UserId,
    UserRegistry,
    validate_fix,
)

DEFAULT_T_STALE_MS = 30_000
DEFAULT_V_DRIFT_M_PER_S = 1.0

#: Most recent fixes retained per (user, technology).
BUFFER_DEPTH = 16


@dataclass(frozen=True)
class BufferedFix:
    """A validated fix converted to the model's LOCAL frame."""

    timestamp: Timestamp
    x: float
    y: float
    sigma_x: float
    sigma_y: float
    probability: float
    technology: str
    device: str
    seq: int  # arrival order, stable sort key for equal timestamps


@dataclass(frozen=True)
class ContributingSource:
    technology: str
    device: str
    age_ms: int


@dataclass(frozen=True)
class FusedPosition:
    """Best per-user position estimate at evaluation time ``timestamp``."""

    user: UserId
    timestamp: Timestamp
    x: float
    y: float
    sigma_x: float
    sigma_y: float
    probability: float
    sources: tuple[ContributingSource, ...]


class LocationMiddleware:
    """Registers devices, buffers validated fixes per user and source, and
    serves fused positions.

    Per-user ingestion is serialized; fuse/track read a consistent snapshot.
    ``on_update(user, fused)`` fires after each committed ingestion so the
    trigger engine can react.
    """

    def __init__(self, users: UserRegistry, frame: LocalFrame,
                 t_stale_ms: int = DEFAULT_T_STALE_MS,
                 v_drift: float = DEFAULT_V_DRIFT_M_PER_S,
                 on_update: Callable[[UserId, FusedPosition], None] | None = None):
        self.users = users
        self.devices = DeviceRegistry(users)
        self.frame = frame
        self.t_stale_ms = int(t_stale_ms)
        self.v_drift = float(v_drift)
        self.on_update = on_update
        self._buffers: dict[UserId, dict[str, list[BufferedFix]]] = {}
        self._user_locks: dict[UserId, threading.Lock] = {}
        self._registry_lock = threading.Lock()
        self._seq = 0

    # -- registration -------------------------------------------------------

    def register_device(self, record: DeviceRecord) -> None:
        self.devices.register(record)

    def _lock_for(self, user: UserId) -> threading.Lock:
        with self._registry_lock:
            if user not in self._user_locks:
                self._user_locks[user] = threading.Lock()
            return self._user_locks[user]

    # -- ingestion ----------------------------------------------------------

    def ingest_fix(self, fix: PositionFix) -> FusedPosition:
        """Validate, convert to LOCAL meters, buffer by timestamp, re-fuse.

        Late fixes are inserted in timestamp order and only affect later
        fuse calls; the returned fusion is evaluated at the fix's own
        timestamp (event time).
        """
        validate_fix(fix, self.devices, {self.frame.frame_id: self.frame})
        coords = fix.coords
        if coords.system == GLOBAL:
            x, y = to_local(coords.x, coords.y, self.frame)
        else:
            x, y = coords.x, coords.y
        with self._lock_for(fix.user):
            self._seq += 1
            buffered = BufferedFix(
                timestamp=fix.timestamp,
                x=x, y=y,
                sigma_x=coords.precision_x,
                sigma_y=coords.precision_y,
                probability=coords.probability,
                technology=fix.technology,
                device=fix.device,
                seq=self._seq,
            )
            per_source = self._buffers.setdefault(fix.user, {})
            bucket = per_source.setdefault(fix.technology, [])
            bisect.insort(bucket, buffered, key=lambda f: (f.timestamp, f.seq))
            if len(bucket) > BUFFER_DEPTH:
                del bucket[: len(bucket) - BUFFER_DEPTH]
        fused = self.fuse(fix.user, fix.timestamp)
        if self.on_update is not None:
            self.on_update(fix.user, fused)
        return fused

    # -- fusion -------------------------------------------------------------

    def fuse(self, user: UserId, t: Timestamp) -> FusedPosition:
        """Combine the newest eligible fix of every source at instant t."""
        per_source = self._buffers.get(user, {})
        picked: list[BufferedFix] = []
        with self._lock_for(user):
            for bucket in per_source.values():
                newest = None
                for f in bucket:
                    if f.timestamp > t:
                        break
                    if t - f.timestamp <= self.t_stale_ms:
                        newest = f
                if newest is not None:
                    picked.append(newest)
        if not picked:
            raise NoRecentFix(user)
        picked.sort(key=lambda f: (f.technology, f.device))

        sum_wx = sum_wy = 0.0
        sum_wx_x = sum_wy_y = 0.0
        sum_inv_var_x = sum_inv_var_y = 0.0
        sum_wm = sum_wm_p = 0.0
        sources = []
        for f in picked:
            age_s = (t - f.timestamp) / 1000.0
            drift2 = (self.v_drift * age_s) ** 2
            var_x = f.sigma_x ** 2 + drift2
            var_y = f.sigma_y ** 2 + drift2
            wx = f.probability / var_x
            wy = f.probability / var_y
            sum_wx += wx
            sum_wy += wy
            sum_wx_x += wx * f.x
            sum_wy_y += wy * f.y
            sum_inv_var_x += 1.0 / var_x
            sum_inv_var_y += 1.0 / var_y
            wm = (wx + wy) / 2.0
            sum_wm += wm
            sum_wm_p += wm * f.probability
            sources.append(ContributingSource(f.technology, f.device, int(t - f.timestamp)))
        return FusedPosition(
            user=user,
            timestamp=t,
            x=sum_wx_x / sum_wx,
            y=sum_wy_y / sum_wy,
            sigma_x=math.sqrt(1.0 / sum_inv_var_x),
            sigma_y=math.sqrt(1.0 / sum_inv_var_y),
            probability=sum_wm_p / sum_wm,
            sources=tuple(sources),
        )

    def track(self, user: UserId, t0: Timestamp, t1: Timestamp, step_ms: int
              ) -> list[tuple[Timestamp, FusedPosition | None]]:
        """Fuse at every grid instant in [t0, t1]; gaps are reported as None."""
        if t0 > t1 or step_ms <= 0:
            raise BadRange(f"invalid track range t0={t0} t1={t1} step={step_ms}")
        points: list[tuple[Timestamp, FusedPosition | None]] = []
        t = t0
        while t <= t1:
            try:
                points.append((t, self.fuse(user, t)))
            except NoRecentFix:
                points.append((t, None))
            t += step_ms
        return points
