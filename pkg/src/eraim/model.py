"""Domain types: anchors, ranging measurements, motion samples and epochs."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import FormatError, InvalidArgumentError
from .geodesy import LocalFrame


class Infrastructure(str, enum.Enum):
    GNSS = "GNSS"
    WIFI = "WIFI"
    CELL = "CELL"
    BLUETOOTH = "BLUETOOTH"
    GEOIP = "GEOIP"

    @property
    def terrestrial(self) -> bool:
        return self is not Infrastructure.GNSS


class ValueKind(str, enum.Enum):
    PSEUDORANGE = "PSEUDORANGE"
    RSSI = "RSSI"
    RTT_DISTANCE = "RTT_DISTANCE"


def _wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    altitude: float = 0.0

    def __post_init__(self):
        vals = (self.latitude, self.longitude, self.altitude)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"non-finite GeoPoint {vals}")
        if not -90.0 <= self.latitude <= 90.0:
            raise InvalidArgumentError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise InvalidArgumentError(f"longitude {self.longitude} out of range")


@dataclass(frozen=True)
class EnuPoint:
    east: float
    north: float
    up: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.east, self.north, self.up)):
            raise InvalidArgumentError("non-finite EnuPoint")

    @classmethod
    def from_array(cls, a) -> "EnuPoint":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.east, self.north, self.up])


def wgs84_to_enu(p: GeoPoint, origin: GeoPoint) -> EnuPoint:
    frame = LocalFrame(origin.latitude, origin.longitude, origin.altitude)
    return EnuPoint.from_array(frame.geodetic_to_enu(p.latitude, p.longitude, p.altitude))


def enu_to_wgs84(p: EnuPoint, origin: GeoPoint) -> GeoPoint:
    frame = LocalFrame(origin.latitude, origin.longitude, origin.altitude)
    lat, lon, alt = frame.enu_to_geodetic(p.as_array())
    return GeoPoint(float(lat), float(lon), float(alt))


@dataclass(frozen=True)
class Anchor:
    id: str
    infrastructure: Infrastructure
    position: GeoPoint
    metadata: Mapping[str, str] = field(default_factory=dict)
    # satellites travel with their exact ECEF coordinates
    ecef: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class RangingMeasurement:
    """One ranging observation tied to an anchor.

    ``value`` is meters for pseudoranges and RTT-derived distances and dBm
    for RSSI; ``sigma`` shares the unit of ``value``.
    """

    time: int
    anchor_id: str
    infrastructure: Infrastructure
    value: float
    value_kind: ValueKind
    sigma: float = 0.0
    frequency_hz: float | None = None

    def __post_init__(self):
        if not math.isfinite(self.value) or not math.isfinite(self.sigma):
            raise InvalidArgumentError("non-finite measurement")
        if self.sigma < 0:
            raise InvalidArgumentError("sigma must be non-negative")
        if self.value_kind is ValueKind.RSSI and self.value > 0:
            raise InvalidArgumentError(f"RSSI {self.value} dBm above 0 dBm")
        if self.value_kind in (ValueKind.PSEUDORANGE, ValueKind.RTT_DISTANCE) and self.value <= 0:
            raise InvalidArgumentError(f"{self.value_kind.value} must be positive")


@dataclass(frozen=True)
class MotionSample:
    """Onboard motion: body-frame velocity and acceleration, and roll/pitch/yaw."""

    time: int
    velocity: tuple[float, float, float]
    acceleration: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vals = (*self.velocity, *self.acceleration, *self.orientation)
        if len(vals) != 9 or not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError("motion sample needs 9 finite components")
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "acceleration", tuple(float(v) for v in self.acceleration))
        object.__setattr__(self, "orientation", tuple(_wrap_angle(float(v)) for v in self.orientation))


@dataclass(frozen=True)
class Epoch:
    """Time-aligned measurements from every infrastructure.

    ``anchors`` carries per-epoch inline anchors (GNSS satellites); terrestrial
    anchors are resolved through an :class:`AnchorRegistry`.
    """

    time: int
    measurements: tuple[RangingMeasurement, ...] = ()
    motion: MotionSample | None = None
    lbs_position: GeoPoint | None = None
    anchors: Mapping[str, Anchor] = field(default_factory=dict)

    def by_infrastructure(self) -> dict[Infrastructure, list[RangingMeasurement]]:
        out: dict[Infrastructure, list[RangingMeasurement]] = {}
        for m in self.measurements:
            out.setdefault(m.infrastructure, []).append(m)
        return out


class AnchorRegistry:
    """Read-only lookup of terrestrial anchors by (infrastructure, id)."""

    def __init__(self, anchors=()):
        self._by_key: dict[tuple[Infrastructure, str], Anchor] = {}
        for a in anchors:
            key = (a.infrastructure, a.id)
            if key in self._by_key:
                raise FormatError(f"duplicate anchor {a.infrastructure.value}/{a.id}")
            self._by_key[key] = a

    def get(self, infrastructure: Infrastructure, anchor_id: str) -> Anchor | None:
        return self._by_key.get((Infrastructure(infrastructure), anchor_id))

    def __getitem__(self, key):
        infra, anchor_id = key
        a = self.get(infra, anchor_id)
        if a is None:
            raise KeyError(key)
        return a

    def __contains__(self, key):
        return self.get(*key) is not None

    def __iter__(self):
        return iter(self._by_key.values())

    def __len__(self):
        return len(self._by_key)

    def of(self, infrastructure: Infrastructure) -> list[Anchor]:
        return [a for (i, _), a in self._by_key.items() if i is infrastructure]
