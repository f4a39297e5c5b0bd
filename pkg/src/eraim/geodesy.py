"""WGS84 geodetic, ECEF and local ENU conversions.

All solver math runs in a local east-north-up frame anchored at a fixed
scenario origin; geodetic coordinates only appear at the I/O boundary.
"""

import numpy as np

from .errors import InvalidArgumentError

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_B = WGS84_A * (1.0 - WGS84_F)
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)
WGS84_EP2 = WGS84_E2 / (1.0 - WGS84_E2)


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise InvalidArgumentError("non-finite coordinate")


def geodetic_to_ecef(lat_deg, lon_deg, alt_m):
    """Convert geodetic coordinates (degrees, meters) to ECEF meters.

    Accepts scalars or arrays; returns an array with a trailing axis of 3.
    """
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    alt = np.asarray(alt_m, dtype=float)
    _check_finite(lat, lon, alt)
    slat = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * slat**2)
    x = (n + alt) * np.cos(lat) * np.cos(lon)
    y = (n + alt) * np.cos(lat) * np.sin(lon)
    z = (n * (1.0 - WGS84_E2) + alt) * slat
    return np.stack([x, y, z], axis=-1)


def ecef_to_geodetic(xyz):
    """Convert ECEF meters to (lat_deg, lon_deg, alt_m).

    Bowring's initial estimate followed by fixed-point refinement of the
    latitude; converges to well below a micrometre for terrestrial and
    orbital altitudes.
    """
    xyz = np.asarray(xyz, dtype=float)
    _check_finite(xyz)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    lon = np.arctan2(y, x)
    p = np.hypot(x, y)
    theta = np.arctan2(z * WGS84_A, p * WGS84_B)
    lat = np.arctan2(z + WGS84_EP2 * WGS84_B * np.sin(theta) ** 3,
                     p - WGS84_E2 * WGS84_A * np.cos(theta) ** 3)
    for _ in range(5):
        slat = np.sin(lat)
        n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * slat**2)
        alt = p * np.cos(lat) + z * slat - WGS84_A**2 / n
        lat = np.arctan2(z, p * (1.0 - WGS84_E2 * n / (n + alt)))
    slat = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * slat**2)
    alt = p * np.cos(lat) + z * slat - WGS84_A**2 / n
    return np.degrees(lat), np.degrees(lon), alt


def enu_rotation(lat_deg, lon_deg):
    """Rotation matrix taking ECEF difference vectors into ENU."""
    lat, lon = np.radians(lat_deg), np.radians(lon_deg)
    sl, cl = np.sin(lat), np.cos(lat)
    so, co = np.sin(lon), np.cos(lon)
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


class LocalFrame:
    """A fixed ENU tangent frame at a geodetic origin."""

    def __init__(self, lat_deg, lon_deg, alt_m=0.0):
        _check_finite(np.array([lat_deg, lon_deg, alt_m], dtype=float))
        if not -90.0 <= lat_deg <= 90.0 or not -180.0 <= lon_deg <= 180.0:
            raise InvalidArgumentError("origin outside WGS84 bounds")
        self.lat = float(lat_deg)
        self.lon = float(lon_deg)
        self.alt = float(alt_m)
        self.origin_ecef = geodetic_to_ecef(self.lat, self.lon, self.alt)
        self.rot = enu_rotation(self.lat, self.lon)

    def ecef_to_enu(self, xyz):
        xyz = np.asarray(xyz, dtype=float)
        _check_finite(xyz)
        return (xyz - self.origin_ecef) @ self.rot.T

    def enu_to_ecef(self, enu):
        enu = np.asarray(enu, dtype=float)
        _check_finite(enu)
        return enu @ self.rot + self.origin_ecef

    def geodetic_to_enu(self, lat_deg, lon_deg, alt_m):
        return self.ecef_to_enu(geodetic_to_ecef(lat_deg, lon_deg, alt_m))

    def enu_to_geodetic(self, enu):
        return ecef_to_geodetic(self.enu_to_ecef(enu))

    def __repr__(self):
        return f"LocalFrame({self.lat!r}, {self.lon!r}, {self.alt!r})"
