"""Spherical geometry: epicentral distances, cap areas, and study regions.

Distances are great-circle kilometres on a spherical Earth of IUGG mean
radius. Ellipsoidal corrections are below the precision of 50-km-scale
alarm geometry and are deliberately not applied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_KM = 6371.0088
EARTH_AREA_KM2 = 4.0 * math.pi * EARTH_RADIUS_KM**2
HALF_CIRCUMFERENCE_KM = math.pi * EARTH_RADIUS_KM


def normalize_lon(lon: float) -> float:
    """Map a longitude in degrees onto [-180, 180)."""
    wrapped = math.fmod(lon + 180.0, 360.0)
    if wrapped < 0.0:
        wrapped += 360.0
    return wrapped - 180.0


@dataclass(frozen=True)
class GeoPoint:
    """Point on the sphere: latitude in [-90, 90], longitude stored in [-180, 180)."""

    lat: float
    lon: float

    def __post_init__(self):
        if not math.isfinite(self.lat) or not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat!r} outside [-90, 90]")
        if not math.isfinite(self.lon):
            raise ValueError(f"longitude {self.lon!r} is not finite")
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "lon", normalize_lon(float(self.lon)))


def great_circle_km_arrays(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised haversine distance in km between degree coordinates."""
    lat1, lon1, lat2, lon2 = (
        np.radians(np.asarray(x, dtype=float)) for x in (lat1, lon1, lat2, lon2)
    )
    sin_dlat = np.sin((lat2 - lat1) / 2.0)
    sin_dlon = np.sin((lon2 - lon1) / 2.0)
    h = sin_dlat**2 + np.cos(lat1) * np.cos(lat2) * sin_dlon**2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def great_circle_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km between two points."""
    return float(great_circle_km_arrays(a.lat, a.lon, b.lat, b.lon))


def cap_area_km2(radius_km: float) -> float:
    """Area in km^2 of a spherical cap of the given great-circle radius.

    2*pi*R^2*(1 - cos(r/R)); a radius of half the circumference gives the
    whole sphere.
    """
    if not math.isfinite(radius_km) or radius_km < 0.0:
        raise ValueError(f"cap radius must be a nonnegative number, got {radius_km!r}")
    if radius_km > HALF_CIRCUMFERENCE_KM * (1.0 + 1e-12):
        raise ValueError(
            f"cap radius {radius_km} km exceeds half the circumference "
            f"({HALF_CIRCUMFERENCE_KM:.1f} km)"
        )
    radius_km = min(radius_km, HALF_CIRCUMFERENCE_KM)
    return 2.0 * math.pi * EARTH_RADIUS_KM**2 * (1.0 - math.cos(radius_km / EARTH_RADIUS_KM))


def _latlon_from_unit(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lat = np.degrees(np.arcsin(np.clip(xyz[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0]))
    return lat, lon


def _unit_from_latlon(lat_deg: float, lon_deg: float) -> np.ndarray:
    lat = math.radians(lat_deg)
    lon = math.radians(lon_deg)
    return np.array(
        [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
    )


@dataclass(frozen=True)
class GlobalSphere:
    """The whole sphere."""

    @property
    def area_km2(self) -> float:
        return EARTH_AREA_KM2

    def contains(self, p: GeoPoint) -> bool:
        return True

    def contains_arrays(self, lat, lon) -> np.ndarray:
        return np.ones(np.broadcast(np.asarray(lat), np.asarray(lon)).shape, dtype=bool)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """n points uniform by area: sin(lat) uniform, lon uniform."""
        z = rng.uniform(-1.0, 1.0, size=n)
        lat = np.degrees(np.arcsin(z))
        lon = rng.uniform(-180.0, 180.0, size=n)
        return lat, lon


@dataclass(frozen=True)
class LatLonBox:
    """Latitude-longitude box; crosses the dateline when lon_max < lon_min.

    Edges are inclusive on all sides; grids built from shared edges should
    resolve boundary points by first match.
    """

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not (-90.0 <= self.lat_min < self.lat_max <= 90.0):
            raise ValueError(
                f"need -90 <= lat_min < lat_max <= 90, got [{self.lat_min}, {self.lat_max}]"
            )

    @property
    def lon_width_deg(self) -> float:
        width = math.fmod(self.lon_max - self.lon_min, 360.0)
        if width < 0.0:
            width += 360.0
        return width if width > 0.0 else 360.0

    @property
    def area_km2(self) -> float:
        band = math.sin(math.radians(self.lat_max)) - math.sin(math.radians(self.lat_min))
        return EARTH_RADIUS_KM**2 * math.radians(self.lon_width_deg) * band

    def contains(self, p: GeoPoint) -> bool:
        return bool(self.contains_arrays(p.lat, p.lon))

    def contains_arrays(self, lat, lon) -> np.ndarray:
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        dlon = np.mod(lon - self.lon_min, 360.0)
        return (lat >= self.lat_min) & (lat <= self.lat_max) & (dlon <= self.lon_width_deg)

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        z = rng.uniform(
            math.sin(math.radians(self.lat_min)), math.sin(math.radians(self.lat_max)), size=n
        )
        lat = np.degrees(np.arcsin(np.clip(z, -1.0, 1.0)))
        lon = self.lon_min + rng.uniform(0.0, self.lon_width_deg, size=n)
        lon = np.array([normalize_lon(x) for x in lon])
        return lat, lon


@dataclass(frozen=True)
class SphericalCap:
    """Spherical cap: all points within a great-circle radius of a center."""

    center: GeoPoint
    radius_km: float

    def __post_init__(self):
        if not (0.0 < self.radius_km <= HALF_CIRCUMFERENCE_KM):
            raise ValueError(f"cap radius must be in (0, {HALF_CIRCUMFERENCE_KM:.1f}] km")

    @property
    def area_km2(self) -> float:
        return cap_area_km2(self.radius_km)

    def contains(self, p: GeoPoint) -> bool:
        return great_circle_km(self.center, p) <= self.radius_km

    def contains_arrays(self, lat, lon) -> np.ndarray:
        d = great_circle_km_arrays(lat, lon, self.center.lat, self.center.lon)
        return d <= self.radius_km

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """Area-uniform points: sample around the pole, rotate onto the center."""
        alpha = self.radius_km / EARTH_RADIUS_KM
        cos_theta = 1.0 - rng.uniform(0.0, 1.0, size=n) * (1.0 - math.cos(alpha))
        sin_theta = np.sqrt(np.clip(1.0 - cos_theta**2, 0.0, 1.0))
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
        pts = np.stack(
            [sin_theta * np.cos(phi), sin_theta * np.sin(phi), cos_theta], axis=-1
        )
        rot = _rotation_from_pole(_unit_from_latlon(self.center.lat, self.center.lon))
        return _latlon_from_unit(pts @ rot.T)


def _rotation_from_pole(target: np.ndarray) -> np.ndarray:
    """Rotation matrix taking the +z pole onto the target unit vector."""
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(z, target))
    if c > 1.0 - 1e-15:
        return np.eye(3)
    if c < -1.0 + 1e-15:
        return np.diag([1.0, -1.0, -1.0])
    axis = np.cross(z, target)
    axis /= np.linalg.norm(axis)
    s = math.sqrt(max(0.0, 1.0 - c * c))
    k = np.array(
        [[0.0, -axis[2], axis[1]], [axis[2], 0.0, -axis[0]], [-axis[1], axis[0], 0.0]]
    )
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


Region = GlobalSphere | LatLonBox | SphericalCap
