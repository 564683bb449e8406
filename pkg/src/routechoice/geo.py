"""Great-circle geometry, per-zone distance decomposition and en-route charges.

Distances are computed on a sphere (haversine).  The distance factor of a
charging zone is approximated by the great-circle kilometres actually flown
inside it rather than the entry/exit geodesic; both agree for near-geodesic
segments.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DataValidationError, InvalidInputError

EARTH_RADIUS_KM = 6371.0
KM_PER_NM = 1.852
# segments longer than this are split before midpoint zone attribution
DENSIFY_KM = 50.0


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise InvalidInputError(f"non-finite coordinates ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInputError(f"latitude {self.lat} outside [-90, 90]")


def haversine_km(lat1, lon1, lat2, lon2, radius_km: float = EARTH_RADIUS_KM):
    """Vectorised haversine distance; inputs in degrees."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2.0) ** 2
    return 2.0 * radius_km * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _latlon(p) -> tuple[float, float]:
    if isinstance(p, GeoPoint):
        return p.lat, p.lon
    lat, lon = p
    return float(lat), float(lon)


def great_circle_km(a, b, radius_km: float = EARTH_RADIUS_KM) -> float:
    """Great-circle distance in kilometres between two (lat, lon) points."""
    lat1, lon1 = _latlon(a)
    lat2, lon2 = _latlon(b)
    if not all(math.isfinite(v) for v in (lat1, lon1, lat2, lon2)):
        raise InvalidInputError("non-finite coordinates")
    if lat1 == lat2 and lon1 == lon2:
        return 0.0
    return float(haversine_km(lat1, lon1, lat2, lon2, radius_km))


def weight_factor(mtow_tonnes: float) -> float:
    """Weight factor: square root of MTOW (tonnes) divided by fifty."""
    if not (math.isfinite(mtow_tonnes) and mtow_tonnes > 0):
        raise InvalidInputError(f"MTOW must be positive, got {mtow_tonnes}")
    return math.sqrt(mtow_tonnes / 50.0)


class Trajectory:
    """Ordered 4D points stored as an ``(n, 4)`` array of lat, lon, alt_ft, time_s."""

    __slots__ = ("points",)

    def __init__(self, points) -> None:
        arr = np.asarray(points, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise InvalidInputError("trajectory points must be rows of (lat, lon, alt_ft, time_s)")
        if arr.shape[0] < 2:
            raise InvalidInputError("trajectory needs at least 2 points")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("trajectory contains non-finite values")
        if np.any(np.abs(arr[:, 0]) > 90.0):
            raise InvalidInputError("trajectory latitude outside [-90, 90]")
        if np.any(arr[:, 2] < 0):
            raise InvalidInputError("trajectory altitude must be >= 0 ft")
        if np.any(np.diff(arr[:, 3]) < 0):
            raise InvalidInputError("trajectory times must be non-decreasing")
        arr.setflags(write=False)
        self.points = arr

    @property
    def lat(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def lon(self) -> np.ndarray:
        return self.points[:, 1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Trajectory) and np.array_equal(self.points, other.points)

    def __repr__(self) -> str:
        return f"Trajectory(n={len(self)})"

    def length_km(self, radius_km: float = EARTH_RADIUS_KM) -> float:
        p = self.points
        return float(np.sum(haversine_km(p[:-1, 0], p[:-1, 1], p[1:, 0], p[1:, 1], radius_km)))

    def orthodrome_km(self, radius_km: float = EARTH_RADIUS_KM) -> float:
        p = self.points
        return float(haversine_km(p[0, 0], p[0, 1], p[-1, 0], p[-1, 1], radius_km))


@dataclass(frozen=True, eq=False)
class ChargingZone:
    id: str
    rings: tuple  # tuple of (m, 2) arrays of (lat, lon), each closed
    unit_rates: Mapping[str, float]

    def __post_init__(self) -> None:
        if not self.rings:
            raise InvalidInputError(f"zone {self.id}: no polygon rings")
        for ring in self.rings:
            if ring.shape[0] < 4 or not np.array_equal(ring[0], ring[-1]):
                raise InvalidInputError(f"zone {self.id}: polygon ring is not closed")
        for period, rate in self.unit_rates.items():
            if not (math.isfinite(rate) and rate > 0):
                raise InvalidInputError(f"zone {self.id}: unit rate for {period} must be > 0")

    def contains(self, lat, lon) -> np.ndarray:
        """Even-odd point-in-polygon test over all rings (vectorised)."""
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        inside = np.zeros(lat.shape, dtype=bool)
        for ring in self.rings:
            y0, x0 = ring[:-1, 0], ring[:-1, 1]
            y1, x1 = ring[1:, 0], ring[1:, 1]
            for ya, xa, yb, xb in zip(y0, x0, y1, x1):
                crosses = (ya > lat) != (yb > lat)
                if not crosses.any():
                    continue
                with np.errstate(divide="ignore", invalid="ignore"):
                    x_at = xa + (lat - ya) * (xb - xa) / (yb - ya)
                inside ^= crosses & (lon < x_at)
        return inside


@dataclass(frozen=True, eq=False)
class ChargingZoneSet:
    zones: tuple

    def __post_init__(self) -> None:
        ids = [z.id for z in self.zones]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("duplicate zone ids")

    @property
    def ids(self) -> list[str]:
        return [z.id for z in self.zones]

    def __len__(self) -> int:
        return len(self.zones)

    def __iter__(self):
        return iter(self.zones)

    def get(self, zone_id: str) -> ChargingZone:
        for z in self.zones:
            if z.id == zone_id:
                return z
        raise KeyError(zone_id)

    def unit_rate(self, zone_id: str, period: str) -> float:
        try:
            return float(self.get(zone_id).unit_rates[period])
        except KeyError:
            raise ConfigurationError(
                f"no unit rate for zone {zone_id!r} in period {period!r}"
            ) from None

    def scaled(self, factor: float) -> "ChargingZoneSet":
        return ChargingZoneSet(
            tuple(
                ChargingZone(z.id, z.rings, {p: r * factor for p, r in z.unit_rates.items()})
                for z in self.zones
            )
        )


def rectangle_zone(zone_id: str, lat_min: float, lat_max: float, lon_min: float,
                   lon_max: float, unit_rates: Mapping[str, float]) -> ChargingZone:
    ring = np.array([
        [lat_min, lon_min], [lat_min, lon_max], [lat_max, lon_max],
        [lat_max, lon_min], [lat_min, lon_min],
    ])
    return ChargingZone(zone_id, (ring,), dict(unit_rates))


@dataclass(frozen=True)
class ZoneDistanceProfile:
    km: dict = field(default_factory=dict)
    total_km: float = 0.0
    orthodrome_km: float = 0.0


@dataclass(frozen=True)
class ChargeBreakdown:
    per_zone: dict
    total: float
    weight_factor: float
    distance_factors: dict


def _slerp_points(lat1, lon1, lat2, lon2, fractions):
    """Points at the given fractions along great circles (vectorised per segment)."""
    def to_xyz(lat, lon):
        phi, lmb = np.radians(lat), np.radians(lon)
        return np.stack([np.cos(phi) * np.cos(lmb), np.cos(phi) * np.sin(lmb), np.sin(phi)], axis=-1)

    a = to_xyz(lat1, lon1)
    b = to_xyz(lat2, lon2)
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    omega = np.arccos(dot)[..., None]
    f = fractions[..., None]
    small = omega < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        sin_o = np.sin(omega)
        wa = np.where(small, 1.0 - f, np.sin((1.0 - f) * omega) / sin_o)
        wb = np.where(small, f, np.sin(f * omega) / sin_o)
    p = wa * a + wb * b
    p /= np.linalg.norm(p, axis=-1, keepdims=True)
    lat = np.degrees(np.arcsin(np.clip(p[..., 2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(p[..., 1], p[..., 0]))
    return lat, lon


def zone_distance_profile(trajectory: Trajectory, zones: ChargingZoneSet,
                          radius_km: float = EARTH_RADIUS_KM,
                          densify_km: float = DENSIFY_KM) -> ZoneDistanceProfile:
    """Attribute each flown segment to the zone containing its midpoint.

    Segments longer than ``densify_km`` are first split into equal great-circle
    pieces.  Overlapping zones resolve to the first zone in file order.
    """
    if len(trajectory) < 2:
        raise InvalidInputError("trajectory needs at least 2 points")
    p = trajectory.points
    seg = haversine_km(p[:-1, 0], p[:-1, 1], p[1:, 0], p[1:, 1], radius_km)
    pieces = np.maximum(1, np.ceil(seg / densify_km)).astype(int)
    idx = np.repeat(np.arange(seg.size), pieces)
    # fraction of the way along each parent segment for each piece midpoint
    offsets = np.arange(idx.size) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    frac = (offsets + 0.5) / pieces[idx]
    mid_lat, mid_lon = _slerp_points(p[idx, 0], p[idx, 1], p[idx + 1, 0], p[idx + 1, 1], frac)
    lengths = seg[idx] / pieces[idx]

    unassigned = np.ones(lengths.size, dtype=bool)
    km: dict[str, float] = {}
    for zone in zones:
        hit = unassigned & zone.contains(mid_lat, mid_lon)
        if hit.any():
            km[zone.id] = float(np.sum(lengths[hit]))
            unassigned &= ~hit
    return ZoneDistanceProfile(
        km=km,
        total_km=float(np.sum(seg)),
        orthodrome_km=trajectory.orthodrome_km(radius_km),
    )


def route_charges(profile: ZoneDistanceProfile, zones: ChargingZoneSet, wf: float,
                  period: str) -> ChargeBreakdown:
    """Charge per zone = unit rate x (km / 100) x weight factor."""
    if not (math.isfinite(wf) and wf > 0):
        raise InvalidInputError(f"weight factor must be positive, got {wf}")
    per_zone: dict[str, float] = {}
    dfs: dict[str, float] = {}
    for zone_id, km in profile.km.items():
        rate = zones.unit_rate(zone_id, period)
        dfs[zone_id] = km / 100.0
        per_zone[zone_id] = rate * dfs[zone_id] * wf
    return ChargeBreakdown(per_zone, float(sum(per_zone.values())), wf, dfs)


# -- zones file (GeoJSON FeatureCollection, coordinates as [lon, lat]) -------

def _rings_from_geometry(geom: dict, zone_id: str) -> tuple:
    kind = geom.get("type")
    if kind == "Polygon":
        polys = [geom["coordinates"]]
    elif kind == "MultiPolygon":
        polys = geom["coordinates"]
    else:
        raise DataValidationError(f"zone {zone_id}: unsupported geometry type {kind!r}")
    rings = []
    for poly in polys:
        for ring in poly:
            arr = np.asarray(ring, dtype=float)
            if arr.ndim != 2 or arr.shape[1] < 2:
                raise DataValidationError(f"zone {zone_id}: malformed ring")
            rings.append(arr[:, [1, 0]].copy())
    return tuple(rings)


def zones_from_geojson(doc: dict) -> ChargingZoneSet:
    if doc.get("type") != "FeatureCollection":
        raise DataValidationError("zones file must be a GeoJSON FeatureCollection")
    zones = []
    for i, feat in enumerate(doc.get("features", [])):
        props = feat.get("properties") or {}
        zone_id = props.get("id")
        if not zone_id:
            raise DataValidationError(f"feature {i}: missing properties.id")
        rates = props.get("unit_rates")
        if not isinstance(rates, dict) or not rates:
            raise DataValidationError(f"zone {zone_id}: missing unit_rates")
        try:
            zones.append(ChargingZone(
                str(zone_id),
                _rings_from_geometry(feat.get("geometry") or {}, zone_id),
                {str(k): float(v) for k, v in rates.items()},
            ))
        except InvalidInputError as exc:
            raise DataValidationError(str(exc)) from None
    try:
        return ChargingZoneSet(tuple(zones))
    except InvalidInputError as exc:
        raise DataValidationError(str(exc)) from None


def zones_to_geojson(zones: ChargingZoneSet) -> dict:
    features = []
    for z in zones:
        rings = [[[float(lon), float(lat)] for lat, lon in ring] for ring in z.rings]
        features.append({
            "type": "Feature",
            "properties": {"id": z.id, "unit_rates": {k: z.unit_rates[k] for k in sorted(z.unit_rates)}},
            "geometry": {"type": "Polygon", "coordinates": rings},
        })
    return {"type": "FeatureCollection", "features": features}


def load_zones(path: str | Path) -> ChargingZoneSet:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}: invalid JSON ({exc})") from None
    return zones_from_geojson(doc)


def centerline_profile(waypoints: Sequence[Sequence[float]], zones: ChargingZoneSet,
                       radius_km: float = EARTH_RADIUS_KM) -> ZoneDistanceProfile:
    """Profile of a polyline given only as (lat, lon) waypoints."""
    pts = [(lat, lon, 0.0, float(i)) for i, (lat, lon) in enumerate(waypoints)]
    return zone_distance_profile(Trajectory(pts), zones, radius_km)

