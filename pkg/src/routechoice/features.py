"""Per-flight route metrics: zone distances, length, charges at weight factor 1."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import AIRAC_EPOCH, FlightRecord, airac_of
from .geo import ChargingZoneSet, route_charges, zone_distance_profile


@dataclass(frozen=True, eq=False)
class FlightMetrics:
    """Column arrays aligned with a list of flights."""

    flight_ids: list
    zone_ids: list
    zone_km: np.ndarray      # (n, n_zones)
    charges: np.ndarray      # (n,) EUR at WF = 1
    length_km: np.ndarray
    orthodrome_km: np.ndarray
    regulated: np.ndarray    # bool

    def __len__(self) -> int:
        return len(self.flight_ids)

    def raw_features(self) -> np.ndarray:
        """Clustering features: km per zone followed by charges."""
        return np.column_stack([self.zone_km, self.charges])

    def subset(self, idx) -> "FlightMetrics":
        idx = np.asarray(idx, dtype=int)
        return FlightMetrics(
            [self.flight_ids[i] for i in idx], self.zone_ids, self.zone_km[idx],
            self.charges[idx], self.length_km[idx], self.orthodrome_km[idx], self.regulated[idx],
        )


def compute_metrics(flights: Sequence[FlightRecord], zones: ChargingZoneSet,
                    period: str | None = None,
                    epoch: dt.date = AIRAC_EPOCH) -> FlightMetrics:
    """Unit rates come from ``period`` when given, else from each flight's AIRAC."""
    zone_ids = zones.ids
    col = {z: i for i, z in enumerate(zone_ids)}
    n = len(flights)
    zone_km = np.zeros((n, len(zone_ids)))
    charges = np.zeros(n)
    length = np.zeros(n)
    ortho = np.zeros(n)
    for i, f in enumerate(flights):
        prof = zone_distance_profile(f.trajectory, zones)
        for z, km in prof.km.items():
            zone_km[i, col[z]] = km
        p = period if period is not None else airac_of(f.date, epoch).id
        charges[i] = route_charges(prof, zones, 1.0, p).total
        length[i] = prof.total_km
        ortho[i] = prof.orthodrome_km
    return FlightMetrics(
        [f.flight_id for f in flights], zone_ids, zone_km, charges, length, ortho,
        np.array([f.regulated for f in flights], dtype=bool),
    )


def minmax_bounds(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return raw.min(axis=0), raw.max(axis=0)


def normalize(raw: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1] using fitted bounds; zero-range components map to 0."""
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    out = (np.asarray(raw, dtype=float) - lo) / safe
    return np.where(span > 0, out, 0.0)
