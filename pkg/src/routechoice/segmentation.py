"""Flight segmentation by airline (CASK) and arrival time (1-D k-means, k = 4)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dataset import DEFAULT_CASK, FlightRecord
from .errors import DegenerateSegmentationError, InvalidInputError

log = logging.getLogger(__name__)

N_TIME_CLASSES = 4
WRAP_ANCHOR = 4.0  # hours before 04:00 belong to the previous operational day


def wrap_hours(hours) -> np.ndarray:
    """Map clock hours onto [4, 28): 01:18 becomes 25.3."""
    h = np.mod(np.asarray(hours, dtype=float), 24.0)
    return np.where(h < WRAP_ANCHOR, h + 24.0, h)


def _nearest(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin returns the lowest index on ties
    return np.argmin(np.abs(values[:, None] - centroids[None, :]), axis=1)


def kmeans_1d(x, k: int, seed: int, n_init: int = 10, max_iter: int = 300):
    """Lloyd iterations from seeded k-means++ starts; returns (centroids, labels, inertia)."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = [x[rng.integers(x.size)]]
        for _ in range(1, k):
            d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
            total = d2.sum()
            if total == 0:
                centers.append(x[rng.integers(x.size)])
            else:
                centers.append(x[rng.choice(x.size, p=d2 / total)])
        c = np.array(centers)
        labels = _nearest(x, c)
        for _ in range(max_iter):
            for j in range(k):
                members = x[labels == j]
                if members.size:
                    c[j] = members.mean()
                else:
                    # empty cluster: move it onto the worst-served point
                    c[j] = x[np.argmax(np.min(np.abs(x[:, None] - c[None, :]), axis=1))]
            new = _nearest(x, c)
            if np.array_equal(new, labels):
                break
            labels = new
        inertia = float(np.sum((x - c[labels]) ** 2))
        if best is None or inertia < best[2] - 1e-12:
            best = (c.copy(), labels.copy(), inertia)
    c, labels, inertia = best
    order = np.argsort(c, kind="stable")
    remap = np.empty(k, dtype=int)
    remap[order] = np.arange(k)
    return c[order], remap[labels], inertia


@dataclass(frozen=True)
class TimeClassModel:
    centroids: tuple
    degenerate: bool = False

    @property
    def boundaries(self) -> tuple:
        c = self.centroids
        return tuple((a + b) / 2.0 for a, b in zip(c[:-1], c[1:]))

    def ranges(self) -> list[tuple[float, float]]:
        edges = [WRAP_ANCHOR, *self.boundaries, WRAP_ANCHOR + 24.0]
        return list(zip(edges[:-1], edges[1:]))

    def assign(self, hours) -> np.ndarray:
        return _nearest(np.atleast_1d(wrap_hours(hours)), np.asarray(self.centroids))

    def to_dict(self) -> dict:
        return {"centroids": list(self.centroids), "boundaries": list(self.boundaries),
                "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeClassModel":
        return cls(tuple(float(c) for c in d["centroids"]), bool(d.get("degenerate", False)))


def fit_time_classes(arrival_hours, seed: int, k: int = N_TIME_CLASSES,
                     fallback: bool = False) -> TimeClassModel:
    """1-D k-means of wrap-extended arrival hours.

    With fewer than ``k`` distinct values this raises, unless ``fallback`` is
    set, in which case quantile centroids are used and the model is flagged.
    """
    x = wrap_hours(arrival_hours)
    if x.size == 0 or np.unique(x).size < k:
        if not fallback:
            raise DegenerateSegmentationError(
                f"need at least {k} distinct arrival times, got {np.unique(x).size}")
        log.warning("degenerate arrival-time segmentation; using quantile split")
        if x.size == 0:
            x = np.array([12.0])
        q = np.quantile(x, (np.arange(k) + 0.5) / k)
        return TimeClassModel(tuple(float(v) for v in np.sort(q)), degenerate=True)
    c, _, _ = kmeans_1d(x, k, seed)
    return TimeClassModel(tuple(float(v) for v in c))


@dataclass(frozen=True)
class AirlineClassModel:
    """One class per trained airline; airlines without a CASK share one class."""

    classes: tuple                 # tuple of tuples of airline codes
    cask: tuple                    # representative CASK per class
    airline_class: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.classes)

    def label(self, cls: int) -> str:
        return "+".join(self.classes[cls])

    def assign(self, airline: str, cask_table: Mapping[str, float]) -> int:
        if airline in self.airline_class:
            return self.airline_class[airline]
        value = cask_table.get(airline, DEFAULT_CASK)
        return nearest_cask_class(value, self.cask)

    def to_dict(self) -> dict:
        return {"classes": [list(c) for c in self.classes], "cask": list(self.cask)}

    @classmethod
    def from_dict(cls, d: dict) -> "AirlineClassModel":
        classes = tuple(tuple(c) for c in d["classes"])
        return cls(classes, tuple(float(v) for v in d["cask"]),
                   {a: i for i, group in enumerate(classes) for a in group})


def nearest_cask_class(value: float, class_cask: Sequence[float]) -> int:
    diffs = np.abs(np.asarray(class_cask, dtype=float) - value)
    return int(np.argmin(diffs))


def fit_airline_classes(airlines: Iterable[str], cask_table: Mapping[str, float]) -> AirlineClassModel:
    present = sorted(set(airlines))
    if not present:
        raise InvalidInputError("no airlines to segment")
    known = [a for a in present if a in cask_table]
    unknown = [a for a in present if a not in cask_table]
    classes = [(a,) for a in known]
    cask = [float(cask_table[a]) for a in known]
    if unknown:
        classes.append(tuple(unknown))
        cask.append(DEFAULT_CASK)
    classes = tuple(classes)
    return AirlineClassModel(classes, tuple(cask),
                             {a: i for i, group in enumerate(classes) for a in group})


@dataclass(frozen=True)
class SegmentKey:
    airline_class: int
    time_class: int

    def index(self, n_time: int = N_TIME_CLASSES) -> int:
        return self.airline_class * n_time + self.time_class


@dataclass(frozen=True)
class SegmentationModel:
    airlines: AirlineClassModel
    times: TimeClassModel
    cask_table: dict

    @property
    def n_segments(self) -> int:
        return len(self.airlines) * len(self.times.centroids)

    def assign(self, flight: FlightRecord) -> SegmentKey:
        return assign_segment(flight, self.airlines, self.times, self.cask_table)

    def assign_many(self, flights: Sequence[FlightRecord]) -> np.ndarray:
        """Segment index per flight."""
        if not flights:
            return np.zeros(0, dtype=int)
        tc = self.times.assign([f.arrival_time for f in flights])
        ac = np.array([self.airlines.assign(f.airline, self.cask_table) for f in flights])
        return ac * len(self.times.centroids) + tc

    def to_dict(self) -> dict:
        return {
            "airlines": self.airlines.to_dict(),
            "times": self.times.to_dict(),
            "cask_table": {k: self.cask_table[k] for k in sorted(self.cask_table)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SegmentationModel":
        return cls(AirlineClassModel.from_dict(d["airlines"]), TimeClassModel.from_dict(d["times"]),
                   {k: float(v) for k, v in d["cask_table"].items()})


def assign_segment(flight: FlightRecord, airline_model: AirlineClassModel,
                   time_model: TimeClassModel, cask_table: Mapping[str, float]) -> SegmentKey:
    return SegmentKey(
        airline_model.assign(flight.airline, cask_table),
        int(time_model.assign(flight.arrival_time)[0]),
    )


def fit_segmentation(flights: Sequence[FlightRecord], cask_table: Mapping[str, float],
                     seed: int) -> SegmentationModel:
    times = fit_time_classes([f.arrival_time for f in flights], seed, fallback=True)
    airlines = fit_airline_classes((f.airline for f in flights), cask_table)
    return SegmentationModel(airlines, times, dict(cask_table))
