"""Flight records, AIRAC arithmetic, CASK tables and the train/validation split."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataValidationError, InvalidInputError
from .geo import Trajectory

log = logging.getLogger(__name__)

DEFAULT_CASK = 0.07
AIRAC_DAYS = 28
AIRAC_EPOCH = dt.date(2016, 1, 7)  # start of cycle 1601

_AIRPORT_RE = re.compile(r"^[A-Z]{4}$")
_AIRLINE_RE = re.compile(r"^[A-Z0-9]{2,3}$")


@dataclass(frozen=True, eq=False)
class FlightRecord:
    flight_id: str
    airline: str
    aircraft_mtow: float
    origin: str
    destination: str
    date: dt.date
    arrival_time: float
    regulated: bool
    trajectory: Trajectory

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlightRecord):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def to_dict(self) -> dict:
        return {
            "flight_id": self.flight_id,
            "airline": self.airline,
            "aircraft_mtow": self.aircraft_mtow,
            "origin": self.origin,
            "destination": self.destination,
            "date": self.date.isoformat(),
            "arrival_time": self.arrival_time,
            "regulated": self.regulated,
            "trajectory": self.trajectory.points.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FlightRecord":
        required = ("flight_id", "airline", "aircraft_mtow", "origin", "destination",
                    "date", "arrival_time", "regulated", "trajectory")
        missing = [k for k in required if k not in d]
        if missing:
            raise InvalidInputError(f"missing required field(s): {', '.join(missing)}")
        for key in ("origin", "destination"):
            if not isinstance(d[key], str) or not _AIRPORT_RE.match(d[key]):
                raise InvalidInputError(f"{key} {d[key]!r} is not a 4-letter ICAO airport code")
        if not isinstance(d["airline"], str) or not _AIRLINE_RE.match(d["airline"]):
            raise InvalidInputError(f"airline {d['airline']!r} is not an ICAO airline code")
        mtow = float(d["aircraft_mtow"])
        if not (math.isfinite(mtow) and mtow > 0):
            raise InvalidInputError(f"aircraft_mtow must be > 0, got {d['aircraft_mtow']}")
        arr = float(d["arrival_time"])
        if not math.isfinite(arr):
            raise InvalidInputError("arrival_time must be finite")
        if not isinstance(d["regulated"], bool):
            raise InvalidInputError("regulated must be a boolean")
        try:
            date = dt.date.fromisoformat(d["date"])
        except (TypeError, ValueError):
            raise InvalidInputError(f"bad date {d['date']!r}") from None
        return cls(
            flight_id=str(d["flight_id"]),
            airline=d["airline"],
            aircraft_mtow=mtow,
            origin=d["origin"],
            destination=d["destination"],
            date=date,
            arrival_time=arr,
            regulated=d["regulated"],
            trajectory=Trajectory(d["trajectory"]),
        )


def flights_to_jsonl(flights: Iterable[FlightRecord]) -> str:
    return "".join(json.dumps(f.to_dict(), separators=(",", ":")) + "\n" for f in flights)


def parse_flights(text: str, source: str = "<flights>") -> list[FlightRecord]:
    flights = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        if not line.strip():
            continue
        try:
            flights.append(FlightRecord.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{source}: line {lineno}: invalid JSON ({exc.msg})") from None
        except (InvalidInputError, TypeError, ValueError) as exc:
            raise DataValidationError(f"{source}: line {lineno}: {exc}") from None
    if not flights:
        log.warning("%s contains no flights", source)
    return flights


def load_flights(path: str | Path) -> list[FlightRecord]:
    """Read a JSON-lines flights file; malformed rows raise with their line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataValidationError(f"cannot read {path}: {exc.strerror}") from None
    return parse_flights(text, str(path))


# -- CASK ------------------------------------------------------------------

def load_cask(path: str | Path) -> dict[str, float]:
    table: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"airline", "cask_eur"} <= set(reader.fieldnames):
            raise DataValidationError(f"{path}: expected header airline,cask_eur")
        for lineno, row in enumerate(reader, start=2):
            try:
                value = float(row["cask_eur"])
            except (TypeError, ValueError):
                raise DataValidationError(f"{path}: line {lineno}: bad cask {row['cask_eur']!r}") from None
            if not (math.isfinite(value) and value > 0):
                raise DataValidationError(f"{path}: line {lineno}: cask must be > 0")
            table[row["airline"].strip()] = value
    return table


def cask_to_csv(table: dict[str, float]) -> str:
    lines = ["airline,cask_eur"] + [f"{a},{table[a]!r}" for a in sorted(table)]
    return "\n".join(lines) + "\n"


# -- AIRAC cycles ----------------------------------------------------------

@dataclass(frozen=True)
class AiracCycle:
    id: str
    start_date: dt.date
    end_date: dt.date  # exclusive

    def __contains__(self, day: dt.date) -> bool:
        return self.start_date <= day < self.end_date


def _first_index_of_year(year: int, epoch: dt.date) -> int:
    return math.ceil((dt.date(year, 1, 1) - epoch).days / AIRAC_DAYS)


def airac_of(day: dt.date, epoch: dt.date = AIRAC_EPOCH) -> AiracCycle:
    n = (day - epoch).days // AIRAC_DAYS
    start = epoch + dt.timedelta(days=AIRAC_DAYS * n)
    cc = n - _first_index_of_year(start.year, epoch) + 1
    return AiracCycle(f"{start.year % 100:02d}{cc:02d}", start, start + dt.timedelta(days=AIRAC_DAYS))


def airac_cycle(cycle_id: str, epoch: dt.date = AIRAC_EPOCH) -> AiracCycle:
    if not re.fullmatch(r"\d{4}", str(cycle_id)):
        raise InvalidInputError(f"AIRAC id must be YYCC, got {cycle_id!r}")
    year = 2000 + int(cycle_id[:2])
    cc = int(cycle_id[2:])
    first = _first_index_of_year(year, epoch)
    n_in_year = _first_index_of_year(year + 1, epoch) - first
    if not 1 <= cc <= n_in_year:
        raise InvalidInputError(f"AIRAC {cycle_id}: year {year} has {n_in_year} cycles")
    start = epoch + dt.timedelta(days=AIRAC_DAYS * (first + cc - 1))
    return AiracCycle(cycle_id, start, start + dt.timedelta(days=AIRAC_DAYS))


# -- splitting -------------------------------------------------------------

def split_train_validation(flights: Sequence, ratio: float, seed: int):
    """Seeded random partition; the training side gets round-half-up(ratio * N)."""
    if not 0.0 < ratio < 1.0:
        raise InvalidInputError(f"split ratio must be in (0, 1), got {ratio}")
    n = len(flights)
    n_train = math.floor(ratio * n + 0.5)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    val_idx = np.sort(perm[n_train:])
    return [flights[i] for i in train_idx], [flights[i] for i in val_idx]


@dataclass(frozen=True)
class DatasetSplit:
    training: list
    validation: list
    testing_cluster_airac: list
    testing_eval_airacs: list


def filter_od(flights: Iterable[FlightRecord], origins: Sequence[str] | None,
              destinations: Sequence[str] | None) -> list[FlightRecord]:
    return [
        f for f in flights
        if (not origins or f.origin in origins) and (not destinations or f.destination in destinations)
    ]


def flights_in_airacs(flights: Iterable[FlightRecord], airacs: Sequence[str],
                      epoch: dt.date = AIRAC_EPOCH) -> list[FlightRecord]:
    wanted = set(airacs)
    return [f for f in flights if airac_of(f.date, epoch).id in wanted]


def make_split(flights: Sequence[FlightRecord], training_airacs: Sequence[str],
               testing_airacs: Sequence[str], ratio: float, seed: int,
               epoch: dt.date = AIRAC_EPOCH) -> DatasetSplit:
    if len(testing_airacs) < 2:
        raise InvalidInputError("at least two testing AIRACs are required")
    if set(training_airacs) & set(testing_airacs):
        raise InvalidInputError("training and testing AIRACs overlap")
    train_period = flights_in_airacs(flights, training_airacs, epoch)
    train, val = split_train_validation(train_period, ratio, seed)
    return DatasetSplit(
        training=train,
        validation=val,
        testing_cluster_airac=flights_in_airacs(flights, testing_airacs[:1], epoch),
        testing_eval_airacs=flights_in_airacs(flights, testing_airacs[1:], epoch),
    )


# -- ground-truth labels (synthetic data) -----------------------------------

def labels_to_csv(labels: dict[str, str]) -> str:
    return "flight_id,corridor\n" + "".join(f"{k},{v}\n" for k, v in labels.items())


def load_labels(path: str | Path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["flight_id"]: row["corridor"] for row in csv.DictReader(fh)}
