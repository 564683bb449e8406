"""Deterministic synthetic flight datasets.

A scenario declares rectangular charging zones, route corridors (waypoint
polylines with lateral jitter), an airline mix and one or more periods of
AIRAC cycles.  Each airline picks corridors either from fixed preference
weights (plus a global noise fraction) or from a ground-truth multinomial
logit over the corridors' normalised length, charges and regulated rate, in
which case "other" (a random off-corridor trajectory) has exponent 0.
"""

from __future__ import annotations

import copy
import datetime as dt
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import (
    AIRAC_EPOCH,
    FlightRecord,
    airac_cycle,
    cask_to_csv,
    flights_to_jsonl,
    labels_to_csv,
)
from .errors import InvalidInputError
from .fileio import dumps_canonical
from .geo import (
    KM_PER_NM,
    ChargingZoneSet,
    Trajectory,
    _slerp_points,
    centerline_profile,
    haversine_km,
    rectangle_zone,
    route_charges,
    zones_to_geojson,
)

KM_PER_DEG = 111.195


@dataclass
class SynthResult:
    flights: list
    zones: ChargingZoneSet
    cask: dict
    labels: dict
    truth: dict

    def files(self) -> dict:
        return {
            "flights.jsonl": flights_to_jsonl(self.flights),
            "zones.json": dumps_canonical(zones_to_geojson(self.zones)),
            "cask.csv": cask_to_csv(self.cask),
            "labels.csv": labels_to_csv(self.labels),
        }


def _period_airacs(spec: dict) -> list[tuple[int, str]]:
    return [(i, a) for i, p in enumerate(spec["periods"]) for a in p["airacs"]]


def build_zones(spec: dict) -> ChargingZoneSet:
    zones = []
    for z in spec["zones"]:
        rates = {}
        for i, airac in _period_airacs(spec):
            scale = spec["periods"][i].get("rate_scale", {}).get(z["id"], 1.0)
            rates[airac] = float(z["unit_rate"]) * scale
        lat0, lat1, lon0, lon1 = z["bounds"]
        zones.append(rectangle_zone(z["id"], lat0, lat1, lon0, lon1, rates))
    return ChargingZoneSet(tuple(zones))


def corridor_attributes(spec: dict, zones: ChargingZoneSet, period: int) -> np.ndarray:
    """(length_nm, charges_eur, regulated_rate) of each corridor centreline."""
    o, d = spec["origins"][0], spec["destinations"][0]
    airac = spec["periods"][period]["airacs"][0]
    rows = []
    for j, c in enumerate(spec["corridors"]):
        pts = [(o["lat"], o["lon"]), *map(tuple, c["waypoints"]), (d["lat"], d["lon"])]
        prof = centerline_profile(pts, zones)
        rows.append((prof.total_km / KM_PER_NM, route_charges(prof, zones, 1.0, airac).total,
                     _regulated_rate(spec, period, j)))
    return np.array(rows)


def _regulated_rate(spec: dict, period: int, corridor: int) -> float:
    override = spec["periods"][period].get("regulated_rates")
    if override is not None:
        return float(override[corridor])
    return float(spec["corridors"][corridor].get("regulated_rate", 0.0))


def normalized_attributes(spec: dict, zones: ChargingZoneSet, period: int) -> np.ndarray:
    """Corridor attributes scaled with the reference period's bounds onto [-1, 1]."""
    ref = corridor_attributes(spec, zones, spec.get("reference_period", 0))
    cur = corridor_attributes(spec, zones, period)
    out = cur.copy()
    for k in (0, 1):
        lo, hi = ref[:, k].min(), ref[:, k].max()
        out[:, k] = 0.0 if hi <= lo else 2.0 * (cur[:, k] - lo) / (hi - lo) - 1.0
    return out


def choice_probabilities(spec: dict, airline: dict, x: np.ndarray) -> np.ndarray:
    """Probabilities over corridors followed by "other"."""
    n = len(spec["corridors"])
    allowed = airline.get("corridors", list(range(n)))
    if "betas" in airline:
        A = np.full(n, -np.inf)
        A[allowed] = x[allowed] @ np.asarray(airline["betas"], dtype=float)
        A = np.append(A, 0.0)
        e = np.exp(A - A.max())
        return e / e.sum()
    w = np.zeros(n)
    w[allowed] = np.asarray(airline["weights"], dtype=float)[allowed]
    w = w / w.sum()
    noise = float(spec.get("noise_fraction", 0.0))
    return np.append(w * (1.0 - noise), noise)


def _polyline(rng, pts, jitter_km: float) -> np.ndarray:
    pts = np.array(pts, dtype=float)
    if jitter_km > 0 and len(pts) > 2:
        dn = rng.normal(0.0, jitter_km, size=len(pts) - 2)
        de = rng.normal(0.0, jitter_km, size=len(pts) - 2)
        pts[1:-1, 0] += dn / KM_PER_DEG
        pts[1:-1, 1] += de / (KM_PER_DEG * np.cos(np.radians(pts[1:-1, 0])))
    return pts


def _densify(pts: np.ndarray, spacing_km: float) -> np.ndarray:
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        d = float(haversine_km(a[0], a[1], b[0], b[1]))
        m = max(1, math.ceil(d / spacing_km))
        f = np.arange(1, m + 1) / m
        lat, lon = _slerp_points(np.full(m, a[0]), np.full(m, a[1]), np.full(m, b[0]), np.full(m, b[1]), f)
        out.append(np.column_stack([lat, lon]))
    return np.vstack(out)


def _trajectory(latlon: np.ndarray, arrival: dt.datetime, spec: dict) -> Trajectory:
    seg = haversine_km(latlon[:-1, 0], latlon[:-1, 1], latlon[1:, 0], latlon[1:, 1])
    dist = np.concatenate([[0.0], np.cumsum(seg)])
    speed_kms = float(spec.get("cruise_kt", 450.0)) * KM_PER_NM / 3600.0
    t_arr = (arrival - dt.datetime(1970, 1, 1)).total_seconds()
    times = np.round(t_arr - (dist[-1] - dist) / speed_kms)
    cruise = float(spec.get("altitude_ft", 36000.0))
    ramp = np.minimum(1.0, np.minimum(dist, dist[-1] - dist) / 200.0)
    alt = np.round(cruise * ramp)
    pts = np.column_stack([np.round(latlon, 5), alt, times])
    return Trajectory(pts)


def _centerline_points(spec: dict) -> np.ndarray:
    o, d = spec["origins"][0], spec["destinations"][0]
    pts = []
    for c in spec["corridors"]:
        line = [(o["lat"], o["lon"]), *map(tuple, c["waypoints"]), (d["lat"], d["lon"])]
        pts.extend(_densify(np.array(line, dtype=float), 25.0))
    return np.array(pts)


def _noise_waypoints(rng, spec: dict, centerlines: np.ndarray | None = None) -> list:
    """Two random waypoints, each at least ``noise_clearance_km`` from every corridor."""
    lat0, lat1, lon0, lon1 = spec.get("noise_box", [28.0, 52.0, -30.0, 8.0])
    clearance = float(spec.get("noise_clearance_km", 0.0))
    out = []
    for _ in range(2):
        for _attempt in range(1000):
            p = (float(rng.uniform(lat0, lat1)), float(rng.uniform(lon0, lon1)))
            if clearance <= 0 or centerlines is None:
                break
            gap = haversine_km(p[0], p[1], centerlines[:, 0], centerlines[:, 1]).min()
            if gap >= clearance:
                break
        else:
            raise InvalidInputError("noise_box leaves no room outside the corridor clearance")
        out.append(p)
    return out


def validate_spec(spec: dict) -> None:
    for key in ("zones", "corridors", "airlines", "periods", "origins", "destinations"):
        if key not in spec:
            raise InvalidInputError(f"synthetic spec lacks {key!r}")
    if not spec["corridors"]:
        raise InvalidInputError("synthetic spec needs at least one route corridor")
    if not spec["airlines"]:
        raise InvalidInputError("synthetic spec needs at least one airline")
    for a in spec["airlines"]:
        if "betas" not in a and "weights" not in a:
            raise InvalidInputError(f"airline {a.get('code')}: needs weights or betas")


def synth_generate(spec: dict, seed: int, epoch: dt.date = AIRAC_EPOCH) -> SynthResult:
    validate_spec(spec)
    rng = np.random.default_rng(seed)
    zones = build_zones(spec)
    centerlines = _centerline_points(spec)
    airlines = spec["airlines"]
    shares = np.array([a.get("share", 1.0) for a in airlines], dtype=float)
    shares /= shares.sum()
    default_modes = spec.get("arrival_modes", [[12.0, 3.0, 1.0]])
    n_corr = len(spec["corridors"])

    flights, labels = [], {}
    truth = {"periods": []}
    counter = 0
    for pi, period in enumerate(spec["periods"]):
        x = normalized_attributes(spec, zones, pi)
        probs = {a["code"]: choice_probabilities(spec, a, x) for a in airlines}
        truth["periods"].append({
            "airacs": list(period["airacs"]),
            "normalized_attributes": x.tolist(),
            "probabilities": {k: v.tolist() for k, v in probs.items()},
        })
        cycles = [airac_cycle(a, epoch) for a in period["airacs"]]
        n = int(period["n_flights"])
        for _ in range(n):
            ai = int(rng.choice(len(airlines), p=shares))
            air = airlines[ai]
            cyc = cycles[int(rng.integers(len(cycles)))]
            day = cyc.start_date + dt.timedelta(days=int(rng.integers(28)))
            modes = np.array(air.get("arrival_modes", default_modes), dtype=float)
            mi = int(rng.choice(len(modes), p=modes[:, 2] / modes[:, 2].sum()))
            hour = float(np.mod(rng.normal(modes[mi, 0], modes[mi, 1]), 24.0))
            hour = round(hour, 4) % 24.0
            choice = int(rng.choice(n_corr + 1, p=probs[air["code"]]))
            o = spec["origins"][int(rng.integers(len(spec["origins"])))]
            d = spec["destinations"][int(rng.integers(len(spec["destinations"])))]
            if choice < n_corr:
                corr = spec["corridors"][choice]
                wps = [tuple(w) for w in corr["waypoints"]]
                jitter = float(corr.get("jitter_km", 10.0))
                rate = _regulated_rate(spec, pi, choice)
                label = str(choice)
            else:
                wps = _noise_waypoints(rng, spec, centerlines)
                jitter = 0.0
                rate = float(spec.get("noise_regulated_rate", 0.1))
                label = "other"
            poly = _polyline(rng, [(o["lat"], o["lon"]), *wps, (d["lat"], d["lon"])], jitter)
            latlon = _densify(poly, float(spec.get("point_spacing_km", 100.0)))
            arrival = dt.datetime.combine(day, dt.time()) + dt.timedelta(hours=hour)
            regulated = bool(rng.random() < rate)
            fid = f"F{counter:06d}"
            counter += 1
            mtow = air.get("mtow", 70.0)
            flights.append(FlightRecord(
                flight_id=fid, airline=air["code"], aircraft_mtow=float(mtow),
                origin=o["icao"], destination=d["icao"], date=day, arrival_time=hour,
                regulated=regulated, trajectory=_trajectory(latlon, arrival, spec),
            ))
            labels[fid] = label
    cask = {a["code"]: float(a["cask"]) for a in airlines if a.get("cask") is not None}
    return SynthResult(flights, zones, cask, labels, truth)


# -- built-in scenarios --------------------------------------------------------

CANARY_LONDON = {
    "origins": [{"icao": "GCLP", "lat": 27.93, "lon": -15.39}],
    "destinations": [{"icao": "EGLL", "lat": 51.47, "lon": -0.46}],
    "zones": [
        {"id": "GC", "bounds": [26.0, 30.0, -19.0, -12.0], "unit_rate": 60.0},
        {"id": "GM", "bounds": [28.0, 36.0, -14.5, -1.0], "unit_rate": 62.0},
        {"id": "LP", "bounds": [36.0, 42.5, -11.0, -6.5], "unit_rate": 58.0},
        {"id": "LE", "bounds": [36.0, 43.8, -6.5, 3.5], "unit_rate": 72.0},
        {"id": "LF", "bounds": [43.8, 50.5, -8.0, 8.0], "unit_rate": 68.0},
        {"id": "EG", "bounds": [50.5, 59.0, -6.0, 2.0], "unit_rate": 85.0},
        {"id": "EI", "bounds": [50.5, 56.0, -12.0, -6.0], "unit_rate": 30.0},
        {"id": "AZ", "bounds": [30.0, 50.5, -35.0, -14.5], "unit_rate": 12.0},
        {"id": "OC", "bounds": [36.0, 50.5, -14.5, -11.0], "unit_rate": 45.0},
    ],
    "corridors": [
        {"waypoints": [[31.5, -12.5], [35.0, -10.5], [38.5, -9.0], [42.0, -8.0], [45.5, -5.0],
                       [48.6, -3.0]],
         "jitter_km": 12.0, "regulated_rate": 0.30},
        {"waypoints": [[31.5, -16.0], [36.0, -13.0], [41.0, -12.5], [46.0, -9.5], [49.5, -4.0]],
         "jitter_km": 12.0, "regulated_rate": 0.12},
        {"waypoints": [[34.0, -19.0], [42.0, -18.0], [48.0, -13.0], [50.0, -6.0]],
         "jitter_km": 12.0, "regulated_rate": 0.20},
        {"waypoints": [[34.0, -18.0], [44.0, -17.0], [52.0, -10.0], [52.5, -5.0]],
         "jitter_km": 12.0, "regulated_rate": 0.03},
    ],
    "arrival_modes": [[8.5, 0.7, 0.25], [12.5, 0.8, 0.3], [17.5, 0.6, 0.25], [22.5, 0.7, 0.2]],
    "noise_box": [30.0, 50.0, -24.0, 4.0],
    "noise_regulated_rate": 0.1,
    "noise_clearance_km": 150.0,
}


def _scenario_four_corridor() -> dict:
    s = copy.deepcopy(CANARY_LONDON)
    s["noise_fraction"] = 0.05
    s["airlines"] = [
        {"code": "EZY", "cask": 0.062, "mtow": 73.5, "share": 0.35, "weights": [0.5, 0.35, 0.15, 0.0]},
        {"code": "RYR", "cask": 0.038, "mtow": 79.0, "share": 0.25, "weights": [0.5, 0.2, 0.2, 0.1]},
        {"code": "BAW", "cask": 0.095, "mtow": 78.0, "share": 0.2, "weights": [0.3, 0.2, 0.3, 0.2]},
        {"code": "TOM", "cask": 0.071, "mtow": 80.0, "share": 0.2, "weights": [0.4, 0.2, 0.1, 0.3]},
    ]
    s["periods"] = [{"airacs": ["1601"], "n_flights": 1000}]
    return s


LOGIT_AIRLINES = [
    {"code": "EZY", "cask": 0.062, "mtow": 73.5, "share": 0.3, "betas": [-3.5, -1.0, -2.25]},
    {"code": "RYR", "cask": 0.038, "mtow": 79.0, "share": 0.25, "betas": [-1.75, -3.25, -1.0]},
    {"code": "BAW", "cask": 0.095, "mtow": 78.0, "share": 0.25, "betas": [-2.75, -0.5, -3.75]},
    {"code": "TOM", "cask": 0.071, "mtow": 80.0, "share": 0.2, "betas": [-0.5, -2.0, -1.0]},
]


def _scenario_stationary() -> dict:
    s = copy.deepcopy(CANARY_LONDON)
    s["airlines"] = copy.deepcopy(LOGIT_AIRLINES)
    s["periods"] = [
        {"airacs": ["1601", "1602", "1603"], "n_flights": 2400},
        {"airacs": ["1604", "1605"], "n_flights": 2400},
    ]
    return s


def _scenario_shifted() -> dict:
    s = _scenario_stationary()
    s["periods"][1]["rate_scale"] = {"OC": 2.5}
    return s


def _scenario_dominant() -> dict:
    s = copy.deepcopy(CANARY_LONDON)
    s["corridors"] = s["corridors"] + [
        {"waypoints": [[30.5, -9.0], [35.0, -4.0], [41.0, -2.0], [46.0, 1.0], [49.5, 0.5]],
         "jitter_km": 12.0, "regulated_rate": 0.2},
        {"waypoints": [[33.0, -20.0], [40.0, -22.0], [47.0, -16.0], [51.0, -8.0]],
         "jitter_km": 12.0, "regulated_rate": 0.05},
    ]
    s["noise_fraction"] = 0.0
    s["airlines"] = [{"code": "EZY", "cask": 0.062, "mtow": 73.5, "share": 1.0,
                      "weights": [0.6, 0.08, 0.08, 0.08, 0.08, 0.08]}]
    s["periods"] = [{"airacs": ["1601"], "n_flights": 600}]
    return s


SCENARIOS = {
    "four_corridor": _scenario_four_corridor,
    "stationary": _scenario_stationary,
    "shifted": _scenario_shifted,
    "dominant": _scenario_dominant,
}


def scenario(name: str) -> dict:
    try:
        return SCENARIOS[name]()
    except KeyError:
        raise InvalidInputError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}") from None


def label_vector(flight_ids: Sequence[str], labels: dict) -> np.ndarray:
    """Ground-truth corridor per flight as ints, -1 for "other"."""
    return np.array([-1 if labels[f] == "other" else int(labels[f]) for f in flight_ids])
