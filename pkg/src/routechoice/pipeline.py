"""Train, validate and test orchestration plus prediction reports."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .choice import (
    CONSIDERED_SHARE,
    ConstantModel,
    FeatureScaler,
    MultinomialModel,
    NullModel,
    TreeModel,
    UniformModel,
    considered_routes,
    fit_segment_model,
    model_from_dict,
    target_shares,
)
from .clustering import (
    OTHER,
    ClusteringConfig,
    RouteClusterModel,
    classify_metrics,
    fit_route_clusters,
    route_name,
)
from .dataset import (
    AIRAC_EPOCH,
    FlightRecord,
    airac_of,
    filter_od,
    flights_in_airacs,
    split_train_validation,
)
from .errors import ConfigurationError, InsufficientDataError
from .features import compute_metrics
from .geo import ChargingZoneSet
from .metrics import norm_of_error, pearson_or_none
from .segmentation import N_TIME_CLASSES, SegmentationModel, fit_segmentation, wrap_hours

log = logging.getLogger(__name__)

FAMILIES = ("multinomial", "tree", "null")
MATCHING = ("positional", "centroid")
# 3-group rollup of the four arrival-time classes: the two central ones merge
ROLLUP = {"early": (0,), "midday": (1, 2), "late": (3,)}


@dataclass(frozen=True)
class ExperimentConfig:
    training_airacs: tuple
    testing_airacs: tuple
    origins: tuple = ()
    destinations: tuple = ()
    split_ratio: float = 0.7
    seed: int = 42
    model: str = "multinomial"
    matching: str = "positional"
    clustering: ClusteringConfig = field(default_factory=ClusteringConfig)
    airac_epoch: dt.date = AIRAC_EPOCH

    def __post_init__(self) -> None:
        if self.model not in FAMILIES:
            raise ConfigurationError(f"model must be one of {FAMILIES}, got {self.model!r}")
        if self.matching not in MATCHING:
            raise ConfigurationError(f"matching must be one of {MATCHING}, got {self.matching!r}")
        if len(self.testing_airacs) < 2:
            raise ConfigurationError("at least two testing AIRACs are required")
        if set(self.training_airacs) & set(self.testing_airacs):
            raise ConfigurationError("training and testing AIRACs overlap")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigurationError("split_ratio must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"training_airacs", "testing_airacs", "origins", "destinations", "split_ratio",
                 "seed", "model", "matching", "clustering", "airac_epoch"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(
                training_airacs=tuple(str(a) for a in d["training_airacs"]),
                testing_airacs=tuple(str(a) for a in d["testing_airacs"]),
                origins=tuple(d.get("origins", ())),
                destinations=tuple(d.get("destinations", ())),
                split_ratio=float(d.get("split_ratio", 0.7)),
                seed=int(d.get("seed", 42)),
                model=d.get("model", "multinomial"),
                matching=d.get("matching", "positional"),
                clustering=ClusteringConfig.from_dict(d.get("clustering")),
                airac_epoch=dt.date.fromisoformat(d.get("airac_epoch", AIRAC_EPOCH.isoformat())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad experiment config: {exc}") from None

    def to_dict(self) -> dict:
        c = self.clustering
        return {
            "training_airacs": list(self.training_airacs),
            "testing_airacs": list(self.testing_airacs),
            "origins": list(self.origins),
            "destinations": list(self.destinations),
            "split_ratio": self.split_ratio,
            "seed": self.seed,
            "model": self.model,
            "matching": self.matching,
            "clustering": {k: getattr(c, k) for k in c.__dataclass_fields__},
            "airac_epoch": self.airac_epoch.isoformat(),
        }


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return ExperimentConfig.from_dict(json.load(fh))
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from None


# -- bundle -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainedBundle:
    config: ExperimentConfig
    clusters: RouteClusterModel
    segmentation: SegmentationModel
    scaler: FeatureScaler
    models: tuple                  # one choice model per segment index
    null_counts: dict              # group -> {route: count}
    training_rows: tuple
    train_ids: tuple
    validation_ids: tuple

    @property
    def route_ids(self) -> list[int]:
        return self.clusters.route_ids

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "clusters": self.clusters.to_dict(),
            "segmentation": self.segmentation.to_dict(),
            "scaler": self.scaler.to_dict(),
            "models": [m.to_dict() for m in self.models],
            "null_counts": {g: {route_name(r): c for r, c in sorted(v.items())}
                            for g, v in self.null_counts.items()},
            "training_rows": list(self.training_rows),
            "train_ids": list(self.train_ids),
            "validation_ids": list(self.validation_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedBundle":
        return cls(
            config=ExperimentConfig.from_dict(d["config"]),
            clusters=RouteClusterModel.from_dict(d["clusters"]),
            segmentation=SegmentationModel.from_dict(d["segmentation"]),
            scaler=FeatureScaler.from_dict(d["scaler"]),
            models=tuple(model_from_dict(m) for m in d["models"]),
            null_counts={g: {OTHER if r == "other" else int(r): int(c) for r, c in v.items()}
                         for g, v in d["null_counts"].items()},
            training_rows=tuple(d["training_rows"]),
            train_ids=tuple(d["train_ids"]),
            validation_ids=tuple(d["validation_ids"]),
        )


def load_bundle(path: str | Path) -> TrainedBundle:
    with open(path, encoding="utf-8") as fh:
        return TrainedBundle.from_dict(json.load(fh))


def _groups(time_class: np.ndarray) -> dict:
    """Boolean masks per report group."""
    out = {"total": np.ones(time_class.size, dtype=bool)}
    for c in range(N_TIME_CLASSES):
        out[f"class{c}"] = time_class == c
    for name, classes in ROLLUP.items():
        out[name] = np.isin(time_class, classes)
    return out


def _counts(labels: np.ndarray) -> dict:
    routes, counts = np.unique(labels, return_counts=True)
    return {int(r): int(c) for r, c in zip(routes, counts)}


def period_flights(flights: Sequence[FlightRecord], config: ExperimentConfig,
                   airacs: Sequence[str]) -> list[FlightRecord]:
    return flights_in_airacs(filter_od(flights, config.origins, config.destinations),
                             airacs, config.airac_epoch)


def _training_row(seg: int, bundle_parts, labels: np.ndarray, hours: np.ndarray, model) -> dict:
    segmentation, routes = bundle_parts
    airline_class = seg // N_TIME_CLASSES
    n = int(labels.size)
    row = {
        "segment": seg,
        "n_flights": n,
        "airline": segmentation.airlines.label(airline_class),
        "time_class": seg % N_TIME_CLASSES,
        "avg_arrival_time": round(float(np.mean(wrap_hours(hours))), 1) if n else None,
        "routes_considered": [],
        "actual_probability_vector": [],
        "norm_of_error": None,
        "model": model.variant,
    }
    if n:
        shares = target_shares(labels, routes)
        considered = [route_name(r) for r in model.considered if r != OTHER] \
            if not isinstance(model, (UniformModel, NullModel)) else []
        if isinstance(model, NullModel):
            considered = [route_name(r) for r in considered_routes(labels)]
        if shares[-1] > CONSIDERED_SHARE:
            considered.append("other")
        row["routes_considered"] = considered
        row["actual_probability_vector"] = [round(float(s), 4) for s in shares]
        if model.score is not None:
            row["norm_of_error"] = round(float(model.score), 6)
    return row


def train_pipeline(config: ExperimentConfig, flights: Sequence[FlightRecord], zones: ChargingZoneSet,
                   cask_table: Mapping[str, float], threads: int = 1) -> TrainedBundle:
    """Split, cluster, segment and fit one choice model per segment."""
    period = period_flights(flights, config, config.training_airacs)
    train, val = split_train_validation(period, config.split_ratio, config.seed)
    if len(train) < 8:
        raise InsufficientDataError(f"only {len(train)} training flights")
    metrics = compute_metrics(train, zones, epoch=config.airac_epoch)
    clusters = fit_route_clusters(metrics, config.clustering)
    if clusters.n_clusters == 0:
        raise InsufficientDataError("clustering produced no routes")
    segmentation = fit_segmentation(train, cask_table, config.seed)
    seg = segmentation.assign_many(train)
    labels = clusters.labels
    routes = clusters.route_ids
    scaler = FeatureScaler.fit(clusters.properties)
    hours = np.array([f.arrival_time for f in train])

    def fit(s: int):
        return fit_segment_model(config.model, labels[seg == s], routes, clusters.properties,
                                 scaler, seed=config.seed + s)

    n_seg = segmentation.n_segments
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            models = tuple(pool.map(fit, range(n_seg)))
    else:
        models = tuple(fit(s) for s in range(n_seg))

    time_class = seg % N_TIME_CLASSES
    null_counts = {g: _counts(labels[m]) for g, m in _groups(time_class).items()}
    rows = tuple(
        _training_row(s, (segmentation, routes), labels[seg == s], hours[seg == s], models[s])
        for s in range(n_seg)
    )
    return TrainedBundle(
        config=config, clusters=clusters, segmentation=segmentation, scaler=scaler, models=models,
        null_counts=null_counts, training_rows=rows,
        train_ids=tuple(f.flight_id for f in train),
        validation_ids=tuple(f.flight_id for f in val),
    )


# -- prediction ---------------------------------------------------------------

def segment_options(model, props: Mapping, scaler: FeatureScaler, routes: Sequence[int]):
    if isinstance(model, (UniformModel, NullModel)):
        return scaler.options([r for r in routes if r != OTHER], props)
    return scaler.options([r for r in model.considered if r != OTHER], props)


def predict_counts(models: Sequence, segment_of: np.ndarray, options_of, routes: Sequence[int]) -> dict:
    """Expected flights per route: segment size x segment probabilities, summed."""
    counts = {r: 0.0 for r in list(routes) + [OTHER]}
    for s in np.unique(segment_of):
        n = int(np.sum(segment_of == s))
        opts = options_of(int(s))
        probs = models[int(s)].predict(opts)
        for o, p in zip(opts, probs[:-1]):
            counts[o.route] += n * float(p)
        counts[OTHER] += n * float(probs[-1])
    return counts


def null_prediction(shares: Mapping[int, float], n: int, routes: Sequence[int]) -> dict:
    """Training shares times group size; routes absent now fold into "other"."""
    out = {r: 0.0 for r in list(routes) + [OTHER]}
    for r, s in shares.items():
        out[r if r in out else OTHER] += n * s
    return out


@dataclass
class PredictionReport:
    routes: list
    rows: list = field(default_factory=list)        # (route, group, actual, predicted, null)
    pearson: dict = field(default_factory=dict)     # group -> {"model": r, "null": r}
    group_sizes: dict = field(default_factory=dict)
    segments: list = field(default_factory=list)
    matching: dict = field(default_factory=dict)

    def counts(self, group: str, column: str) -> np.ndarray:
        idx = {"actual": 2, "predicted": 3, "null_predicted": 4}[column]
        return np.array([r[idx] for r in self.rows if r[1] == group], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["route", "group", "actual", "predicted", "null_predicted"])
        for route, group, actual, pred, null in self.rows:
            w.writerow([route_name(route), group, actual, f"{pred:.6f}", f"{null:.6f}"])
        return buf.getvalue()

    def summary(self) -> dict:
        def fmt(v):
            return "n/a" if v is None else round(v, 9)
        return {
            "routes": [route_name(r) for r in self.routes] + ["other"],
            "group_sizes": self.group_sizes,
            "pearson": {g: {k: fmt(v) for k, v in d.items()} for g, d in self.pearson.items()},
            "segments": self.segments,
            "matching": {route_name(k): route_name(v) for k, v in sorted(self.matching.items())},
        }


def build_report(routes: Sequence[int], actual: np.ndarray, segment_of: np.ndarray, models: Sequence,
                 options_of, null_shares: Mapping[str, Mapping[int, float]]) -> PredictionReport:
    routes = list(routes)
    time_class = segment_of % N_TIME_CLASSES
    rep = PredictionReport(routes)
    keys = routes + [OTHER]
    for group, mask in _groups(time_class).items():
        n = int(mask.sum())
        rep.group_sizes[group] = n
        pred = predict_counts(models, segment_of[mask], options_of, routes)
        null = null_prediction(null_shares.get(group, {}), n, routes)
        act = {r: int(np.sum(actual[mask] == r)) for r in keys}
        for r in keys:
            rep.rows.append((r, group, act[r], pred[r], null[r]))
        a = [act[r] for r in keys]
        rep.pearson[group] = {
            "model": pearson_or_none(a, [pred[r] for r in keys]),
            "null": pearson_or_none(a, [null[r] for r in keys]),
        }
    for s in np.unique(segment_of):
        m = segment_of == s
        opts = options_of(int(s))
        probs = models[int(s)].predict(opts)
        predicted = dict.fromkeys(keys, 0.0)
        for o, p in zip(opts, probs[:-1]):
            predicted[o.route] += float(p)
        predicted[OTHER] += float(probs[-1])
        shares = [float(np.mean(actual[m] == r)) for r in keys]
        rep.segments.append({
            "segment": int(s),
            "n_flights": int(m.sum()),
            "model": models[int(s)].variant,
            "norm_of_error": round(norm_of_error(shares, [predicted[r] for r in keys]), 9),
        })
    return rep


def _null_shares(null_counts: Mapping[str, Mapping[int, int]], mapping: Mapping[int, int] | None = None):
    out = {}
    for g, counts in null_counts.items():
        n = sum(counts.values())
        shares: dict[int, float] = {}
        for r, c in counts.items():
            key = r if mapping is None or r == OTHER else mapping.get(r, OTHER)
            shares[key] = shares.get(key, 0.0) + (c / n if n else 0.0)
        out[g] = shares
    return out


def validate(bundle: TrainedBundle, flights: Sequence[FlightRecord], zones: ChargingZoneSet) -> PredictionReport:
    """Predict validation flights with the training routes and their properties."""
    metrics = compute_metrics(flights, zones, epoch=bundle.config.airac_epoch)
    actual = classify_metrics(bundle.clusters, metrics) if len(flights) else np.zeros(0, dtype=int)
    segment_of = bundle.segmentation.assign_many(flights)
    props = bundle.clusters.properties

    def options_of(s: int):
        return segment_options(bundle.models[s], props, bundle.scaler, bundle.route_ids)

    rep = build_report(bundle.route_ids, actual, segment_of, bundle.models, options_of,
                       _null_shares(bundle.null_counts))
    for seg in rep.segments:
        seg["training_score"] = bundle.models[seg["segment"]].score
    return rep


def validation_flights(bundle: TrainedBundle, flights: Sequence[FlightRecord]) -> list[FlightRecord]:
    wanted = set(bundle.validation_ids)
    return [f for f in flights if f.flight_id in wanted]


# -- testing -------------------------------------------------------------------

def match_routes(train: RouteClusterModel, test: RouteClusterModel, strategy: str) -> dict:
    """Map training route ids onto re-clustered test route ids."""
    if strategy == "positional":
        return {r: r for r in train.route_ids if r in test.route_ids}
    a = np.array([train.properties[r].centroid_zone_km for r in train.route_ids])
    b = np.array([test.properties[r].centroid_zone_km for r in test.route_ids])
    if a.size == 0 or b.size == 0:
        return {}
    D = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
    mapping = {}
    for _ in range(min(D.shape)):
        i, j = np.unravel_index(np.argmin(D), D.shape)
        mapping[int(i)] = int(j)
        D[i, :] = np.inf
        D[:, j] = np.inf
    return dict(sorted(mapping.items()))


def _updated_model(model, considered: list[int], mapping: Mapping[int, int], test_routes: list[int]):
    if isinstance(model, MultinomialModel):
        return replace(model, considered=tuple(considered))
    if isinstance(model, TreeModel):
        return replace(model, considered=tuple(considered))
    if isinstance(model, ConstantModel):
        route = mapping.get(model.route, OTHER) if model.route != OTHER else OTHER
        return ConstantModel(route, (route,) if route != OTHER else ())
    if isinstance(model, UniformModel):
        return UniformModel(tuple(test_routes))
    if isinstance(model, NullModel):
        shares: dict[int, float] = {}
        for r, s in model.shares.items():
            key = OTHER if r == OTHER else mapping.get(r, OTHER)
            shares[key] = shares.get(key, 0.0) + s
        return NullModel(shares, tuple(k for k in shares if k != OTHER))
    raise TypeError(type(model).__name__)


def test(bundle: TrainedBundle, flights: Sequence[FlightRecord], zones: ChargingZoneSet,
         config: ExperimentConfig | None = None) -> PredictionReport:
    """Re-cluster on the first testing AIRAC, refresh options, predict the rest."""
    config = config or bundle.config
    first = period_flights(flights, config, config.testing_airacs[:1])
    rest = period_flights(flights, config, config.testing_airacs[1:])
    if len(first) < 8:
        raise InsufficientDataError(
            f"first testing AIRAC {config.testing_airacs[0]} has {len(first)} flights; cannot cluster")
    m_first = compute_metrics(first, zones, epoch=config.airac_epoch)
    clusters = fit_route_clusters(m_first, config.clustering)
    routes = clusters.route_ids
    mapping = match_routes(bundle.clusters, clusters, config.matching)

    seg_first = bundle.segmentation.assign_many(first)
    models = []
    for s, model in enumerate(bundle.models):
        in_seg = clusters.labels[seg_first == s]
        if in_seg.size:
            considered = considered_routes(in_seg)
        else:
            considered = sorted({mapping[r] for r in model.considered if r in mapping})
        models.append(_updated_model(model, considered, mapping, routes))

    m_rest = compute_metrics(rest, zones, epoch=config.airac_epoch)
    actual = classify_metrics(clusters, m_rest) if rest else np.zeros(0, dtype=int)
    segment_of = bundle.segmentation.assign_many(rest)

    def options_of(s: int):
        return segment_options(models[s], clusters.properties, bundle.scaler, routes)

    rep = build_report(routes, actual, segment_of, models, options_of,
                       _null_shares(bundle.null_counts, mapping))
    rep.matching = mapping
    return rep


def training_csv(bundle: TrainedBundle) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["segment", "n_flights", "airline", "avg_arrival_time", "routes_considered",
                "actual_probability_vector", "norm_of_error", "model"])
    for r in bundle.training_rows:
        w.writerow([
            r["segment"], r["n_flights"], r["airline"],
            "" if r["avg_arrival_time"] is None else f"{r['avg_arrival_time']:.1f}",
            " ".join(r["routes_considered"]),
            " ".join(f"{p:.2f}" for p in r["actual_probability_vector"]),
            "-" if r["norm_of_error"] is None else f"{r['norm_of_error']:.4f}",
            r["model"],
        ])
    return buf.getvalue()


def airac_id(flight: FlightRecord, epoch: dt.date = AIRAC_EPOCH) -> str:
    return airac_of(flight.date, epoch).id
