"""Density-based route clustering with an iterative parameter search.

Trajectories are compared through their per-zone flown distances and their
charges, min-max normalised over the fitting set.  Small clusters and DBSCAN
noise are pooled into an "other" bucket, labelled ``OTHER`` (-1).
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InsufficientDataError, InvalidInputError, UndefinedSilhouetteError
from .features import FlightMetrics, minmax_bounds, normalize
from .geo import KM_PER_NM

log = logging.getLogger(__name__)

NOISE = -1
OTHER = -1


def route_name(label: int) -> str:
    return "other" if label == OTHER else str(int(label))


# -- DBSCAN ----------------------------------------------------------------

def _dbscan_adjacency(adj: np.ndarray, min_samples: int) -> np.ndarray:
    n = adj.shape[0]
    core = adj.sum(axis=1) >= min_samples
    labels = np.full(n, NOISE, dtype=int)
    next_id = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = next_id
        stack = [i]
        while stack:
            j = stack.pop()
            for k in np.flatnonzero(adj[j]):
                if labels[k] == NOISE:
                    labels[k] = next_id
                    if core[k]:
                        stack.append(k)
        next_id += 1
    return relabel_by_size(labels)


def relabel_by_size(labels: np.ndarray) -> np.ndarray:
    """Renumber clusters 0..K-1 by descending size (ties: first appearance)."""
    labels = np.asarray(labels, dtype=int)
    ids = [c for c in dict.fromkeys(labels.tolist()) if c != NOISE]
    order = sorted(ids, key=lambda c: (-int(np.sum(labels == c)), ids.index(c)))
    out = np.full_like(labels, NOISE)
    for new, old in enumerate(order):
        out[labels == old] = new
    return out


def dbscan(features, eps: float, min_samples: int) -> np.ndarray:
    """Brute-force DBSCAN with Euclidean distance.

    A point is core when at least ``min_samples`` points (itself included) lie
    within ``eps``.  Border points reachable from several clusters keep the
    first cluster that reached them in scan order.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InvalidInputError("dbscan needs a non-empty 2-D feature array")
    if eps <= 0 or min_samples < 1:
        raise InvalidInputError("eps must be > 0 and min_samples >= 1")
    return _dbscan_adjacency(cdist(X, X) <= eps, int(min_samples))


# -- silhouette -------------------------------------------------------------

def _silhouette_from_distances(D: np.ndarray, labels: np.ndarray) -> float:
    keep = labels != NOISE
    D = D[np.ix_(keep, keep)]
    labels = labels[keep]
    ids = np.unique(labels)
    if ids.size < 2:
        raise UndefinedSilhouetteError("silhouette needs at least 2 clusters")
    onehot = labels[:, None] == ids[None, :]
    sizes = onehot.sum(axis=0)
    sums = D @ onehot
    own = np.searchsorted(ids, labels)
    own_size = sizes[own]
    rows = np.arange(labels.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = sums[rows, own] / (own_size - 1)
        means = sums / sizes
    means[rows, own] = np.inf
    b = means.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where((own_size > 1) & (denom > 0), (b - a) / denom, 0.0)
    return float(np.mean(s))


def silhouette_mean(features, labels) -> float:
    """Mean silhouette over non-noise points; singletons score 0."""
    X = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    return _silhouette_from_distances(cdist(X, X), labels)


# -- iterative search --------------------------------------------------------

@dataclass(frozen=True)
class ClusteringConfig:
    eps0: float = 0.3
    min_samples0: int | None = None    # default ceil(N / 10)
    silhouette_base: float = 0.75
    delta_c: float = 100.0             # delta = min(1, delta_c / N)
    min_clusters: int = 4
    max_dominance: float = 0.5
    noise_share: float = 0.05
    max_iterations: int = 50

    def __post_init__(self) -> None:
        if self.eps0 <= 0:
            raise InvalidInputError("eps0 must be > 0")
        if self.delta_c < 0:
            raise InvalidInputError("delta_c must be >= 0")

    def delta(self, n: int) -> float:
        return min(1.0, self.delta_c / n)

    @classmethod
    def from_dict(cls, d: dict | None) -> "ClusteringConfig":
        return cls(**(d or {}))


@dataclass(frozen=True)
class Attempt:
    iteration: int
    min_samples: int
    silhouette_floor: float
    n_clusters: int
    silhouette: float | None
    max_share: float
    silhouette_ok: bool
    clusters_ok: bool
    dominance_ok: bool

    @property
    def accepted(self) -> bool:
        return self.silhouette_ok and self.clusters_ok and self.dominance_ok

    def score(self) -> tuple:
        met = self.silhouette_ok + self.clusters_ok + self.dominance_ok
        return (met, -1.0 if self.silhouette is None else self.silhouette)


@dataclass(frozen=True)
class RouteProperties:
    n_flights: int
    avg_length_nm: float
    avg_charges_eur: float
    regulated_rate: float
    avg_length_ratio: float
    centroid_zone_km: tuple = ()


@dataclass(frozen=True, eq=False)
class RouteClusterModel:
    zone_ids: list
    lo: np.ndarray
    hi: np.ndarray
    eps: float
    min_samples: int
    features: np.ndarray          # normalised fitted features
    dbscan_labels: np.ndarray     # -1 = DBSCAN noise
    labels: np.ndarray            # final labels, -1 = other
    silhouette: float | None = None
    warning: bool = False
    attempts: tuple = ()
    properties: dict = field(default_factory=dict)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if np.any(self.labels != OTHER) else 0

    @property
    def route_ids(self) -> list[int]:
        return list(range(self.n_clusters))

    def shares(self) -> np.ndarray:
        n = self.labels.size
        return np.array([np.sum(self.labels == c) / n for c in self.route_ids])

    def to_dict(self) -> dict:
        return {
            "zone_ids": list(self.zone_ids),
            "bounds": {"lo": self.lo.tolist(), "hi": self.hi.tolist()},
            "eps": self.eps,
            "min_samples": self.min_samples,
            "features": self.features.tolist(),
            "dbscan_labels": self.dbscan_labels.tolist(),
            "labels": self.labels.tolist(),
            "silhouette": self.silhouette,
            "warning": self.warning,
            "attempts": [asdict(a) for a in self.attempts],
            "properties": {route_name(k): asdict(v) for k, v in sorted(self.properties.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RouteClusterModel":
        props = {}
        for k, v in d.get("properties", {}).items():
            v = dict(v)
            v["centroid_zone_km"] = tuple(v.get("centroid_zone_km", ()))
            props[OTHER if k == "other" else int(k)] = RouteProperties(**v)
        return cls(
            zone_ids=list(d["zone_ids"]),
            lo=np.asarray(d["bounds"]["lo"], dtype=float),
            hi=np.asarray(d["bounds"]["hi"], dtype=float),
            eps=float(d["eps"]),
            min_samples=int(d["min_samples"]),
            features=np.asarray(d["features"], dtype=float).reshape(len(d["labels"]), -1),
            dbscan_labels=np.asarray(d["dbscan_labels"], dtype=int),
            labels=np.asarray(d["labels"], dtype=int),
            silhouette=d.get("silhouette"),
            warning=bool(d.get("warning", False)),
            attempts=tuple(Attempt(**a) for a in d.get("attempts", [])),
            properties=props,
        )


def iterative_cluster(features, config: ClusteringConfig = ClusteringConfig(),
                      bounds: tuple | None = None, zone_ids: list | None = None) -> RouteClusterModel:
    """Search DBSCAN parameters until the acceptance criteria hold.

    Accepts when the mean silhouette reaches the floor, there are at least
    ``min_clusters`` clusters and no cluster holds ``max_dominance`` or more of
    the flights.  Each failure halves the floor and lowers ``min_samples`` by
    one (never below 2); eps stays fixed.  After ``max_iterations`` the best
    attempt is returned with ``warning`` set.
    """
    X = np.asarray(features, dtype=float)
    n = X.shape[0]
    if n < 8:
        raise InsufficientDataError(f"need at least 8 flights to cluster, got {n}")
    D = cdist(X, X)
    adj = D <= config.eps0
    floor = config.silhouette_base - config.delta(n)
    ms = config.min_samples0 if config.min_samples0 is not None else math.ceil(n / 10)
    ms = max(2, int(ms))

    attempts = []
    best = None
    for it in range(config.max_iterations):
        labels = _dbscan_adjacency(adj, ms)
        k = int(labels.max()) + 1
        sil = _silhouette_from_distances(D, labels) if k >= 2 else None
        max_share = float(np.max(np.bincount(labels[labels != NOISE]))) / n if k else 0.0
        att = Attempt(
            iteration=it, min_samples=ms, silhouette_floor=floor, n_clusters=k,
            silhouette=sil, max_share=max_share,
            silhouette_ok=sil is not None and sil >= floor,
            clusters_ok=k >= config.min_clusters,
            dominance_ok=k > 0 and max_share < config.max_dominance,
        )
        attempts.append(att)
        if best is None or att.score() > best[0].score():
            best = (att, labels)
        if att.accepted:
            best = (att, labels)
            break
        floor /= 2.0
        ms = max(2, ms - 1)

    att, labels = best
    warning = not att.accepted
    if warning:
        log.warning("clustering criteria not met after %d iterations", len(attempts))
    if bounds is None:
        bounds = (np.zeros(X.shape[1]), np.ones(X.shape[1]))
    return RouteClusterModel(
        zone_ids=list(zone_ids or []), lo=np.asarray(bounds[0], float), hi=np.asarray(bounds[1], float),
        eps=config.eps0, min_samples=att.min_samples, features=X,
        dbscan_labels=labels, labels=labels.copy(), silhouette=att.silhouette,
        warning=warning, attempts=tuple(attempts),
    )


def apply_noise_rule(model: RouteClusterModel, noise_share: float = 0.05) -> RouteClusterModel:
    """Pool clusters holding less than ``noise_share`` of all flights into "other"."""
    labels = np.asarray(model.labels, dtype=int)
    n = labels.size
    out = labels.copy()
    for c in np.unique(labels[labels != OTHER]):
        if np.sum(labels == c) / n < noise_share:
            out[labels == c] = OTHER
    return replace(model, labels=relabel_by_size(out))


def fit_route_clusters(metrics: FlightMetrics,
                       config: ClusteringConfig = ClusteringConfig()) -> RouteClusterModel:
    """Normalise, search, pool small clusters and attach route properties."""
    raw = metrics.raw_features()
    lo, hi = minmax_bounds(raw)
    model = iterative_cluster(normalize(raw, lo, hi), config, (lo, hi), metrics.zone_ids)
    model = apply_noise_rule(model, config.noise_share)
    return replace(model, properties=route_properties(model.labels, metrics))


def classify_route(model: RouteClusterModel, feature) -> int:
    return int(classify_routes(model, np.atleast_2d(feature))[0])


def classify_routes(model: RouteClusterModel, features) -> np.ndarray:
    """Nearest non-noise fitted sample; its label if within eps, else ``OTHER``."""
    ref = model.dbscan_labels != NOISE
    if not np.any(ref):
        raise InvalidInputError("model has no non-noise samples")
    X = np.atleast_2d(np.asarray(features, dtype=float))
    D = cdist(X, model.features[ref])
    nearest = np.argmin(D, axis=1)
    dist = D[np.arange(X.shape[0]), nearest]
    return np.where(dist <= model.eps, model.labels[ref][nearest], OTHER)


def classify_metrics(model: RouteClusterModel, metrics: FlightMetrics) -> np.ndarray:
    return classify_routes(model, normalize(metrics.raw_features(), model.lo, model.hi))


def route_properties(labels, metrics: FlightMetrics) -> dict:
    """Per-route means; "other" is included when it has members."""
    labels = np.asarray(labels, dtype=int)
    if labels.size != len(metrics):
        raise InvalidInputError("labels and flights differ in length")
    props = {}
    k = int(labels.max()) + 1 if np.any(labels != OTHER) else 0
    for c in list(range(k)) + [OTHER]:
        m = labels == c
        if not m.any():
            if c == OTHER:
                continue
            raise InvalidInputError(f"cluster {c} has no flights")
        length = float(np.mean(metrics.length_km[m]))
        props[c] = RouteProperties(
            n_flights=int(m.sum()),
            avg_length_nm=length / KM_PER_NM,
            avg_charges_eur=float(np.mean(metrics.charges[m])),
            regulated_rate=float(np.mean(metrics.regulated[m])),
            avg_length_ratio=length / float(np.mean(metrics.orthodrome_km[m])),
            centroid_zone_km=tuple(float(v) for v in metrics.zone_km[m].mean(axis=0)),
        )
    return props


def properties_csv(props: dict) -> str:
    lines = ["cluster,n_flights,avg_length_nm,avg_charges_eur,regulated_rate,avg_length_ratio"]
    for c in sorted(props, key=lambda c: (c == OTHER, c)):
        p = props[c]
        lines.append(
            f"{route_name(c)},{p.n_flights},{p.avg_length_nm:.1f},{p.avg_charges_eur:.2f},"
            f"{p.regulated_rate:.4f},{p.avg_length_ratio:.4f}"
        )
    return "\n".join(lines) + "\n"
