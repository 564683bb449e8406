"""Per-segment route-choice models.

Every model maps a list of route options to a probability vector over those
options followed by the "other" option.  Variants: bounded multinomial logit,
regression tree, constant single route, uniform and null (empirical shares).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .clustering import OTHER, RouteProperties, route_name
from .errors import InvalidInputError
from .tree import MAX_DEPTH, Node, fit_regression_tree, select_depth

BETA_BOUNDS = (-10.0, 0.0)
N_VARIABLES = 3
CONSIDERED_SHARE = 0.05
# Segments with fewer options than coefficients have a whole manifold of exact
# fits; a vanishing ridge term picks its minimum-norm point.
RIDGE = 1e-8


@dataclass(frozen=True)
class RouteOption:
    route: int
    x_length: float
    x_charges: float
    x_congestion: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.x_length, self.x_charges, self.x_congestion)):
            raise InvalidInputError(f"non-finite feature on route {self.route}")
        if not 0.0 <= self.x_congestion <= 1.0:
            raise InvalidInputError("congestion must lie in [0, 1]")

    def vector(self) -> tuple:
        return (self.x_length, self.x_charges, self.x_congestion)


@dataclass(frozen=True)
class FeatureScaler:
    """Affine map of length and charges onto [-1, 1] using training bounds."""

    length_bounds: tuple
    charges_bounds: tuple

    @staticmethod
    def _scale(v: float, lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        return 2.0 * (v - lo) / (hi - lo) - 1.0

    @classmethod
    def fit(cls, props: Mapping[int, RouteProperties]) -> "FeatureScaler":
        routes = [p for r, p in props.items() if r != OTHER]
        if not routes:
            raise InvalidInputError("no routes to derive normalisation bounds from")
        lengths = [p.avg_length_nm for p in routes]
        charges = [p.avg_charges_eur for p in routes]
        return cls((min(lengths), max(lengths)), (min(charges), max(charges)))

    def option(self, route: int, p: RouteProperties) -> RouteOption:
        return RouteOption(
            route,
            self._scale(p.avg_length_nm, *self.length_bounds),
            self._scale(p.avg_charges_eur, *self.charges_bounds),
            p.regulated_rate,
        )

    def options(self, routes: Sequence[int], props: Mapping[int, RouteProperties]) -> list[RouteOption]:
        return [self.option(r, props[r]) for r in routes]

    def to_dict(self) -> dict:
        return {"length_bounds": list(self.length_bounds), "charges_bounds": list(self.charges_bounds)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureScaler":
        return cls(tuple(d["length_bounds"]), tuple(d["charges_bounds"]))


def _design(options: Sequence[RouteOption]) -> np.ndarray:
    return np.array([o.vector() for o in options], dtype=float).reshape(len(options), N_VARIABLES)


def _logit(betas: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Probabilities for the rows of X followed by "other" (exponent 0)."""
    A = np.append(X @ betas, 0.0)
    A -= A.max()
    e = np.exp(A)
    return e / e.sum()


def logit_probabilities(betas, options: Sequence[RouteOption]) -> np.ndarray:
    betas = np.asarray(betas, dtype=float)
    if betas.shape != (N_VARIABLES,):
        raise InvalidInputError(f"expected {N_VARIABLES} betas")
    if not options:
        raise InvalidInputError("no route options")
    X = _design(options)
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(betas)):
        raise InvalidInputError("non-finite feature or coefficient")
    return _logit(betas, X)


def renormalize_tree_output(raw) -> np.ndarray:
    """Clamp raw per-route values to [0, 1] and append "other".

    "other" takes the complement when the routes sum to at most one; otherwise
    it is zero and the routes are scaled to sum to one.
    """
    p = np.clip(np.asarray(raw, dtype=float), 0.0, 1.0)
    s = p.sum()
    if s <= 1.0:
        return np.append(p, 1.0 - s)
    return np.append(p / s, 0.0)


# -- model variants -----------------------------------------------------------

@dataclass(frozen=True)
class MultinomialModel:
    betas: tuple
    considered: tuple
    score: float | None = None
    variant = "multinomial"

    def predict(self, options: Sequence[RouteOption]) -> np.ndarray:
        if not options:
            return np.array([1.0])
        return logit_probabilities(self.betas, options)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "betas": list(self.betas),
                "considered": list(self.considered), "score": self.score}


@dataclass(frozen=True)
class TreeModel:
    tree: Node
    depth: int
    considered: tuple
    score: float | None = None
    cv_scores: dict = field(default_factory=dict)
    variant = "tree"

    def predict(self, options: Sequence[RouteOption]) -> np.ndarray:
        if not options:
            return np.array([1.0])
        return renormalize_tree_output(self.tree.predict(_design(options)))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "tree": self.tree.to_dict(), "depth": self.depth,
                "considered": list(self.considered), "score": self.score,
                "cv_scores": {str(k): v for k, v in sorted(self.cv_scores.items())}}


@dataclass(frozen=True)
class ConstantModel:
    route: int
    considered: tuple = ()
    score = None
    variant = "constant"

    def predict(self, options: Sequence[RouteOption]) -> np.ndarray:
        out = np.zeros(len(options) + 1)
        routes = [o.route for o in options]
        out[routes.index(self.route) if self.route in routes else -1] = 1.0
        return out

    def to_dict(self) -> dict:
        return {"variant": self.variant, "route": self.route, "considered": list(self.considered)}


@dataclass(frozen=True)
class UniformModel:
    considered: tuple = ()
    score = None
    variant = "uniform"

    def predict(self, options: Sequence[RouteOption]) -> np.ndarray:
        return np.full(len(options) + 1, 1.0 / (len(options) + 1))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "considered": list(self.considered)}


@dataclass(frozen=True)
class NullModel:
    """Empirical training shares; routes missing from the options fold into "other"."""

    shares: dict
    considered: tuple = ()
    score = None
    variant = "null"

    def predict(self, options: Sequence[RouteOption]) -> np.ndarray:
        p = np.array([self.shares.get(o.route, 0.0) for o in options], dtype=float)
        rest = max(0.0, 1.0 - p.sum())
        out = np.append(p, rest)
        return out / out.sum()

    def to_dict(self) -> dict:
        return {"variant": self.variant, "considered": list(self.considered),
                "shares": {route_name(k): v for k, v in sorted(self.shares.items())}}


def model_from_dict(d: dict):
    v = d["variant"]
    considered = tuple(int(r) for r in d.get("considered", ()))
    if v == "multinomial":
        return MultinomialModel(tuple(d["betas"]), considered, d.get("score"))
    if v == "tree":
        return TreeModel(Node.from_dict(d["tree"]), int(d["depth"]), considered, d.get("score"),
                         {int(k): s for k, s in d.get("cv_scores", {}).items()})
    if v == "constant":
        return ConstantModel(int(d["route"]), considered)
    if v == "uniform":
        return UniformModel(considered)
    if v == "null":
        return NullModel({OTHER if k == "other" else int(k): float(s) for k, s in d["shares"].items()},
                         considered)
    raise InvalidInputError(f"unknown model variant {v!r}")


# -- fitting ------------------------------------------------------------------

def null_model(counts: Mapping[int, int], routes: Sequence[int] = ()) -> NullModel:
    """Shares count_i / N; with no flights every route (and "other") is equally likely."""
    n = sum(counts.values())
    if n == 0:
        keys = list(routes) + [OTHER]
        return NullModel({k: 1.0 / len(keys) for k in keys})
    return NullModel({k: c / n for k, c in counts.items()})


def considered_routes(segment_labels, threshold: float = CONSIDERED_SHARE) -> list[int]:
    """Routes whose share of the segment exceeds ``threshold`` ("other" is always implicit)."""
    labels = np.asarray(segment_labels, dtype=int)
    if labels.size == 0:
        return []
    ids, counts = np.unique(labels[labels != OTHER], return_counts=True)
    return [int(r) for r, c in zip(ids, counts) if c / labels.size > threshold]


def target_shares(segment_labels, routes: Sequence[int]) -> np.ndarray:
    """Observed shares of ``routes`` followed by everything else as "other"."""
    labels = np.asarray(segment_labels, dtype=int)
    p = np.array([np.mean(labels == r) for r in routes], dtype=float)
    return np.append(p, 1.0 - p.sum())


def _objective(betas, X, target, ridge: float = 0.0):
    P = _logit(betas, X)
    r = P - target
    Xf = np.vstack([X, np.zeros((1, X.shape[1]))])
    J = P[:, None] * (Xf - P @ Xf)
    return float(r @ r + ridge * (betas @ betas)), 2.0 * (J.T @ r + ridge * betas)


def projected_gradient(fun, x0, lower: float, upper: float, gtol: float = 1e-8,
                       max_iter: int = 500):
    """Projected gradient descent with Armijo backtracking on a box."""
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    f, g = fun(x)
    for _ in range(max_iter):
        pg = np.clip(x - g, lower, upper) - x
        if np.linalg.norm(pg, np.inf) < gtol:
            break
        step = 1.0
        while step > 1e-14:
            xn = np.clip(x - step * g, lower, upper)
            fn, gn = fun(xn)
            if fn <= f + 1e-4 * (g @ (xn - x)):
                break
            step *= 0.5
        else:
            break
        x, f, g = xn, fn, gn
    return x, f


def fit_betas(target, options: Sequence[RouteOption], seed: int = 0, n_starts: int = 5,
              gtol: float = 1e-8, max_iter: int = 500, ridge: float = RIDGE) -> tuple[np.ndarray, float]:
    """Minimise ||P(beta) - target|| over the box [-10, 0]^3; returns (betas, residual norm).

    The residual reported is the plain norm, without the ridge term.
    """
    X = _design(options)
    target = np.asarray(target, dtype=float)
    if target.size != X.shape[0] + 1:
        raise InvalidInputError("target must cover every option plus 'other'")
    lo, hi = BETA_BOUNDS
    rng = np.random.default_rng(seed)
    fun = lambda b: _objective(b, X, target, ridge)  # noqa: E731
    best_b, best_f = None, np.inf
    for x0 in rng.uniform(lo, hi, size=(n_starts, N_VARIABLES)):
        res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(lo, hi)] * N_VARIABLES,
                       options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-15})
        b, f = np.clip(res.x, lo, hi), float(res.fun)
        if not (res.success and np.all(np.isfinite(b)) and math.isfinite(f)):
            b, f = projected_gradient(fun, x0, lo, hi, gtol, max_iter)
        if f < best_f - 1e-15:
            best_b, best_f = b, f
    residual = float(np.linalg.norm(_logit(best_b, X) - target))
    return best_b, residual


def fit_multinomial(segment_labels, options: Sequence[RouteOption], seed: int = 0) -> MultinomialModel:
    if len(segment_labels) == 0:
        raise InvalidInputError("empty segment: use a uniform model")
    if not options:
        raise InvalidInputError("no route options to fit")
    target = target_shares(segment_labels, [o.route for o in options])
    betas, residual = fit_betas(target, options, seed)
    return MultinomialModel(tuple(float(b) for b in betas), tuple(o.route for o in options), residual)


def tree_rows(segment_labels, options: Sequence[RouteOption]) -> tuple[np.ndarray, np.ndarray]:
    """One row per (flight, option): the option's features, target 1 if chosen."""
    labels = np.asarray(segment_labels, dtype=int)
    X = np.tile(_design(options), (labels.size, 1))
    routes = np.array([o.route for o in options])
    y = (labels[:, None] == routes[None, :]).astype(float).ravel()
    return X, y


def fit_tree(segment_labels, options: Sequence[RouteOption], seed: int = 0) -> TreeModel:
    if len(segment_labels) == 0:
        raise InvalidInputError("empty segment: use a uniform model")
    if not options:
        raise InvalidInputError("no route options to fit")
    X, y = tree_rows(segment_labels, options)
    depth, cv = select_depth(X, y, seed, range(1, MAX_DEPTH + 1))
    tree = fit_regression_tree(X, y, depth)
    model = TreeModel(tree, depth, tuple(o.route for o in options), None, cv)
    target = target_shares(segment_labels, model.considered)
    score = float(np.linalg.norm(model.predict(options) - target))
    return TreeModel(tree, depth, model.considered, score, cv)


def fit_segment_model(family: str, segment_labels, all_routes: Sequence[int],
                      props: Mapping[int, RouteProperties], scaler: FeatureScaler, seed: int = 0):
    """Pick the fallback or fitted model for one segment."""
    labels = np.asarray(segment_labels, dtype=int)
    if labels.size == 0:
        return UniformModel(tuple(all_routes))
    considered = considered_routes(labels)
    other_share = float(np.mean(~np.isin(labels, considered)))
    n_options = len(considered) + (other_share > CONSIDERED_SHARE)
    if n_options <= 1:
        route = considered[0] if considered else OTHER
        return ConstantModel(route, tuple(considered))
    if family == "null":
        routes, counts = np.unique(labels, return_counts=True)
        return null_model({int(r): int(c) for r, c in zip(routes, counts)})
    options = scaler.options(considered, props)
    if family == "multinomial":
        return fit_multinomial(labels, options, seed)
    if family == "tree":
        return fit_tree(labels, options, seed)
    raise InvalidInputError(f"unknown model family {family!r}")
