import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import approx_fprime

from routechoice.choice import (
    BETA_BOUNDS,
    ConstantModel,
    FeatureScaler,
    MultinomialModel,
    NullModel,
    RouteOption,
    TreeModel,
    UniformModel,
    _design,
    _objective,
    considered_routes,
    fit_betas,
    fit_multinomial,
    fit_segment_model,
    fit_tree,
    logit_probabilities,
    model_from_dict,
    null_model,
    projected_gradient,
    renormalize_tree_output,
    target_shares,
    tree_rows,
)
from routechoice.clustering import OTHER, RouteProperties
from routechoice.errors import InvalidInputError


def opts(*rows):
    return [RouteOption(i, *r) for i, r in enumerate(rows)]


def props(n_routes):
    out = {}
    for r in range(n_routes):
        out[r] = RouteProperties(100, 600.0 + 40 * r, 300.0 - 25 * r, 0.1 * r, 1.0 + 0.05 * r)
    return out


class TestLogit:
    def test_all_zero_betas_uniform(self):
        p = logit_probabilities([0, 0, 0], opts((1, 1, 0.5), (-1, 0, 0)))
        assert p.tolist() == pytest.approx([1 / 3] * 3)

    def test_closed_form(self):
        b = np.array([-1.0, -2.0, -0.5])
        o = opts((0.5, -0.2, 0.1), (-0.3, 0.4, 0.9))
        e = np.exp([b @ o[0].vector(), b @ o[1].vector(), 0.0])
        assert logit_probabilities(b, o) == pytest.approx(e / e.sum(), rel=1e-12)

    def test_stable_for_extreme_exponents(self):
        p = logit_probabilities([-10, -10, -10], opts((-100, -100, 0)))
        assert np.isfinite(p).all() and p[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("betas,options", [([0, 0], opts((0, 0, 0))), ([0, 0, 0], [])])
    def test_invalid(self, betas, options):
        with pytest.raises(InvalidInputError):
            logit_probabilities(betas, options)

    def test_option_validation(self):
        with pytest.raises(InvalidInputError):
            RouteOption(0, float("nan"), 0, 0)
        with pytest.raises(InvalidInputError):
            RouteOption(0, 0, 0, 1.5)


class TestObjective:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 5), st.sampled_from([0.0, 1e-6, 0.1]))
    def test_gradient(self, seed, k, ridge):
        rng = np.random.default_rng(seed)
        X = np.column_stack([rng.uniform(-1, 1, (k, 2)), rng.uniform(0, 1, k)])
        t = rng.dirichlet(np.ones(k + 1))
        b = rng.uniform(-10, 0, 3)
        _, g = _objective(b, X, t, ridge)
        num = approx_fprime(b, lambda v: _objective(v, X, t, ridge)[0], 1e-7)
        assert g == pytest.approx(num, abs=1e-5)

    def test_projected_gradient_box_quadratic(self):
        fun = lambda x: (float(np.sum((x - np.array([1.0, -3.0])) ** 2)), 2 * (x - np.array([1.0, -3.0])))  # noqa: E731
        x, f = projected_gradient(fun, np.array([-5.0, -5.0]), -10.0, 0.0)
        assert x.tolist() == pytest.approx([0.0, -3.0], abs=1e-7)
        assert f == pytest.approx(1.0)


class TestFitBetas:
    def test_grid_search_oracle(self, rng):
        # the optimiser must do at least as well as a coarse grid over the box
        grid = np.linspace(-10, 0, 21)
        for _ in range(5):
            o = opts(*[(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform()) for _ in range(3)])
            X = _design(o)
            target = rng.dirichlet(np.ones(4))
            best = min(_objective(np.array(b), X, target)[0] for b in itertools.product(grid, repeat=3))
            b, residual = fit_betas(target, o)
            assert residual ** 2 <= best + 1e-9
            assert np.all((b >= BETA_BOUNDS[0]) & (b <= BETA_BOUNDS[1]))

    def test_positive_preference_hits_bound(self):
        # shorter routes cannot be less attractive: the fit stops at beta = 0
        o = opts((-1, 0, 0), (1, 0, 0))
        b, _ = fit_betas([0.1, 0.8, 0.1], o)
        assert b[0] == pytest.approx(0.0, abs=1e-6)

    def test_minimum_norm_among_exact_fits(self):
        # one route plus "other": every beta with x.beta = log 3 fits exactly
        o = opts((-0.5, -0.5, 0.0))
        b, residual = fit_betas([0.75, 0.25], o)
        assert residual < 1e-4  # ridge bias only
        assert b.tolist() == pytest.approx([-np.log(3), -np.log(3), 0.0], abs=1e-3)

    def test_seeded(self):
        o = opts((0.2, -0.4, 0.3), (-0.6, 0.1, 0.0))
        a = fit_betas([0.5, 0.3, 0.2], o, seed=3)
        b = fit_betas([0.5, 0.3, 0.2], o, seed=3)
        assert np.array_equal(a[0], b[0]) and a[1] == b[1]

    def test_target_size_checked(self):
        with pytest.raises(InvalidInputError):
            fit_betas([0.5, 0.5], opts((0, 0, 0), (1, 1, 0)))


class TestShares:
    def test_considered_strictly_above_five_percent(self):
        labels = [0] * 90 + [1] * 5 + [2] * 5
        assert considered_routes(labels) == [0]
        labels = [0] * 89 + [1] * 6 + [2] * 5
        assert considered_routes(labels) == [0, 1]

    def test_other_never_considered(self):
        assert considered_routes([OTHER] * 10 + [0] * 10) == [0]
        assert considered_routes([]) == []

    def test_target_shares(self):
        t = target_shares([0, 0, 1, 2, OTHER], [0, 1])
        assert t.tolist() == pytest.approx([0.4, 0.2, 0.4])

    def test_null_model(self):
        m = null_model({0: 3, 1: 1})
        assert m.shares == {0: 0.75, 1: 0.25}
        empty = null_model({}, [0, 1])
        assert empty.shares == {0: 1 / 3, 1: 1 / 3, OTHER: 1 / 3}


class TestTreeRenormalization:
    def test_complement(self):
        assert renormalize_tree_output([0.3, 0.2]).tolist() == pytest.approx([0.3, 0.2, 0.5])

    def test_scaling(self):
        assert renormalize_tree_output([0.8, 0.6]).tolist() == pytest.approx([4 / 7, 3 / 7, 0.0])

    def test_all_zero(self):
        assert renormalize_tree_output([0.0, 0.0]).tolist() == [0.0, 0.0, 1.0]

    def test_clamped(self):
        assert renormalize_tree_output([-0.2, 1.3]).tolist() == [0.0, 1.0, 0.0]


class TestFitting:
    def test_tree_rows(self):
        X, y = tree_rows([0, 1, OTHER], opts((0, 0, 0), (1, 1, 0)))
        assert X.shape == (6, 3)
        assert y.tolist() == [1, 0, 0, 1, 0, 0]

    def test_tree_model_recovers_shares(self):
        o = opts((-0.5, 0.2, 0.0), (0.5, -0.2, 0.5))
        labels = [0] * 60 + [1] * 30 + [OTHER] * 10
        m = fit_tree(labels, o)
        assert m.predict(o).tolist() == pytest.approx([0.6, 0.3, 0.1])
        assert m.score == pytest.approx(0.0, abs=1e-12)

    def test_multinomial_score_is_residual(self):
        o = opts((-0.5, 0.2, 0.0), (0.5, -0.2, 0.5))
        labels = [0] * 60 + [1] * 30 + [OTHER] * 10
        m = fit_multinomial(labels, o)
        assert m.score == pytest.approx(np.linalg.norm(m.predict(o) - [0.6, 0.3, 0.1]))

    def test_empty_segment_uniform(self):
        scaler = FeatureScaler.fit(props(3))
        m = fit_segment_model("multinomial", [], [0, 1, 2], props(3), scaler)
        assert isinstance(m, UniformModel) and m.considered == (0, 1, 2)

    def test_single_option_constant(self):
        scaler = FeatureScaler.fit(props(3))
        m = fit_segment_model("multinomial", [1] * 97 + [0] * 3, [0, 1, 2], props(3), scaler)
        assert m == ConstantModel(1, (1,))
        m = fit_segment_model("tree", [OTHER] * 20, [0, 1], props(3), scaler)
        assert isinstance(m, ConstantModel) and m.route == OTHER

    @pytest.mark.parametrize("family,cls", [("multinomial", MultinomialModel), ("tree", TreeModel),
                                            ("null", NullModel)])
    def test_families(self, family, cls):
        scaler = FeatureScaler.fit(props(3))
        labels = [0] * 50 + [1] * 30 + [2] * 20
        assert isinstance(fit_segment_model(family, labels, [0, 1, 2], props(3), scaler), cls)

    def test_unknown_family(self):
        scaler = FeatureScaler.fit(props(3))
        with pytest.raises(InvalidInputError):
            fit_segment_model("probit", [0, 1] * 10, [0, 1], props(3), scaler)

    def test_scaler(self):
        s = FeatureScaler.fit(props(3))
        o = s.options([0, 2], props(3))
        assert (o[0].x_length, o[1].x_length) == (-1.0, 1.0)
        assert (o[0].x_charges, o[1].x_charges) == (1.0, -1.0)
        assert FeatureScaler.from_dict(s.to_dict()) == s
        flat = FeatureScaler((5.0, 5.0), (1.0, 1.0))
        assert flat.option(0, props(1)[0]).x_length == 0.0


def all_models(rng):
    o = opts((-0.5, 0.2, 0.0), (0.5, -0.2, 0.5), (0.0, 0.0, 0.3))
    labels = rng.choice([0, 1, 2, OTHER], size=80, p=[0.4, 0.3, 0.2, 0.1])
    return [
        fit_multinomial(labels, o),
        fit_tree(labels, o),
        ConstantModel(1, (1,)),
        UniformModel((0, 1, 2)),
        null_model({0: 5, 1: 3, OTHER: 2}),
    ]


class TestSimplexAndRoundTrip:
    def test_roundtrip(self, rng):
        o = opts((0.1, 0.2, 0.3), (-0.4, 0.1, 0.0))
        for m in all_models(rng):
            back = model_from_dict(m.to_dict())
            assert back.to_dict() == m.to_dict()
            assert np.array_equal(back.predict(o), m.predict(o))

    def test_unknown_variant(self):
        with pytest.raises(InvalidInputError):
            model_from_dict({"variant": "nope"})

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 5), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, 1)),
                    min_size=0, max_size=6, unique_by=lambda t: t[0]),
           st.lists(st.floats(-10, 0), min_size=3, max_size=3))
    def test_simplex(self, rows, betas):
        o = [RouteOption(*r) for r in rows]
        models = [MultinomialModel(tuple(betas), ()), ConstantModel(3), UniformModel(),
                  NullModel({0: 0.5, 3: 0.3, OTHER: 0.2})]
        for m in models:
            p = m.predict(o)
            assert p.size == len(o) + 1
            assert abs(p.sum() - 1.0) <= 1e-9
            assert np.all((p >= 0) & (p <= 1))

    def test_empty_options_give_other(self, rng):
        for m in all_models(rng):
            assert m.predict([]).tolist() == [1.0]
