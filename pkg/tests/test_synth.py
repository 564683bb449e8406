import copy

import numpy as np
import pytest

from routechoice import synth
from routechoice.dataset import airac_of
from routechoice.errors import InvalidInputError
from routechoice.geo import haversine_km


def small(name="stationary", n=60):
    s = synth.scenario(name)
    for p in s["periods"]:
        p["n_flights"] = n
    return s


def test_seeded_and_byte_stable():
    a = synth.synth_generate(small(), seed=4).files()
    b = synth.synth_generate(small(), seed=4).files()
    c = synth.synth_generate(small(), seed=5).files()
    assert a == b
    assert a["flights.jsonl"] != c["flights.jsonl"]


def test_flights_fall_in_their_periods():
    d = synth.synth_generate(small(), seed=1)
    ids = [airac_of(f.date).id for f in d.flights]
    assert set(ids[:60]) <= {"1601", "1602", "1603"}
    assert set(ids[60:]) <= {"1604", "1605"}


def test_truth_probabilities_are_distributions():
    d = synth.synth_generate(small(), seed=1)
    for period in d.truth["periods"]:
        for p in period["probabilities"].values():
            assert sum(p) == pytest.approx(1.0)
            assert min(p) >= 0


def test_labels_cover_every_flight():
    d = synth.synth_generate(small("four_corridor"), seed=2)
    v = synth.label_vector([f.flight_id for f in d.flights], d.labels)
    assert v.size == len(d.flights)
    assert set(v.tolist()) <= {-1, 0, 1, 2, 3}


def test_noise_waypoints_keep_clear_of_corridors():
    spec = small("four_corridor")
    centre = synth._centerline_points(spec)
    rng = np.random.default_rng(0)
    for _ in range(200):
        for lat, lon in synth._noise_waypoints(rng, spec, centre):
            assert haversine_km(lat, lon, centre[:, 0], centre[:, 1]).min() >= spec["noise_clearance_km"]


def test_shifted_changes_rates_only_in_second_period():
    d = synth.synth_generate(small("shifted"), seed=1)
    oc = d.zones.get("OC")
    assert oc.unit_rates["1604"] == pytest.approx(2.5 * oc.unit_rates["1601"])
    t0, t1 = d.truth["periods"]
    assert not np.allclose(t0["normalized_attributes"], t1["normalized_attributes"])


def test_spec_validation():
    spec = small()
    del spec["corridors"]
    with pytest.raises(InvalidInputError):
        synth.synth_generate(spec, 0)
    spec = small()
    spec["airlines"] = [{"code": "EZY"}]
    with pytest.raises(InvalidInputError):
        synth.synth_generate(spec, 0)


def test_unknown_scenario():
    with pytest.raises(InvalidInputError, match="four_corridor"):
        synth.scenario("nope")


def test_scenarios_are_copies():
    s = synth.scenario("stationary")
    s["corridors"].clear()
    assert synth.scenario("stationary")["corridors"]


def test_impossible_clearance():
    spec = copy.deepcopy(small("four_corridor"))
    spec["noise_clearance_km"] = 1e5
    spec["noise_fraction"] = 0.5
    with pytest.raises(InvalidInputError):
        synth.synth_generate(spec, 0)
