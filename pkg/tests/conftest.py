import datetime as dt

import numpy as np
import pytest

from routechoice import pipeline, synth
from routechoice.dataset import FlightRecord
from routechoice.geo import ChargingZoneSet, Trajectory, rectangle_zone

# Lines recorded by the acceptance suite, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def make_traj(latlon, start_s=0.0, step_s=600.0, alt=35000.0):
    pts = [(lat, lon, alt, start_s + i * step_s) for i, (lat, lon) in enumerate(latlon)]
    return Trajectory(pts)


def make_flight(fid="F1", airline="EZY", latlon=((0.0, 0.0), (0.0, 1.0)), mtow=50.0,
                day=dt.date(2016, 1, 10), hour=12.0, regulated=False, origin="GCLP",
                destination="EGLL"):
    return FlightRecord(fid, airline, mtow, origin, destination, day, hour, regulated, make_traj(latlon))


@pytest.fixture
def strip_zones():
    """Two adjacent equatorial boxes: A on lon [0, 1), B on lon [1, 2)."""
    return ChargingZoneSet((
        rectangle_zone("A", -1.0, 1.0, 0.0, 1.0, {"1601": 50.0, "1602": 55.0}),
        rectangle_zone("B", -1.0, 1.0, 1.0, 2.0, {"1601": 80.0, "1602": 80.0}),
    ))


EXPERIMENT = dict(training_airacs=("1601", "1602", "1603"), testing_airacs=("1604", "1605"))


def run_scenario(name: str, seed: int, model: str = "multinomial", matching: str = "centroid"):
    """Generate, train and test one built-in scenario."""
    data = synth.synth_generate(synth.scenario(name), seed=seed)
    config = pipeline.ExperimentConfig(**EXPERIMENT, model=model, matching=matching, seed=42)
    bundle = pipeline.train_pipeline(config, data.flights, data.zones, data.cask)
    report = pipeline.test(bundle, data.flights, data.zones)
    return data, bundle, report


@pytest.fixture(scope="session")
def stationary_run():
    return run_scenario("stationary", seed=3)


@pytest.fixture(scope="session")
def four_corridor_data():
    return synth.synth_generate(synth.scenario("four_corridor"), seed=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
