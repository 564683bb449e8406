import datetime as dt
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_flight
from routechoice.dataset import (
    AIRAC_EPOCH,
    airac_cycle,
    airac_of,
    cask_to_csv,
    filter_od,
    flights_in_airacs,
    flights_to_jsonl,
    load_cask,
    load_flights,
    make_split,
    parse_flights,
    split_train_validation,
)
from routechoice.errors import DataValidationError, InvalidInputError

days = st.dates(min_value=dt.date(2016, 1, 7), max_value=dt.date(2040, 12, 31))


class TestAirac:
    def test_epoch_is_1601(self):
        c = airac_cycle("1601")
        assert c.start_date == AIRAC_EPOCH
        assert c.end_date == AIRAC_EPOCH + dt.timedelta(days=28)

    def test_end_date_exclusive(self):
        c = airac_cycle("1601")
        assert c.start_date in c
        assert c.end_date not in c
        assert airac_of(c.end_date).id == "1602"

    def test_year_rollover(self):
        # 2016 holds 13 cycles; the 14th starts in 2017
        assert airac_cycle("1613").start_date == dt.date(2016, 12, 8)
        assert airac_cycle("1701").start_date == dt.date(2017, 1, 5)

    def test_2020_has_fourteen_cycles(self):
        assert airac_cycle("2014").start_date.year == 2020

    @pytest.mark.parametrize("bad", ["1600", "1614", "abcd", "161", "9999"])
    def test_invalid_ids(self, bad):
        with pytest.raises(InvalidInputError):
            airac_cycle(bad)

    @given(days)
    def test_of_and_cycle_agree(self, day):
        c = airac_of(day)
        assert day in c
        assert airac_cycle(c.id) == c
        assert (c.end_date - c.start_date).days == 28

    @given(days)
    def test_consecutive_days_same_or_next(self, day):
        a, b = airac_of(day), airac_of(day + dt.timedelta(days=1))
        assert a == b or b.start_date == a.end_date


class TestFlightsIO:
    def test_jsonl_roundtrip(self, tmp_path):
        flights = [make_flight("F1"), make_flight("F2", airline="RYR", regulated=True, hour=23.5)]
        p = tmp_path / "f.jsonl"
        p.write_text(flights_to_jsonl(flights))
        assert load_flights(p) == flights

    def test_blank_lines_skipped(self):
        text = flights_to_jsonl([make_flight()])
        assert len(parse_flights("\n" + text + "\n\n")) == 1

    def _row(self, **over):
        d = make_flight().to_dict()
        d.update(over)
        return json.dumps(d)

    @pytest.mark.parametrize("over,msg", [
        ({"origin": "LHR"}, "origin"),
        ({"airline": "easyjet"}, "airline"),
        ({"aircraft_mtow": -1}, "aircraft_mtow"),
        ({"regulated": "yes"}, "regulated"),
        ({"date": "2016-13-01"}, "date"),
        ({"trajectory": [[0, 0, 0, 0]]}, "trajectory"),
    ])
    def test_bad_field_reports_line(self, over, msg):
        text = self._row() + "\n" + self._row(**over) + "\n"
        with pytest.raises(DataValidationError, match=f"line 2: .*{msg}"):
            parse_flights(text)

    def test_missing_field(self):
        d = make_flight().to_dict()
        del d["arrival_time"]
        with pytest.raises(DataValidationError, match="line 1: missing.*arrival_time"):
            parse_flights(json.dumps(d))

    def test_bad_json(self):
        with pytest.raises(DataValidationError, match="line 1: invalid JSON"):
            parse_flights("{nope\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataValidationError):
            load_flights(tmp_path / "absent.jsonl")


class TestCask:
    def test_roundtrip(self, tmp_path):
        table = {"EZY": 0.05, "BAW": 0.11}
        p = tmp_path / "c.csv"
        p.write_text(cask_to_csv(table))
        assert load_cask(p) == table

    @pytest.mark.parametrize("text", ["a,b\nx,1\n", "airline,cask_eur\nEZY,abc\n", "airline,cask_eur\nEZY,0\n"])
    def test_invalid(self, tmp_path, text):
        p = tmp_path / "c.csv"
        p.write_text(text)
        with pytest.raises(DataValidationError):
            load_cask(p)


class TestSplit:
    @given(st.integers(0, 300), st.floats(0.05, 0.95), st.integers(0, 2**31))
    def test_partition(self, n, ratio, seed):
        items = list(range(n))
        train, val = split_train_validation(items, ratio, seed)
        assert sorted(train + val) == items
        assert len(train) == int(ratio * n + 0.5)

    def test_seeded(self):
        items = list(range(100))
        assert split_train_validation(items, 0.7, 5) == split_train_validation(items, 0.7, 5)
        assert split_train_validation(items, 0.7, 5) != split_train_validation(items, 0.7, 6)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.1])
    def test_bad_ratio(self, ratio):
        with pytest.raises(InvalidInputError):
            split_train_validation([1, 2], ratio, 0)

    def test_make_split_periods(self):
        c = {k: airac_cycle(k).start_date for k in ("1601", "1602", "1603", "1604")}
        flights = [make_flight(f"F{i}", day=c[k]) for i, k in enumerate(["1601"] * 10 + ["1602", "1603", "1603", "1604"])]
        s = make_split(flights, ["1601"], ["1603", "1604"], 0.7, 1)
        assert len(s.training) == 7 and len(s.validation) == 3
        assert len(s.testing_cluster_airac) == 2 and len(s.testing_eval_airacs) == 1

    def test_make_split_rejects(self):
        with pytest.raises(InvalidInputError):
            make_split([], ["1601"], ["1602"], 0.7, 1)
        with pytest.raises(InvalidInputError):
            make_split([], ["1601"], ["1601", "1602"], 0.7, 1)

    def test_filters(self):
        a = make_flight("A", origin="GCLP", destination="EGLL")
        b = make_flight("B", origin="GCTS", destination="EGKK", day=airac_cycle("1602").start_date)
        assert filter_od([a, b], ["GCTS"], None) == [b]
        assert filter_od([a, b], None, ["EGLL"]) == [a]
        assert filter_od([a, b], (), ()) == [a, b]
        assert flights_in_airacs([a, b], ["1602"]) == [b]
