import pytest

from agforecast import forecast, lifecycle
from agforecast.forecast import ForecastConfig, ForecastRow


def row(day, epl):
    return ForecastRow(day, epl, 0.5, {"g": 1.0}, 1.0, 2.0, {"CVE-2014-0001": 0.9})


def test_horizon_zero_equals_standalone(fixture_graph):
    rows = forecast.forecast_series(fixture_graph, 0)
    assert rows == [forecast.evaluate_day(fixture_graph, 0)]


def test_fixture_150_days(fixture_graph):
    rows = forecast.forecast_series(fixture_graph, 150, 1)
    assert len(rows) == 151
    assert [r.day_offset for r in rows] == list(range(151))
    for cve in rows[0].weights:
        ws = [r.weights[cve] for r in rows]
        assert all(b >= a for a, b in zip(ws, ws[1:]))


def test_step(fixture_graph):
    rows = forecast.forecast_series(fixture_graph, 10, 4)
    assert [r.day_offset for r in rows] == [0, 4, 8]


@pytest.mark.parametrize("day", [0, 37, 150])
def test_rows_reproduce_standalone(fixture_graph, day):
    rows = forecast.forecast_series(fixture_graph, 150)
    assert rows[day] == forecast.evaluate_day(fixture_graph, day)


def test_parallel_matches_serial(fixture_graph):
    assert forecast.forecast_series(fixture_graph, 40, workers=4) == forecast.forecast_series(fixture_graph, 40)


def test_static_mode_is_flat(fixture_graph):
    rows = forecast.forecast_series(fixture_graph, 20, config=ForecastConfig(mode="static"))
    assert len({r.epl for r in rows}) == 1
    assert all(w == 1.0 for r in rows for w in r.weights.values())


def test_csv_deterministic_and_parses(fixture_graph):
    cfg = ForecastConfig()
    text = forecast.series_to_csv(forecast.forecast_series(fixture_graph, 150), cfg)
    assert text == forecast.series_to_csv(forecast.forecast_series(fixture_graph, 150), cfg)
    header = next(l for l in text.splitlines() if not l.startswith("#"))
    assert header.startswith("day,epl,pp_h5,absorb_root_m4,ei_t5,ei_cum,w_CVE-2014-0098,")
    meta, rows = forecast.series_from_csv(text)
    assert meta["lifecycle_form"] == "pareto_cdf"
    assert meta["lifecycle_a"] == "0.26" and meta["lifecycle_k"] == "0.00161"
    assert meta["ei_steps"] == "5" and meta["pp_horizon"] == "5"
    assert meta["tool"].startswith("agforecast ")
    original = forecast.forecast_series(fixture_graph, 150)
    for a, b in zip(original, rows):
        assert b.epl == pytest.approx(a.epl, rel=1e-8)
        assert b.weights == pytest.approx(a.weights, rel=1e-8)


def test_json_round_trip(fixture_graph):
    rows = forecast.forecast_series(fixture_graph, 30)
    _, back = forecast.series_from_json(forecast.series_to_json(rows))
    assert back == rows


def test_metadata_records_form():
    cfg = ForecastConfig(lifecycle=lifecycle.LifecycleParams(form="eq6_literal"), ei_steps=9, pp_horizon=3)
    head = forecast.series_to_csv([row(0, 1.0)], cfg)
    assert "# lifecycle_form: eq6_literal" in head
    assert "pp_h3" in head and "ei_t9" in head


class TestThresholds:
    def test_epl_falls_below(self):
        rows = [row(0, 5.1), row(1, 4.9), row(2, 4.7)]
        c = forecast.threshold_crossings(rows, "epl", 4.86, "falls_below")
        assert c.first_day == 2

    def test_never_crosses(self):
        rows = [row(d, 5.0) for d in range(5)]
        assert forecast.threshold_crossings(rows, "epl", 4.86, "falls_below").first_day is None

    def test_strict(self):
        rows = [row(0, 5.0), row(1, 4.86), row(2, 4.0)]
        assert forecast.threshold_crossings(rows, "epl", 4.86, "falls_below").first_day == 2
        assert forecast.threshold_crossings(rows, "epl", 5.0, "rises_above").first_day is None

    def test_rises_above(self):
        rows = [row(0, 1.0), row(3, 2.0), row(6, 3.0)]
        assert forecast.threshold_crossings(rows, "epl", 1.5, "rises_above").first_day == 3

    def test_named_columns(self):
        rows = [row(0, 1.0)]
        assert forecast.threshold_crossings(rows, "w_CVE-2014-0001", 0.95, "falls_below").first_day == 0
        assert forecast.threshold_crossings(rows, "absorb_g", 0.5, "rises_above").first_day == 0

    def test_unknown_metric(self):
        with pytest.raises(KeyError):
            forecast.threshold_crossings([row(0, 1.0)], "nope", 1.0, "falls_below")

    def test_bad_direction(self):
        with pytest.raises(ValueError):
            forecast.threshold_crossings([row(0, 1.0)], "epl", 1.0, "sideways")


def test_crossings_csv():
    c = [forecast.ThresholdCrossing("epl", 4.86, "falls_below", None),
         forecast.ThresholdCrossing("pp", 0.5, "rises_above", 12)]
    assert forecast.crossings_to_csv(c).splitlines() == [
        "metric,threshold,direction,first_day", "epl,4.86,falls_below,none", "pp,0.5,rises_above,12"]
