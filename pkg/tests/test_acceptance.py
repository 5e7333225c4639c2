"""Acceptance suite: one test per criterion, summarised as AC<n> PASS/FAIL lines.

Run with ``pytest tests/test_acceptance.py``; the summary appears at the end
of the terminal report.
"""

import json
import math
import random
import time

import numpy as np
import pytest
from click.testing import CliRunner

from agforecast import cvss, lifecycle, markov, model, simulate
from agforecast.cli import main

from conftest import FIXTURE_GRAPH
from oracles import neumann_series, random_graph_doc

acceptance = pytest.mark.acceptance


def data_lines(text):
    return [l for l in text.splitlines() if l and not l.startswith("#")]


@acceptance(1, "base exploitability rounds to 10.0")
def test_ac1_base_exploitability():
    e = cvss.base_exploitability(1.0, 0.71, 0.704)
    assert abs(e.raw - 9.9968) <= 1e-9
    assert e.rounded == 10.0


@acceptance(2, "temporal exploitability")
def test_ac2_temporal_score():
    assert cvss.temporal_exploitability(10.0, 0.85) == 8.5
    assert cvss.temporal_exploitability(8.6, 1.0) == 8.6


@acceptance(3, "impact formula extremes")
def test_ac3_impact_extremes():
    assert cvss.impact_score(0, 0, 0).raw == 0
    assert abs(cvss.impact_score(0.660, 0.660, 0.660).raw - 10.0008) <= 1e-9


@acceptance(4, "fundamental matrix matches Neumann series on 200+ random chains")
def test_ac4_fundamental_oracle():
    started = time.perf_counter()
    checked = 0
    for seed in range(250):
        g = model.parse_graph(json.dumps(random_graph_doc(random.Random(seed), max_states=6)))
        assert model.validate_graph(g) == []
        assert len(g.states) <= 6
        t = markov.build_transition_matrix(g, mode="static")
        N = markov.fundamental_matrix(t)
        Q = t.q_block
        assert np.max(np.abs(N - neumann_series(Q, 200))) < 1e-6
        assert np.max(np.abs((np.eye(len(Q)) - Q) @ N - np.eye(len(Q)))) < 1e-8
        checked += 1
    assert checked >= 200
    assert time.perf_counter() - started < 5.0


@acceptance(5, "simulation agrees with EPL, N and B within 3 SE at 100k runs")
def test_ac5_simulation_consistency(fixture_graph, two_goal_graph):
    started = time.perf_counter()
    runs = 100_000

    t = markov.build_transition_matrix(fixture_graph)
    N = markov.fundamental_matrix(t)
    a = markov.analyze_chain(t, "attacker")
    rep = simulate.simulate_paths(t, "attacker", runs=runs, seed=20140318)
    assert rep.truncated_runs == 0
    mean, se = rep.mean_path_length()
    assert abs(mean - a.epl) <= 3 * se
    row = N[t.index("attacker")]
    for sid in t.transient_ids:
        m, s = rep.mean_visits(sid)
        assert abs(m - row[t.index(sid)]) <= 3 * s + 1e-12

    t2 = markov.build_transition_matrix(two_goal_graph)
    B = markov.absorption_probabilities(markov.fundamental_matrix(t2), t2, "attacker")
    assert len(B) == 2
    rep2 = simulate.simulate_paths(t2, "attacker", runs=runs, seed=20140318)
    for goal, p in B.items():
        freq = rep2.visit_counts[goal] / runs
        se = math.sqrt(p * (1 - p) / runs)
        assert abs(freq - p) <= 3 * se
    assert time.perf_counter() - started < 30.0


@acceptance(6, "lifecycle forms bounded and nondecreasing; F(30) for the Pareto form")
def test_ac6_lifecycle():
    grid = range(1, 10**6 + 1, 97)
    for form in lifecycle.FORMS:
        p = lifecycle.LifecycleParams(form=form)
        values = [lifecycle.exploit_availability(t, p) for t in grid]
        values.append(lifecycle.exploit_availability(10**6, p))
        assert all(0.0 <= v <= 1.0 for v in values)
        assert all(b >= a for a, b in zip(values, values[1:]))
    f30 = lifecycle.exploit_availability(30, lifecycle.LifecycleParams(a=0.26, k=0.00161))
    assert abs(f30 - 0.9224) <= 5e-4


@acceptance(7, "150-day forecast: 151 rows, byte-identical, weights nondecreasing")
def test_ac7_forecast_determinism(tmp_path):
    runner = CliRunner()
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        started = time.perf_counter()
        res = runner.invoke(main, ["forecast", str(FIXTURE_GRAPH), "--horizon", "150", "--out-dir", str(out)])
        elapsed = time.perf_counter() - started
        assert res.exit_code == 0, res.stderr
        assert elapsed < 1.0
        outputs.append((out / "forecast.csv").read_bytes())
    assert outputs[0] == outputs[1]

    lines = data_lines(outputs[0].decode())
    header, rows = lines[0].split(","), [l.split(",") for l in lines[1:]]
    assert len(rows) == 151
    assert [int(r[0]) for r in rows] == list(range(151))
    weight_cols = [i for i, name in enumerate(header) if name.startswith("w_")]
    assert weight_cols
    for i in weight_cols:
        col = [float(r[i]) for r in rows]
        assert all(b >= a for a, b in zip(col, col[1:]))


@acceptance(8, "simulate defaults to 2000 runs; counts sum; seeded output reproducible")
def test_ac8_default_simulation(tmp_path):
    runner = CliRunner()
    files = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        started = time.perf_counter()
        res = runner.invoke(main, ["simulate", str(FIXTURE_GRAPH), "--seed", "42", "--out-dir", str(out)])
        elapsed = time.perf_counter() - started
        assert res.exit_code == 0, res.stderr
        assert elapsed < 1.0
        files.append(((out / "histogram.csv").read_bytes(), (out / "visits.csv").read_bytes()))
    assert files[0] == files[1]

    text = files[0][0].decode()
    meta = dict(l[2:].split(": ", 1) for l in text.splitlines() if l.startswith("# "))
    assert meta["runs"] == "2000"
    counts = sum(int(l.split(",")[2]) for l in data_lines(text)[1:])
    truncated = sum(int(pair.split("=")[1]) for pair in meta["truncated_runs"].split())
    assert counts + truncated == 2000


@acceptance(9, "demo emits 150-day EPL/PP/EI series and histograms at days 0/150/300")
def test_ac9_demo_artifacts(tmp_path):
    out = tmp_path / "demo"
    res = CliRunner().invoke(main, ["demo", "--out-dir", str(out), "--cache-dir", str(tmp_path / "cache")])
    assert res.exit_code == 0, res.stderr

    lines = data_lines((out / "forecast.csv").read_text())
    header = lines[0].split(",")
    assert header[:3] == ["day", "epl", "pp_h5"] and "ei_t5" in header
    assert len(lines) - 1 == 151
    assert lines[-1].split(",")[0] == "150"

    comparison = data_lines((out / "histogram_comparison.csv").read_text())
    assert comparison[0] == "length,day_0,day_150,day_300"
    totals = [sum(int(l.split(",")[k]) for l in comparison[1:]) for k in (1, 2, 3)]
    assert totals == [2000, 2000, 2000]
    days = {l.split(",")[0] for l in data_lines((out / "histogram.csv").read_text())[1:]}
    assert days == {"0", "150", "300"}


@acceptance(10, "scaling exploitability by c > 0 leaves P and node rank unchanged")
def test_ac10_scale_invariance(fixture_graph):
    started = time.perf_counter()
    rng = random.Random(10)
    graphs = [fixture_graph] + [
        model.parse_graph(json.dumps(random_graph_doc(random.Random(s), max_states=8))) for s in range(150)]
    for g in graphs:
        mode = rng.choice(markov.MODES)
        day = rng.randint(0, 300)
        scores = markov.state_scores(g, day, lifecycle.LifecycleParams(), mode)
        base = markov.transition_matrix_from_scores(g, scores, day)
        start = g.start.state_id
        base_rank = [s for s, _ in markov.node_rank(markov.fundamental_matrix(base), base, start)]
        for c in (10 ** rng.uniform(-6, 6), rng.uniform(0.5, 2.0), 1e-9, 1e9):
            scaled = markov.transition_matrix_from_scores(g, {k: v * c for k, v in scores.items()}, day)
            assert np.max(np.abs(base.entries - scaled.entries)) <= 1e-12
            rank = [s for s, _ in markov.node_rank(markov.fundamental_matrix(scaled), scaled, start)]
            assert rank == base_rank
    assert time.perf_counter() - started < 5.0
