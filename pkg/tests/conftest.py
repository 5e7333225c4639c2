import datetime as dt
import json
from pathlib import Path

import pytest

from agforecast import model

DATA = Path(__file__).resolve().parents[1] / "src" / "agforecast" / "data"
FIXTURE_GRAPH = DATA / "four_host_graph.json"
TWO_GOAL_GRAPH = DATA / "four_host_two_goal.json"
NVD_FIXTURES = DATA / "nvd_fixtures"


@pytest.fixture
def fixture_graph() -> model.AttackGraph:
    return model.load_graph(FIXTURE_GRAPH)


@pytest.fixture
def two_goal_graph() -> model.AttackGraph:
    return model.load_graph(TWO_GOAL_GRAPH)


def graph_doc(states, edges, vulns=None, scoring_date="2014-03-18", name="toy"):
    """Small graph document; every non-start state gets its own override-only CVE."""
    if vulns is None:
        vulns = []
        for s in states:
            if s.get("cve"):
                vulns.append({"cve": s["cve"], "disclosure_date": "2014-01-01",
                              "exploitability_override": s.pop("_score", 10.0)})
    for s in states:
        s.pop("_score", None)
    return {
        "name": name,
        "scoring_date": scoring_date,
        "states": states,
        "edges": [{"from": a, "to": b} for a, b in edges],
        "vulnerabilities": vulns,
    }


def chain_graph(*ids, scores=None) -> model.AttackGraph:
    """Deterministic chain ids[0] -> ids[1] -> ... with the last id the goal."""
    scores = scores or {}
    states = [{"id": ids[0], "kind": "start"}]
    for k, sid in enumerate(ids[1:], start=1):
        kind = "goal" if k == len(ids) - 1 else "transient"
        states.append({"id": sid, "kind": kind, "cve": f"CVE-2014-{1000 + k}", "_score": scores.get(sid, 10.0)})
    edges = list(zip(ids, ids[1:]))
    return model.parse_graph(json.dumps(graph_doc(states, edges)))


# -- acceptance summary ----------------------------------------------------------

_acceptance: dict[int, list] = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "acceptance", None)
    if marker is None:
        return
    number, title = marker
    entry = _acceptance.setdefault(number, [title, True])
    entry[1] = entry[1] and report.outcome == "passed"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None:
        outcome.get_result().acceptance = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, ok = _acceptance[number]
        terminalreporter.write_line(f"AC{number:<2} {'PASS' if ok else 'FAIL'}  {title}")
