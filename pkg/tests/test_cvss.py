import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agforecast import cvss
from agforecast.model import VulnerabilityRecord
import datetime as dt


def record(**kw):
    return VulnerabilityRecord(cve_id=kw.pop("cve_id", "CVE-2014-0001"),
                               disclosure_date=dt.date(2014, 1, 1), **kw)


@pytest.mark.parametrize(
    "factors, raw, rounded",
    [
        ((1.0, 0.71, 0.704), 9.9968, 10.0),
        ((0.395, 0.35, 0.45), 1.24425, 1.2),
        ((1.0, 0.61, 0.56), 6.832, 6.8),
    ],
)
def test_base_exploitability(factors, raw, rounded):
    score = cvss.base_exploitability(*factors)
    assert score.raw == pytest.approx(raw, abs=1e-9)
    assert score.rounded == rounded


@pytest.mark.parametrize(
    "factors, raw, rounded",
    [
        ((0.0, 0.0, 0.0), 0.0, 0.0),
        ((0.660, 0.660, 0.660), 10.00084536, 10.0),
        ((0.275, 0.0, 0.0), 2.86275, 2.9),
    ],
)
def test_impact_score(factors, raw, rounded):
    score = cvss.impact_score(*factors)
    assert score.raw == pytest.approx(raw, abs=1e-9)
    assert score.rounded == rounded


def test_factor_outside_table_rejected():
    with pytest.raises(cvss.CvssError):
        cvss.base_exploitability(0.9, 0.71, 0.704)
    with pytest.raises(cvss.CvssError):
        cvss.impact_score(0.5, 0, 0)
    with pytest.raises(cvss.CvssError):
        cvss.factor_for_code("av", "X")


def test_temporal_exploitability_paper_examples():
    assert cvss.temporal_exploitability(cvss.ExploitabilityScore(10.0), 0.85) == 8.5
    assert cvss.temporal_exploitability(8.6, 1.0) == 8.6
    assert cvss.temporal_exploitability(7.3, 0.0) == 0.0
    with pytest.raises(cvss.CvssError):
        cvss.temporal_exploitability(5.0, 1.01)


def test_effective_exploitability():
    assert cvss.effective_exploitability(record(exploitability_override=7.9), 1.0) == 7.9
    assert cvss.effective_exploitability(record(exploitability_override=3.4), 0.5) == pytest.approx(1.7)
    v = record(access_vector=1.0, access_complexity=0.71, authentication=0.704)
    assert cvss.effective_exploitability(v, 1.0) == pytest.approx(9.9968, abs=1e-12)
    with pytest.raises(cvss.CvssError, match="no exploitability override"):
        cvss.effective_exploitability(record(), 1.0)


def test_override_wins_over_factors():
    v = record(access_vector=0.395, access_complexity=0.35, authentication=0.45, exploitability_override=9.0)
    assert cvss.effective_exploitability(v) == 9.0


def test_exploitability_range_over_all_triples():
    for av, ac, au in itertools.product(cvss.ACCESS_VECTOR.values(), cvss.ACCESS_COMPLEXITY.values(),
                                        cvss.AUTHENTICATION.values()):
        raw = cvss.base_exploitability(av, ac, au).raw
        assert 0 <= raw <= 10.001


def test_impact_monotone_over_grid():
    levels = sorted(cvss.IMPACT.values())
    for c, i, a in itertools.product(levels, repeat=3):
        base = cvss.impact_score(c, i, a).raw
        for k in range(3):
            bumped = [c, i, a]
            pos = levels.index(bumped[k])
            if pos + 1 < len(levels):
                bumped[k] = levels[pos + 1]
                assert cvss.impact_score(*bumped).raw >= base


@given(st.floats(0, 10.001), st.floats(0, 1))
def test_temporal_never_exceeds_base(e, w):
    out = cvss.temporal_exploitability(e, w)
    assert out <= e
    if out == e:
        assert w == 1 or e == 0


def test_round_half_up_is_decimal():
    assert cvss.round_half_up(2.86275) == 2.9
    assert cvss.round_half_up(0.25) == 0.3
    assert cvss.round_half_up(8.588799999999999) == 8.6


def test_codes_round_trip():
    for metric, table in cvss._TABLES.items():
        for code, value in table.items():
            assert cvss.code_for_factor(metric, value) == code
