"""Non-homogeneous sweep: rebuild the chain for each day offset and evaluate
every metric on it."""

from __future__ import annotations

import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

from . import __version__, impact, lifecycle, markov
from .model import AttackGraph

DIRECTIONS = ("falls_below", "rises_above")
PP_NOTE = "pp is the probability of absorption within pp_horizon steps (P^H summed over goals)"


@dataclass(frozen=True)
class ForecastConfig:
    mode: str = "temporal"
    lifecycle: lifecycle.LifecycleParams = lifecycle.LifecycleParams()
    ei_steps: int = 5
    pp_horizon: int = 5
    top_k: int = 3

    def __post_init__(self):
        if self.mode not in markov.MODES:
            raise ValueError(f"mode must be one of {markov.MODES}")
        if self.ei_steps < 0 or self.pp_horizon < 0 or self.top_k < 1:
            raise ValueError("ei_steps and pp_horizon must be >= 0, top_k >= 1")

    def metadata(self) -> dict[str, object]:
        return {
            "tool": f"agforecast {__version__}",
            "mode": self.mode,
            "lifecycle_form": self.lifecycle.form,
            "lifecycle_a": self.lifecycle.a,
            "lifecycle_k": self.lifecycle.k,
            "min_age_days": self.lifecycle.min_age_days,
            "ei_steps": self.ei_steps,
            "pp_horizon": self.pp_horizon,
            "pp_definition": PP_NOTE,
        }


@dataclass(frozen=True)
class ForecastRow:
    day_offset: int
    epl: float
    pp: float
    absorption: dict[str, float]
    ei: float
    ei_cum: float
    weights: dict[str, float]
    top_ids: tuple[str, ...] = ()

    def metric(self, name: str) -> float:
        """Look a column up by its short name (epl, pp, ei, ei_cum, absorb_<goal>, w_<cve>)."""
        if name in ("epl", "pp", "ei", "ei_cum"):
            return getattr(self, name)
        if name.startswith("absorb_") and name[7:] in self.absorption:
            return self.absorption[name[7:]]
        if name.startswith("w_") and name[2:] in self.weights:
            return self.weights[name[2:]]
        raise KeyError(f"unknown metric {name!r}")


@dataclass(frozen=True)
class ThresholdCrossing:
    metric: str
    threshold: float
    direction: str
    first_day: Optional[int]


def evaluate_day(g: AttackGraph, day_offset: int, config: ForecastConfig = ForecastConfig()) -> ForecastRow:
    """All metrics of ``g`` on one day; a forecast row computed standalone."""
    t = markov.build_transition_matrix(g, day_offset, config.lifecycle, config.mode)
    start = g.start.state_id
    N = markov.fundamental_matrix(t)
    r = impact.reward_vector(g)
    if config.mode == "temporal":
        weights = {v.cve_id: lifecycle.temporal_weight(v, g.scoring_date, day_offset, config.lifecycle)
                   for v in g.vulnerabilities}
    else:
        weights = {v.cve_id: 1.0 for v in g.vulnerabilities}
    rank = markov.node_rank(N, t, start)
    return ForecastRow(
        day_offset=day_offset,
        epl=markov.expected_path_length(N, t, start),
        pp=markov.finite_horizon_absorption(t, start, None, config.pp_horizon),
        absorption=markov.absorption_probabilities(N, t, start),
        ei=impact.expected_impact(t, r, start, config.ei_steps),
        ei_cum=impact.cumulative_expected_impact(N, t, r, start),
        weights=weights,
        top_ids=tuple(sid for sid, _ in rank[: config.top_k]),
    )


def day_offsets(horizon_days: int, step_days: int = 1) -> list[int]:
    if horizon_days < 0:
        raise ValueError("horizon must be nonnegative")
    if step_days < 1:
        raise ValueError("step must be positive")
    return list(range(0, horizon_days + 1, step_days))


def forecast_series(g: AttackGraph, horizon_days: int = 150, step_days: int = 1,
                    config: ForecastConfig = ForecastConfig(), workers: int | None = None) -> list[ForecastRow]:
    """One :class:`ForecastRow` per offset 0, step, 2*step, ... <= horizon.

    Days are independent; with ``workers`` they are evaluated on a thread
    pool, and the result is always in ascending day order.
    """
    offsets = day_offsets(horizon_days, step_days)
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(lambda m: evaluate_day(g, m, config), offsets))
    return [evaluate_day(g, m, config) for m in offsets]


def threshold_crossings(rows: Sequence[ForecastRow], metric: str, threshold: float,
                        direction: str) -> ThresholdCrossing:
    """First day on which ``metric`` is strictly below/above ``threshold``."""
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    if rows:
        rows[0].metric(metric)  # unknown names fail even if nothing crosses
    for row in sorted(rows, key=lambda r: r.day_offset):
        value = row.metric(metric)
        if (value < threshold) if direction == "falls_below" else (value > threshold):
            return ThresholdCrossing(metric, threshold, direction, row.day_offset)
    return ThresholdCrossing(metric, threshold, direction, None)


# -- serialization -------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.9g}"


def csv_header(rows: Sequence[ForecastRow], config: ForecastConfig) -> list[str]:
    first = rows[0]
    return (
        ["day", "epl", f"pp_h{config.pp_horizon}"]
        + [f"absorb_{goal}" for goal in first.absorption]
        + [f"ei_t{config.ei_steps}", "ei_cum"]
        + [f"w_{cve}" for cve in first.weights]
    )


def metadata_lines(meta: dict[str, object]) -> str:
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def series_to_csv(rows: Sequence[ForecastRow], config: ForecastConfig = ForecastConfig()) -> str:
    out = io.StringIO()
    out.write(metadata_lines(config.metadata()))
    if not rows:
        return out.getvalue()
    out.write(",".join(csv_header(rows, config)) + "\n")
    for row in rows:
        cells = [str(row.day_offset), _fmt(row.epl), _fmt(row.pp)]
        cells += [_fmt(p) for p in row.absorption.values()]
        cells += [_fmt(row.ei), _fmt(row.ei_cum)]
        cells += [_fmt(w) for w in row.weights.values()]
        out.write(",".join(cells) + "\n")
    return out.getvalue()


def series_from_csv(text: str) -> tuple[dict[str, str], list[ForecastRow]]:
    """Parse :func:`series_to_csv` output back into (metadata, rows).

    The CSV carries no node-rank column, so ``top_ids`` comes back empty.
    """
    meta: dict[str, str] = {}
    header: list[str] | None = None
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            meta[key] = value
            continue
        cells = line.split(",")
        if header is None:
            header = cells
            continue
        rec = dict(zip(header, cells))
        absorb = {h[7:]: float(rec[h]) for h in header if h.startswith("absorb_")}
        weights = {h[2:]: float(rec[h]) for h in header if h.startswith("w_")}
        pp_col = next(h for h in header if h.startswith("pp_h"))
        ei_col = next(h for h in header if h.startswith("ei_t"))
        rows.append(ForecastRow(int(rec["day"]), float(rec["epl"]), float(rec[pp_col]), absorb,
                                float(rec[ei_col]), float(rec["ei_cum"]), weights))
    return meta, rows


def series_to_json(rows: Sequence[ForecastRow], config: ForecastConfig = ForecastConfig()) -> str:
    payload = {"metadata": config.metadata(), "rows": [asdict(r) for r in rows]}
    return json.dumps(payload, indent=2) + "\n"


def series_from_json(text: str) -> tuple[dict, list[ForecastRow]]:
    payload = json.loads(text)
    rows = []
    for rec in payload["rows"]:
        rec = dict(rec, top_ids=tuple(rec.get("top_ids", ())))
        rows.append(ForecastRow(**rec))
    return payload["metadata"], rows


def crossings_to_csv(crossings: Iterable[ThresholdCrossing]) -> str:
    lines = ["metric,threshold,direction,first_day"]
    for c in crossings:
        first = "none" if c.first_day is None else str(c.first_day)
        lines.append(f"{c.metric},{c.threshold:.9g},{c.direction},{first}")
    return "\n".join(lines) + "\n"
