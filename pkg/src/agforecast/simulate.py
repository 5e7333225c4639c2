"""Seeded Monte Carlo walks of an attacker over the chain.

Reproducibility contract
------------------------
Every run ``i`` of a simulation seeded with ``seed`` draws from its own numpy
``PCG64`` generator seeded with ``run_seed(seed, i)``, the ``i``-th output of
a SplitMix64 stream started at ``seed``::

    run_seed(seed, i) = fmix64((seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64)

``fmix64`` is the SplitMix64 output mixer (shifts 30/27/31, multipliers
0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).  Because each run owns its
stream, splitting runs across workers cannot change any result.

For a multi-day comparison the ``j``-th day offset is simulated with seed
``seed ^ fmix64(j)``; ``fmix64(0) == 0`` so the first day uses ``seed``
itself.
"""

from __future__ import annotations

import io
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import markov
from .forecast import ForecastConfig, metadata_lines
from .model import AttackGraph

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
RNG_ID = "numpy PCG64 per run, seeded by SplitMix64(seed, run_index)"
DEFAULT_RUNS = 2000
DEFAULT_MAX_STEPS = 10_000
_BLOCK = 32


def fmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def run_seed(seed: int, run_index: int) -> int:
    return fmix64(seed + (run_index + 1) * GOLDEN_GAMMA)


def day_seed(seed: int, offset_index: int) -> int:
    return (seed ^ fmix64(offset_index)) & MASK64


@dataclass
class SimulationReport:
    day_offset: int
    runs: int
    seed: int
    path_length_histogram: dict[int, int]
    visit_counts: dict[str, int]
    truncated_runs: int = 0
    max_steps: int = DEFAULT_MAX_STEPS
    rng: str = RNG_ID
    # second moments, kept so callers can form standard errors
    visit_sumsq: dict[str, int] = field(default_factory=dict, repr=False)
    reward_sum: float = 0.0
    reward_sumsq: float = 0.0

    @property
    def completed_runs(self) -> int:
        return sum(self.path_length_histogram.values())

    def mean_path_length(self) -> tuple[float, float]:
        """Mean length over absorbed runs and its standard error."""
        n = self.completed_runs
        s1 = sum(k * c for k, c in self.path_length_histogram.items())
        s2 = sum(k * k * c for k, c in self.path_length_histogram.items())
        return _mean_se(s1, s2, n)

    def mean_visits(self, state_id: str) -> tuple[float, float]:
        return _mean_se(self.visit_counts[state_id], self.visit_sumsq[state_id], self.runs)

    def mean_reward(self) -> tuple[float, float]:
        return _mean_se(self.reward_sum, self.reward_sumsq, self.runs)


def _mean_se(s1: float, s2: float, n: int) -> tuple[float, float]:
    if n == 0:
        return float("nan"), float("nan")
    mean = s1 / n
    if n < 2:
        return mean, 0.0
    var = max(0.0, (s2 - n * mean * mean) / (n - 1))
    return mean, (var / n) ** 0.5


def _row_tables(t: markov.TransitionMatrix):
    """Per state: successor indices and cumulative probabilities, state order."""
    tables = []
    for row in t.entries:
        idx = [j for j, p in enumerate(row) if p > 0]
        tables.append((idx, list(np.cumsum(row[idx]))))
    return tables


def _simulate_range(t: markov.TransitionMatrix, start: int, seed: int, lo: int, hi: int,
                    max_steps: int, rewards: Optional[np.ndarray]):
    n = len(t.state_order)
    absorbing = [j >= t.n_transient for j in range(n)]
    tables = _row_tables(t)
    rew = None if rewards is None else [float(x) for x in rewards]
    hist: dict[int, int] = {}
    visits = [0] * n
    sumsq = [0] * n
    truncated = 0
    r1 = r2 = 0.0
    for i in range(lo, hi):
        gen = np.random.Generator(np.random.PCG64(run_seed(seed, i)))
        draws = gen.random(_BLOCK).tolist()
        k = 0
        run_visits = {start: 1}
        state = start
        steps = 0
        while not absorbing[state] and steps < max_steps:
            if k == len(draws):
                draws = gen.random(_BLOCK).tolist()
                k = 0
            idx, cum = tables[state]
            pick = bisect_right(cum, draws[k])
            k += 1
            state = idx[min(pick, len(idx) - 1)]
            steps += 1
            run_visits[state] = run_visits.get(state, 0) + 1
        if absorbing[state]:
            hist[steps] = hist.get(steps, 0) + 1
        else:
            truncated += 1
        for s, c in run_visits.items():
            visits[s] += c
            sumsq[s] += c * c
        if rew is not None:
            acc = sum(rew[s] * c for s, c in run_visits.items())
            r1 += acc
            r2 += acc * acc
    return hist, visits, sumsq, truncated, r1, r2


def simulate_paths(t: markov.TransitionMatrix, start: str, runs: int = DEFAULT_RUNS, seed: int = 0,
                   max_steps: int = DEFAULT_MAX_STEPS, rewards: Optional[np.ndarray] = None,
                   workers: int | None = None) -> SimulationReport:
    """Walk ``runs`` attackers from ``start`` until absorption or ``max_steps``.

    Successors are sampled by inverse CDF over the row in canonical state
    order.  Path length counts transitions; every arrival at a state
    (including the start and the final goal) counts as a visit.  Runs that hit
    the step cap are counted in ``truncated_runs`` and kept out of the
    histogram.  ``rewards`` (aligned with ``t.state_order``) adds the
    accumulated reward moments to the report.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    seed &= MASK64
    s = t.index(start)
    if workers and workers > 1 and runs > 1:
        bounds = np.linspace(0, runs, min(workers, runs) + 1).astype(int)
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_simulate_range, t, s, seed, int(a), int(b), max_steps, rewards)
                       for a, b in zip(bounds[:-1], bounds[1:])]
            parts = [f.result() for f in futures]
    else:
        parts = [_simulate_range(t, s, seed, 0, runs, max_steps, rewards)]

    hist: dict[int, int] = {}
    n = len(t.state_order)
    visits = [0] * n
    sumsq = [0] * n
    truncated = 0
    r1 = r2 = 0.0
    for h, v, q, tr, a, b in parts:
        for length, c in h.items():
            hist[length] = hist.get(length, 0) + c
        visits = [x + y for x, y in zip(visits, v)]
        sumsq = [x + y for x, y in zip(sumsq, q)]
        truncated += tr
        r1 += a
        r2 += b
    return SimulationReport(
        day_offset=t.day_offset,
        runs=runs,
        seed=seed,
        path_length_histogram=dict(sorted(hist.items())),
        visit_counts=dict(zip(t.state_order, visits)),
        truncated_runs=truncated,
        max_steps=max_steps,
        visit_sumsq=dict(zip(t.state_order, sumsq)),
        reward_sum=r1,
        reward_sumsq=r2,
    )


def multi_day_simulation(g: AttackGraph, day_offsets: Sequence[int], runs: int = DEFAULT_RUNS,
                         seed: int = 0, config: ForecastConfig = ForecastConfig(),
                         max_steps: int = DEFAULT_MAX_STEPS, rewards: Optional[np.ndarray] = None,
                         workers: int | None = None) -> list[SimulationReport]:
    offsets = list(day_offsets)
    if not offsets:
        raise ValueError("at least one day offset is required")
    if any(m < 0 for m in offsets) or any(b <= a for a, b in zip(offsets, offsets[1:])):
        raise ValueError("day offsets must be nonnegative and strictly increasing")
    reports = []
    for j, m in enumerate(offsets):
        t = markov.build_transition_matrix(g, m, config.lifecycle, config.mode)
        reports.append(simulate_paths(t, g.start.state_id, runs, day_seed(seed, j), max_steps,
                                      rewards, workers))
    return reports


# -- CSV output ----------------------------------------------------------------

def _metadata(reports: Sequence[SimulationReport], base_seed: Optional[int], extra: Optional[dict]) -> str:
    first = reports[0]
    meta = dict(extra or {})
    meta.update({
        "seed": first.seed if base_seed is None else base_seed,
        "day_seeds": " ".join(f"{r.day_offset}={r.seed}" for r in reports),
        "runs": first.runs,
        "rng": first.rng,
        "max_steps": first.max_steps,
        "truncated_runs": " ".join(f"{r.day_offset}={r.truncated_runs}" for r in reports),
    })
    return metadata_lines(meta)


def histogram_csv(reports: Sequence[SimulationReport], base_seed: Optional[int] = None,
                  extra: Optional[dict] = None) -> str:
    out = io.StringIO()
    out.write(_metadata(reports, base_seed, extra))
    out.write("day,length,count\n")
    for r in reports:
        for length, count in r.path_length_histogram.items():
            out.write(f"{r.day_offset},{length},{count}\n")
    return out.getvalue()


def visits_csv(reports: Sequence[SimulationReport], base_seed: Optional[int] = None,
               extra: Optional[dict] = None) -> str:
    out = io.StringIO()
    out.write(_metadata(reports, base_seed, extra))
    out.write("day,state,visits\n")
    for r in reports:
        for state, count in r.visit_counts.items():
            out.write(f"{r.day_offset},{state},{count}\n")
    return out.getvalue()


def histogram_comparison_csv(reports: Sequence[SimulationReport]) -> str:
    """Path-length counts side by side, one column per day offset."""
    lengths = sorted({k for r in reports for k in r.path_length_histogram})
    lines = ["length," + ",".join(f"day_{r.day_offset}" for r in reports)]
    for k in lengths:
        lines.append(f"{k}," + ",".join(str(r.path_length_histogram.get(k, 0)) for r in reports))
    return "\n".join(lines) + "\n"
