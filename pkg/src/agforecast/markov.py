"""Absorbing Markov chain over an attack graph.

Convention: rows are from-states and distributions are row vectors that
multiply on the left, so one step is ``x @ P``.  States follow the graph's
canonical order (start, transients, goals), which gives the block form::

    P = [[Q, R],
         [0, I]]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from . import cvss, lifecycle
from .model import AttackGraph, StateKind

MODES = ("static", "temporal")


class NumericError(ArithmeticError):
    """A transition row or linear system cannot be evaluated."""


@dataclass(frozen=True)
class TransitionMatrix:
    day_offset: int
    state_order: tuple[str, ...]
    entries: np.ndarray
    n_transient: int

    @property
    def q_block(self) -> np.ndarray:
        n = self.n_transient
        return self.entries[:n, :n]

    @property
    def r_block(self) -> np.ndarray:
        n = self.n_transient
        return self.entries[:n, n:]

    @property
    def transient_ids(self) -> tuple[str, ...]:
        return self.state_order[: self.n_transient]

    @property
    def goal_ids(self) -> tuple[str, ...]:
        return self.state_order[self.n_transient :]

    def index(self, state_id: str) -> int:
        return self.state_order.index(state_id)

    def to_csv(self) -> str:
        """The matrix as CSV, header row of state ids, 12 significant digits."""
        lines = ["state," + ",".join(self.state_order)]
        for sid, row in zip(self.state_order, self.entries):
            lines.append(sid + "," + ",".join(f"{x:.12g}" for x in row))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ChainAnalysis:
    day_offset: int
    fundamental: np.ndarray
    node_rank: list[tuple[str, float]]
    epl: float
    absorption: dict[str, float]
    finite_horizon: dict[int, float] = field(default_factory=dict)


def state_scores(g: AttackGraph, day_offset: int = 0,
                 params: lifecycle.LifecycleParams = lifecycle.LifecycleParams(),
                 mode: str = "temporal") -> dict[str, float]:
    """Effective exploitability of every vulnerability-bearing state."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    scores = {}
    for s in g.states:
        if s.cve_id is None:
            continue
        v = g.vulnerability(s.cve_id)
        w = lifecycle.temporal_weight(v, g.scoring_date, day_offset, params) if mode == "temporal" else 1.0
        scores[s.state_id] = cvss.effective_exploitability(v, w)
    return scores


def transition_matrix_from_scores(g: AttackGraph, scores: Mapping[str, float],
                                  day_offset: int = 0) -> TransitionMatrix:
    """Normalize successor scores row by row; goal rows are identity rows."""
    order = g.state_ids
    pos = {sid: k for k, sid in enumerate(order)}
    n = len(order)
    P = np.zeros((n, n))
    for s in g.states:
        i = pos[s.state_id]
        if s.kind is StateKind.GOAL:
            P[i, i] = 1.0
            continue
        succ = g.successors(s.state_id)
        weights = np.array([scores[j] for j in succ], dtype=float)
        total = weights.sum()
        if not succ or not total > 0:
            raise NumericError(f"degenerate transition row at state {s.state_id}")
        for j, w in zip(succ, weights):
            P[i, pos[j]] = w / total
    n_transient = sum(1 for s in g.states if s.kind is not StateKind.GOAL)
    return TransitionMatrix(day_offset, order, P, n_transient)


def build_transition_matrix(g: AttackGraph, day_offset: int = 0,
                            params: lifecycle.LifecycleParams = lifecycle.LifecycleParams(),
                            mode: str = "temporal") -> TransitionMatrix:
    """Day-``day_offset`` transition matrix of ``g``.

    In temporal mode each vulnerability's exploitability is weighted by the
    lifecycle exploit-availability probability at its age on that day; in
    static mode every weight is 1.
    """
    return transition_matrix_from_scores(g, state_scores(g, day_offset, params, mode), day_offset)


def fundamental_matrix(t: TransitionMatrix) -> np.ndarray:
    """``N = (I - Q)^-1`` by a dense LU solve with partial pivoting."""
    Q = t.q_block
    A = np.eye(len(Q)) - Q
    try:
        N = np.linalg.solve(A, np.eye(len(Q)))
    except np.linalg.LinAlgError:
        raise NumericError("singular system in block I - Q of the transient states") from None
    resid = np.max(np.abs(A @ N - np.eye(len(Q)))) if len(Q) else 0.0
    if not resid < 1e-8:
        raise NumericError(f"fundamental matrix residual {resid:.3g} too large in block I - Q")
    return N


def node_rank(N: np.ndarray, t: TransitionMatrix, start: str) -> list[tuple[str, float]]:
    """Start row of N, sorted by expected visits (ties keep canonical order)."""
    row = N[t.index(start)]
    ranked = sorted(range(len(row)), key=lambda j: (-round(float(row[j]), 12), j))
    return [(t.state_order[j], float(row[j])) for j in ranked]


def expected_path_length(N: np.ndarray, t: TransitionMatrix, start: str) -> float:
    return float(N[t.index(start)].sum())


def absorption_probabilities(N: np.ndarray, t: TransitionMatrix, start: str) -> dict[str, float]:
    B = N @ t.r_block
    row = B[t.index(start)]
    return {g: float(p) for g, p in zip(t.goal_ids, row)}


def distribution_at(t: TransitionMatrix, start: str, steps: int) -> np.ndarray:
    """State distribution after ``steps`` transitions from ``start``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    x = np.zeros(len(t.state_order))
    x[t.index(start)] = 1.0
    for _ in range(steps):
        x = x @ t.entries
    return x


def finite_horizon_absorption(t: TransitionMatrix, start: str, goal: Optional[str], m: int) -> float:
    """P^m[start, goal]; with ``goal=None`` the total over all goals."""
    x = distribution_at(t, start, m)
    if goal is None:
        return float(x[t.n_transient:].sum())
    return float(x[t.index(goal)])


def analyze_chain(t: TransitionMatrix, start: str, horizons=()) -> ChainAnalysis:
    N = fundamental_matrix(t)
    return ChainAnalysis(
        day_offset=t.day_offset,
        fundamental=N,
        node_rank=node_rank(N, t, start),
        epl=expected_path_length(N, t, start),
        absorption=absorption_probabilities(N, t, start),
        finite_horizon={m: finite_horizon_absorption(t, start, None, m) for m in horizons},
    )
