"""Markov reward model: CVSS impact as a per-state reward."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import cvss
from .markov import TransitionMatrix, distribution_at
from .model import AttackGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RewardVector:
    state_ids: tuple[str, ...]
    values: np.ndarray
    missing: tuple[str, ...] = ()  # CVEs that fell back to zero reward

    def __getitem__(self, state_id: str) -> float:
        return float(self.values[self.state_ids.index(state_id)])


def reward_vector(g: AttackGraph) -> RewardVector:
    """Impact subscore per state; the start state and unscored CVEs get 0.

    ``impact_override`` on a vulnerability takes precedence over its C/I/A
    factors.  A vulnerability with neither is logged and rewarded 0 rather
    than guessed.
    """
    values = []
    missing = []
    for s in g.states:
        if s.cve_id is None:
            values.append(0.0)
            continue
        v = g.vulnerability(s.cve_id)
        if v.impact_override is not None:
            values.append(v.impact_override)
        elif v.has_impact_factors:
            values.append(cvss.impact_score(v.conf_impact, v.integ_impact, v.avail_impact).raw)
        else:
            values.append(0.0)
            if v.cve_id not in missing:
                missing.append(v.cve_id)
    if missing:
        log.warning("no C/I/A factors or impact_override for %s; reward set to 0", ", ".join(missing))
    return RewardVector(g.state_ids, np.array(values, dtype=float), tuple(missing))


def expected_impact(t: TransitionMatrix, r: RewardVector, start: str, steps: int) -> float:
    """Reward-weighted state distribution ``steps`` transitions after ``start``."""
    return float(distribution_at(t, start, steps) @ _aligned(t, r))


def cumulative_expected_impact(N: np.ndarray, t: TransitionMatrix, r: RewardVector, start: str) -> float:
    """Expected reward summed over every state visited until absorption.

    Each transient visit counts once, and the absorbing goal counts once on
    arrival.
    """
    values = _aligned(t, r)
    i = t.index(start)
    n = t.n_transient
    B = N @ t.r_block
    return float(N[i] @ values[:n] + B[i] @ values[n:])


def _aligned(t: TransitionMatrix, r: RewardVector) -> np.ndarray:
    if r.state_ids == t.state_order:
        return r.values
    return np.array([r[sid] for sid in t.state_order])
