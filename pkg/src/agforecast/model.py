"""Attack-graph domain types, the JSON graph format, and structural validation.

A graph file looks like::

    {
      "name": "dmz",
      "scoring_date": "2014-03-18",
      "states": [{"id": "attacker", "kind": "start"},
                 {"id": "web", "kind": "transient", "cve": "CVE-2014-0098", "host": "M1"},
                 {"id": "root", "kind": "goal", "cve": "CVE-2013-4782", "host": "M4"}],
      "edges": [{"from": "attacker", "to": "web"}, {"from": "web", "to": "root"}],
      "vulnerabilities": [{"cve": "CVE-2014-0098", "disclosure_date": "2014-03-18",
                           "av": "N", "ac": "L", "au": "N", "c": "N", "i": "N", "a": "P"}, ...]
    }

Parsed graphs are immutable.  States are reordered canonically: the start
state first, transient states in file order, goal states last, so that the
(Q, R) partition of the transition matrix is positional.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

from . import cvss


class GraphFormatError(ValueError):
    """The graph document is malformed or fails structural checks."""


class StateKind(str, Enum):
    START = "start"
    TRANSIENT = "transient"
    GOAL = "goal"


@dataclass(frozen=True)
class VulnerabilityRecord:
    cve_id: str
    disclosure_date: dt.date
    access_vector: Optional[float] = None
    access_complexity: Optional[float] = None
    authentication: Optional[float] = None
    conf_impact: Optional[float] = None
    integ_impact: Optional[float] = None
    avail_impact: Optional[float] = None
    exploitability_override: Optional[float] = None
    impact_override: Optional[float] = None

    @property
    def has_exploit_factors(self) -> bool:
        return None not in (self.access_vector, self.access_complexity, self.authentication)

    @property
    def has_impact_factors(self) -> bool:
        return None not in (self.conf_impact, self.integ_impact, self.avail_impact)


@dataclass(frozen=True)
class AttackState:
    state_id: str
    kind: StateKind
    cve_id: Optional[str] = None
    host: Optional[str] = None


@dataclass(frozen=True)
class AttackGraph:
    name: str
    scoring_date: dt.date
    states: tuple[AttackState, ...]
    edges: tuple[tuple[str, str], ...]
    vulnerabilities: tuple[VulnerabilityRecord, ...]
    _vuln_index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "_vuln_index", {v.cve_id: v for v in self.vulnerabilities})

    @property
    def state_ids(self) -> tuple[str, ...]:
        return tuple(s.state_id for s in self.states)

    @property
    def start(self) -> AttackState:
        for s in self.states:
            if s.kind is StateKind.START:
                return s
        raise GraphFormatError("graph has no start state")

    @property
    def goals(self) -> tuple[AttackState, ...]:
        return tuple(s for s in self.states if s.kind is StateKind.GOAL)

    @property
    def transients(self) -> tuple[AttackState, ...]:
        """Non-absorbing states, start included, in canonical order."""
        return tuple(s for s in self.states if s.kind is not StateKind.GOAL)

    def state(self, state_id: str) -> AttackState:
        for s in self.states:
            if s.state_id == state_id:
                return s
        raise KeyError(state_id)

    def vulnerability(self, cve_id: str) -> VulnerabilityRecord:
        return self._vuln_index[cve_id]

    def successors(self, state_id: str) -> list[str]:
        """Successor ids ordered by canonical state position."""
        order = {sid: k for k, sid in enumerate(self.state_ids)}
        succ = [b for a, b in self.edges if a == state_id]
        return sorted(succ, key=lambda sid: order.get(sid, len(order)))

    def with_vulnerabilities(self, vulns: Iterable[VulnerabilityRecord]) -> "AttackGraph":
        return replace(self, vulnerabilities=tuple(vulns))


def canonical_order(states: Iterable[AttackState]) -> tuple[AttackState, ...]:
    states = list(states)
    rank = {StateKind.START: 0, StateKind.TRANSIENT: 1, StateKind.GOAL: 2}
    return tuple(sorted(states, key=lambda s: rank[s.kind]))  # stable


# -- parsing -------------------------------------------------------------------

_TOP_KEYS = {"name", "scoring_date", "states", "edges", "vulnerabilities"}
_STATE_KEYS = {"id", "kind", "cve", "host"}
_EDGE_KEYS = {"from", "to"}
_VULN_KEYS = {
    "cve", "disclosure_date", "av", "ac", "au", "c", "i", "a",
    "exploitability_override", "impact_override",
}
_VULN_FIELDS = {
    "av": "access_vector",
    "ac": "access_complexity",
    "au": "authentication",
    "c": "conf_impact",
    "i": "integ_impact",
    "a": "avail_impact",
}


def parse_date(text, where: str) -> dt.date:
    if not isinstance(text, str):
        raise GraphFormatError(f"{where}: expected a YYYY-MM-DD string, got {text!r}")
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise GraphFormatError(f"{where}: malformed date {text!r} (expected YYYY-MM-DD)") from None


def _keys(obj, allowed: set[str], where: str, strict: bool) -> None:
    if not isinstance(obj, dict):
        raise GraphFormatError(f"{where}: expected an object")
    extra = sorted(set(obj) - allowed)
    if extra and strict:
        raise GraphFormatError(f"{where}: unknown field(s) {', '.join(extra)}")


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise GraphFormatError(f"{where}: missing required field {key!r}")
    return obj[key]


def _optional_number(obj: dict, key: str, where: str, low: float, high: float) -> Optional[float]:
    if obj.get(key) is None:
        return None
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise GraphFormatError(f"{where}: {key} must be a number")
    if not low <= value <= high:
        raise GraphFormatError(f"{where}: {key} {value} outside [{low}, {high}]")
    return float(value)


def _parse_vulnerability(obj, k: int, strict: bool) -> VulnerabilityRecord:
    where = f"vulnerabilities[{k}]"
    _keys(obj, _VULN_KEYS, where, strict)
    cve_id = _require(obj, "cve", where)
    if not isinstance(cve_id, str) or not cve_id:
        raise GraphFormatError(f"{where}: cve must be a non-empty string")
    kwargs = {}
    for code_key, field_name in _VULN_FIELDS.items():
        code = obj.get(code_key)
        if code is None:
            continue
        try:
            kwargs[field_name] = cvss.factor_for_code(code_key, code)
        except cvss.CvssError as exc:
            raise GraphFormatError(f"{where} ({cve_id}): {exc}") from None
    override = obj.get("exploitability_override")
    if override is not None and (
        isinstance(override, bool) or not isinstance(override, (int, float)) or not 0 < override <= 10
    ):
        raise GraphFormatError(f"{where} ({cve_id}): exploitability_override must be in (0, 10]")
    return VulnerabilityRecord(
        cve_id=cve_id,
        disclosure_date=parse_date(_require(obj, "disclosure_date", where), f"{where} ({cve_id})"),
        exploitability_override=None if override is None else float(override),
        impact_override=_optional_number(obj, "impact_override", where, 0.0, cvss.MAX_IMPACT),
        **kwargs,
    )


def _parse_state(obj, k: int, strict: bool) -> AttackState:
    where = f"states[{k}]"
    _keys(obj, _STATE_KEYS, where, strict)
    sid = _require(obj, "id", where)
    if not isinstance(sid, str) or not sid:
        raise GraphFormatError(f"{where}: id must be a non-empty string")
    try:
        kind = StateKind(_require(obj, "kind", where))
    except ValueError:
        raise GraphFormatError(f"{where} ({sid}): kind must be start, transient or goal") from None
    cve_id = obj.get("cve")
    if kind is StateKind.START and cve_id is not None:
        raise GraphFormatError(f"{where} ({sid}): the start state must not carry a cve")
    if kind is not StateKind.START and cve_id is None:
        raise GraphFormatError(f"{where} ({sid}): {kind.value} state requires a cve")
    return AttackState(sid, kind, cve_id, obj.get("host"))


def parse_graph(document: bytes | str, strict: bool = True) -> AttackGraph:
    """Parse a graph document (UTF-8 JSON) into a resolved :class:`AttackGraph`.

    Raises :class:`GraphFormatError` for syntax errors (with line and column),
    unknown fields when ``strict``, duplicate ids, dangling references,
    malformed dates and illegal edges.  Reachability is left to
    :func:`validate_graph`.
    """
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GraphFormatError(f"document is not UTF-8: {exc}") from None
    try:
        raw = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None

    _keys(raw, _TOP_KEYS, "graph", strict)
    name = _require(raw, "name", "graph")
    if not isinstance(name, str):
        raise GraphFormatError("graph: name must be a string")
    scoring_date = parse_date(_require(raw, "scoring_date", "graph"), "scoring_date")
    for key in ("states", "edges", "vulnerabilities"):
        if not isinstance(_require(raw, key, "graph"), list):
            raise GraphFormatError(f"graph: {key} must be an array")

    vulns = [_parse_vulnerability(v, k, strict) for k, v in enumerate(raw["vulnerabilities"])]
    seen: set[str] = set()
    for v in vulns:
        if v.cve_id in seen:
            raise GraphFormatError(f"duplicate vulnerability {v.cve_id}")
        seen.add(v.cve_id)

    states = [_parse_state(s, k, strict) for k, s in enumerate(raw["states"])]
    ids: set[str] = set()
    for s in states:
        if s.state_id in ids:
            raise GraphFormatError(f"duplicate state_id {s.state_id}")
        ids.add(s.state_id)
        if s.cve_id is not None and s.cve_id not in seen:
            raise GraphFormatError(f"state {s.state_id}: unresolvable cve {s.cve_id}")

    kinds = {s.state_id: s.kind for s in states}
    edges: list[tuple[str, str]] = []
    for k, e in enumerate(raw["edges"]):
        where = f"edges[{k}]"
        _keys(e, _EDGE_KEYS, where, strict)
        a, b = _require(e, "from", where), _require(e, "to", where)
        for end in (a, b):
            if end not in kinds:
                raise GraphFormatError(f"{where}: unknown state {end!r}")
        if kinds[a] is StateKind.GOAL:
            raise GraphFormatError(f"{where}: edge from absorbing state {a}")
        if kinds[b] is StateKind.START:
            raise GraphFormatError(f"{where}: edge into start state {b}")
        if a == b:
            raise GraphFormatError(f"{where}: self-loop on state {a}")
        if (a, b) in edges:
            raise GraphFormatError(f"{where}: parallel edge {a} -> {b}")
        edges.append((a, b))

    return AttackGraph(
        name=name,
        scoring_date=scoring_date,
        states=canonical_order(states),
        edges=tuple(edges),
        vulnerabilities=tuple(vulns),
    )


def load_graph(path, strict: bool = True) -> AttackGraph:
    with open(path, "rb") as fh:
        return parse_graph(fh.read(), strict=strict)


def graph_to_dict(g: AttackGraph) -> dict:
    states = []
    for s in g.states:
        item = {"id": s.state_id, "kind": s.kind.value}
        if s.cve_id is not None:
            item["cve"] = s.cve_id
        if s.host is not None:
            item["host"] = s.host
        states.append(item)
    vulns = []
    for v in g.vulnerabilities:
        item = {"cve": v.cve_id, "disclosure_date": v.disclosure_date.isoformat()}
        for code_key, field_name in _VULN_FIELDS.items():
            value = getattr(v, field_name)
            if value is not None:
                item[code_key] = cvss.code_for_factor(code_key, value)
        if v.exploitability_override is not None:
            item["exploitability_override"] = v.exploitability_override
        if v.impact_override is not None:
            item["impact_override"] = v.impact_override
        vulns.append(item)
    return {
        "name": g.name,
        "scoring_date": g.scoring_date.isoformat(),
        "states": states,
        "edges": [{"from": a, "to": b} for a, b in g.edges],
        "vulnerabilities": vulns,
    }


def serialize_graph(g: AttackGraph) -> bytes:
    return (json.dumps(graph_to_dict(g), indent=2) + "\n").encode("utf-8")


# -- validation ----------------------------------------------------------------

def _reaches_goal(g: AttackGraph) -> set[str]:
    """Ids of states from which some goal is reachable (reverse BFS from goals)."""
    preds: dict[str, list[str]] = {}
    for a, b in g.edges:
        preds.setdefault(b, []).append(a)
    found = {s.state_id for s in g.goals}
    queue = deque(found)
    while queue:
        node = queue.popleft()
        for p in preds.get(node, ()):
            if p not in found:
                found.add(p)
                queue.append(p)
    return found


def validate_graph(g: AttackGraph) -> list[str]:
    """Return one diagnostic per violated structural invariant (empty = valid)."""
    diags: list[str] = []
    ids = [s.state_id for s in g.states]
    kinds = {s.state_id: s.kind for s in g.states}
    vulns = {v.cve_id: v for v in g.vulnerabilities}

    seen: set[str] = set()
    for sid in ids:
        if sid in seen:
            diags.append(f"duplicate state_id {sid}")
        seen.add(sid)

    starts = [s for s in g.states if s.kind is StateKind.START]
    if len(starts) != 1:
        diags.append(f"expected exactly one start state, found {len(starts)}")
    if not g.goals:
        diags.append("no goal state")

    for s in g.states:
        if s.kind is StateKind.START and s.cve_id is not None:
            diags.append(f"start state {s.state_id} must not carry a cve")
        elif s.kind is not StateKind.START:
            if s.cve_id is None:
                diags.append(f"{s.kind.value} state {s.state_id} has no cve")
            elif s.cve_id not in vulns:
                diags.append(f"state {s.state_id}: unresolvable cve {s.cve_id}")

    for v in g.vulnerabilities:
        if v.disclosure_date > g.scoring_date:
            diags.append(f"vulnerability {v.cve_id} disclosed after scoring date")
        for code_key, field_name in _VULN_FIELDS.items():
            value = getattr(v, field_name)
            if value is not None and not cvss.is_legal_factor(code_key, value):
                diags.append(f"vulnerability {v.cve_id}: {code_key} factor {value} not in CVSS v2 table")

    seen_edges: set[tuple[str, str]] = set()
    for a, b in g.edges:
        if a not in kinds or b not in kinds:
            diags.append(f"edge {a} -> {b} references unknown state")
            continue
        if kinds[a] is StateKind.GOAL:
            diags.append(f"edge from absorbing state {a}")
        if kinds[b] is StateKind.START:
            diags.append(f"edge into start state {b}")
        if a == b:
            diags.append(f"self-loop on state {a}")
        if (a, b) in seen_edges:
            diags.append(f"parallel edge {a} -> {b}")
        seen_edges.add((a, b))

    has_out = {a for a, _ in g.edges}
    dead = set()
    for s in g.states:
        if s.kind is not StateKind.GOAL and s.state_id not in has_out:
            diags.append(f"dead-end {s.kind.value} state {s.state_id}")
            dead.add(s.state_id)

    if g.goals:
        reach = _reaches_goal(g)
        for s in g.states:
            # a dead end is already reported above
            if s.state_id not in reach and s.state_id not in dead:
                diags.append(f"goal unreachable from state {s.state_id}")
    return diags
