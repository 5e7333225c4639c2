"""CVSS v2 exploitability and impact subscores.

Only the two subscores are computed here; the combined v2 base score with its
``f(impact)`` term is not needed by the chain model.  All values are kept at
full precision and the one-decimal rounding is applied for display only.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

# letter code -> factor value, CVSS v2 base metric tables
ACCESS_VECTOR = {"L": 0.395, "A": 0.646, "N": 1.0}
ACCESS_COMPLEXITY = {"H": 0.35, "M": 0.61, "L": 0.71}
AUTHENTICATION = {"M": 0.45, "S": 0.56, "N": 0.704}
IMPACT = {"N": 0.0, "P": 0.275, "C": 0.660}

SEVERITY_FACTOR = 20.0
IMPACT_FACTOR = 10.41

MAX_EXPLOITABILITY = SEVERITY_FACTOR * 1.0 * 0.71 * 0.704
MAX_IMPACT = IMPACT_FACTOR


class CvssError(ValueError):
    """A factor value or code outside the CVSS v2 tables."""


def round_half_up(value: float, digits: int = 1) -> float:
    """Round the way the CVSS calculators do (half away from zero).

    Goes through the shortest repr of ``value`` so that e.g. 2.86275 is not
    misrounded because of its binary expansion.
    """
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ExploitabilityScore:
    raw: float

    @property
    def rounded(self) -> float:
        return round_half_up(self.raw)


@dataclass(frozen=True)
class ImpactScore:
    raw: float

    @property
    def rounded(self) -> float:
        return round_half_up(self.raw)


def _check(value: float, table: dict[str, float], name: str) -> float:
    for legal in table.values():
        if abs(value - legal) < 1e-12:
            return legal
    raise CvssError(f"{name} factor {value!r} is not one of {sorted(table.values())}")


def factor_for_code(metric: str, code: str) -> float:
    """Map a vector letter code (``metric`` one of av/ac/au/c/i/a) to its factor."""
    table = _TABLES[metric]
    try:
        return table[code]
    except KeyError:
        raise CvssError(f"unknown {metric} code {code!r}; expected one of {sorted(table)}") from None


def code_for_factor(metric: str, value: float) -> str:
    table = _TABLES[metric]
    for code, legal in table.items():
        if abs(value - legal) < 1e-12:
            return code
    raise CvssError(f"{metric} factor {value!r} has no letter code")


def is_legal_factor(metric: str, value: float) -> bool:
    return any(abs(value - legal) < 1e-12 for legal in _TABLES[metric].values())


_TABLES = {
    "av": ACCESS_VECTOR,
    "ac": ACCESS_COMPLEXITY,
    "au": AUTHENTICATION,
    "c": IMPACT,
    "i": IMPACT,
    "a": IMPACT,
}


def base_exploitability(av: float, ac: float, au: float) -> ExploitabilityScore:
    """Exploitability subscore ``20 * AV * AC * Au``."""
    av = _check(av, ACCESS_VECTOR, "access vector")
    ac = _check(ac, ACCESS_COMPLEXITY, "access complexity")
    au = _check(au, AUTHENTICATION, "authentication")
    return ExploitabilityScore(SEVERITY_FACTOR * av * ac * au)


def impact_score(c: float, i: float, a: float) -> ImpactScore:
    """Impact subscore ``10.41 * (1 - (1-C)(1-I)(1-A))``."""
    c = _check(c, IMPACT, "confidentiality impact")
    i = _check(i, IMPACT, "integrity impact")
    a = _check(a, IMPACT, "availability impact")
    return ImpactScore(IMPACT_FACTOR * (1.0 - (1.0 - c) * (1.0 - i) * (1.0 - a)))


def temporal_exploitability(base: ExploitabilityScore | float, weight: float) -> float:
    """Scale a base exploitability by a temporal weight in [0, 1]."""
    if not 0.0 <= weight <= 1.0:
        raise CvssError(f"temporal weight {weight!r} outside [0, 1]")
    raw = base.raw if isinstance(base, ExploitabilityScore) else float(base)
    return weight * raw


def effective_exploitability(vuln, weight: float = 1.0) -> float:
    """Weighted exploitability of a vulnerability record.

    The record's ``exploitability_override`` wins over its factor triple; a
    record with neither cannot be scored.
    """
    if vuln.exploitability_override is not None:
        return temporal_exploitability(vuln.exploitability_override, weight)
    if vuln.has_exploit_factors:
        base = base_exploitability(vuln.access_vector, vuln.access_complexity, vuln.authentication)
        return temporal_exploitability(base, weight)
    raise CvssError(
        f"{vuln.cve_id}: no exploitability override and no AV/AC/Au factors "
        "(hydrate the graph from NVD or add an override)"
    )
