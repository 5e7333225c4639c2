"""Exploit-availability lifecycle model.

The probability that a public exploit exists for a vulnerability grows with
its age ``t`` (days since disclosure) following a Pareto law with shape
``a = 0.26`` and scale ``k = 0.00161``.  The published forms of that law do
not agree with one another, so three are offered:

``pareto_cdf``
    ``F(t) = 1 - (k / t) ** a``, the textbook Pareto CDF (default).
``eq4_literal``
    ``F(t) = 1 - k / t ** a``.
``eq6_literal``
    ``F(t) = 1 - k ** a / t``.

Every form is clamped into [0, 1].  Age 0 (scored on the disclosure day) is
clamped up to ``min_age_days``.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

FORMS = ("pareto_cdf", "eq4_literal", "eq6_literal")

DEFAULT_A = 0.26
DEFAULT_K = 0.00161


class LifecycleError(ValueError):
    pass


@dataclass(frozen=True)
class LifecycleParams:
    a: float = DEFAULT_A
    k: float = DEFAULT_K
    form: str = "pareto_cdf"
    min_age_days: int = 1

    def __post_init__(self):
        if not self.a > 0:
            raise LifecycleError(f"shape a must be positive, got {self.a}")
        if not self.k > 0:
            raise LifecycleError(f"scale k must be positive, got {self.k}")
        if self.form not in FORMS:
            raise LifecycleError(f"unknown lifecycle form {self.form!r}; choose from {', '.join(FORMS)}")
        if int(self.min_age_days) != self.min_age_days or self.min_age_days < 1:
            raise LifecycleError(f"min_age_days must be an integer >= 1, got {self.min_age_days}")


@dataclass(frozen=True)
class VulnerabilityAge:
    days: int
    clamped_days: int


def vulnerability_age(
    disclosure: dt.date, scoring_date: dt.date, day_offset: int = 0, min_age_days: int = 1
) -> VulnerabilityAge:
    if disclosure > scoring_date:
        raise LifecycleError(f"disclosure {disclosure} is after scoring date {scoring_date}")
    if day_offset < 0:
        raise LifecycleError(f"day offset must be nonnegative, got {day_offset}")
    days = (scoring_date - disclosure).days + day_offset
    return VulnerabilityAge(days, max(days, min_age_days))


def exploit_availability(age: VulnerabilityAge | float, params: LifecycleParams = LifecycleParams()) -> float:
    """Probability that an exploit is available at the given age."""
    t = float(age.clamped_days if isinstance(age, VulnerabilityAge) else max(age, params.min_age_days))
    a, k = params.a, params.k
    if params.form == "pareto_cdf":
        f = 1.0 - (k / t) ** a
    elif params.form == "eq4_literal":
        f = 1.0 - k * t ** (-a)
    else:
        f = 1.0 - k**a / t
    return min(1.0, max(0.0, f))


def temporal_weight(vuln, scoring_date: dt.date, day_offset: int = 0,
                    params: LifecycleParams = LifecycleParams()) -> float:
    age = vulnerability_age(vuln.disclosure_date, scoring_date, day_offset, params.min_age_days)
    return exploit_availability(age, params)
