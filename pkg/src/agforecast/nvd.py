"""CVSS v2 lookups against the NVD CVE API, with a local cache and fixtures.

Lookup order is cache, then the fixture directory, then the network.  The
network is only touched when ``offline`` is off.  Fixture files are NVD 2.0
API responses saved as ``<CVE-ID>.json``; cache entries are small JSON
documents, also one per CVE, written atomically.

This is the only module that performs network I/O.
"""

from __future__ import annotations

import datetime as dt
import json
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional
from urllib.error import HTTPError, URLError
from urllib.parse import urlencode
from urllib.request import Request, urlopen

from . import __version__, cvss
from .model import AttackGraph, VulnerabilityRecord

DEFAULT_API_BASE = "https://services.nvd.nist.gov/rest/json/cves/2.0"
CACHE_SCHEMA_VERSION = 1
CVE_PATTERN = re.compile(r"^CVE-\d{4}-\d{4,}$")
BUNDLED_FIXTURES = Path(__file__).parent / "data" / "nvd_fixtures"

_METRICS = ("av", "ac", "au", "c", "i", "a")
_VECTOR_KEYS = {"AV": "av", "AC": "ac", "Au": "au", "C": "c", "I": "i", "A": "a"}


class NvdError(Exception):
    pass


class InvalidCveId(NvdError, ValueError):
    pass


class CveNotFound(NvdError):
    pass


class NetworkError(NvdError):
    """Transport failure or upstream refusal; worth retrying later."""


class MalformedPayload(NvdError):
    pass


def default_cache_dir() -> Path:
    base = os.environ.get("XDG_DATA_HOME") or os.path.join(os.path.expanduser("~"), ".local", "share")
    return Path(base) / "agforecast" / "nvd"


@dataclass(frozen=True)
class CveLookupResult:
    cve_id: str
    av: str
    ac: str
    au: str
    c: str
    i: str
    a: str
    published_date: dt.date
    source: str  # network | cache | fixture

    @property
    def vector(self) -> str:
        return f"AV:{self.av}/AC:{self.ac}/Au:{self.au}/C:{self.c}/I:{self.i}/A:{self.a}"

    def factor(self, metric: str) -> float:
        return cvss.factor_for_code(metric, getattr(self, metric))

    def exploitability(self) -> cvss.ExploitabilityScore:
        return cvss.base_exploitability(self.factor("av"), self.factor("ac"), self.factor("au"))

    def impact(self) -> cvss.ImpactScore:
        return cvss.impact_score(self.factor("c"), self.factor("i"), self.factor("a"))


@dataclass(frozen=True)
class LookupOptions:
    fixtures_dir: Optional[Path] = None
    cache_dir: Optional[Path] = None
    offline: bool = True
    api_base: Optional[str] = None
    api_key: Optional[str] = None
    min_interval: float = 2.0
    timeout: float = 20.0

    @classmethod
    def from_env(cls, **kwargs) -> "LookupOptions":
        kwargs.setdefault("api_base", os.environ.get("NVD_API_BASE") or None)
        kwargs.setdefault("api_key", os.environ.get("NVD_API_KEY") or None)
        return cls(**kwargs)


def parse_vector(vector: str) -> dict[str, str]:
    codes = {}
    for part in vector.strip("()").split("/"):
        key, sep, value = part.partition(":")
        if not sep or key not in _VECTOR_KEYS:
            raise MalformedPayload(f"unrecognised CVSS v2 vector component {part!r} in {vector!r}")
        metric = _VECTOR_KEYS[key]
        try:
            cvss.factor_for_code(metric, value)
        except cvss.CvssError as exc:
            raise MalformedPayload(str(exc)) from None
        codes[metric] = value
    if set(codes) != set(_METRICS):
        raise MalformedPayload(f"incomplete CVSS v2 vector {vector!r}")
    return codes


def parse_nvd_payload(cve_id: str, payload, source: str) -> CveLookupResult:
    """Extract the v2 vector and published date from an NVD 2.0 API response."""
    if not isinstance(payload, dict) or not isinstance(payload.get("vulnerabilities", []), list):
        raise MalformedPayload(f"{cve_id}: response is not an NVD CVE API document")
    items = payload.get("vulnerabilities") or []
    match = None
    for item in items:
        cve = item.get("cve") if isinstance(item, dict) else None
        if isinstance(cve, dict) and cve.get("id") == cve_id:
            match = cve
            break
    if match is None:
        raise CveNotFound(f"{cve_id}: not found")
    try:
        metrics = match.get("metrics") or {}
        v2 = metrics["cvssMetricV2"]
        primary = next((m for m in v2 if m.get("type") == "Primary"), v2[0])
        vector = primary["cvssData"]["vectorString"]
        published = dt.date.fromisoformat(str(match["published"])[:10])
    except (KeyError, IndexError, TypeError, AttributeError, ValueError) as exc:
        raise MalformedPayload(f"{cve_id}: missing CVSS v2 vector or published date ({exc!r})") from None
    return CveLookupResult(cve_id=cve_id, published_date=published, source=source, **parse_vector(vector))


class NvdClient:
    def __init__(self, options: LookupOptions = LookupOptions()):
        self.options = options
        self._lock = threading.Lock()
        self._last_request = float("-inf")

    @property
    def cache_dir(self) -> Path:
        return Path(self.options.cache_dir) if self.options.cache_dir else default_cache_dir()

    def fetch_cvss(self, cve_id: str) -> CveLookupResult:
        if not isinstance(cve_id, str) or not CVE_PATTERN.match(cve_id):
            raise InvalidCveId(f"malformed CVE id {cve_id!r} (expected CVE-YYYY-NNNN)")
        hit = self._from_cache(cve_id)
        if hit is None:
            hit = self._from_fixtures(cve_id)
        if hit is None:
            if self.options.offline:
                raise CveNotFound(f"{cve_id}: not in cache or fixtures (offline)")
            hit = self._from_network(cve_id)
            self._write_cache(hit)
        return hit

    # -- sources --

    def _cache_path(self, cve_id: str) -> Path:
        return self.cache_dir / f"{cve_id}.json"

    def _from_cache(self, cve_id: str) -> Optional[CveLookupResult]:
        path = self._cache_path(cve_id)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError):
            return None  # unreadable entry: fall through and refetch
        if doc.get("schema_version") != CACHE_SCHEMA_VERSION or doc.get("cve_id") != cve_id:
            return None
        return CveLookupResult(cve_id=cve_id, published_date=dt.date.fromisoformat(doc["published_date"]),
                               source="cache", **parse_vector(doc["vector"]))

    def _write_cache(self, result: CveLookupResult) -> None:
        doc = {
            "schema_version": CACHE_SCHEMA_VERSION,
            "cve_id": result.cve_id,
            "vector": result.vector,
            "published_date": result.published_date.isoformat(),
        }
        directory = self.cache_dir
        directory.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=f".{result.cve_id}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
            os.replace(tmp, self._cache_path(result.cve_id))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def _from_fixtures(self, cve_id: str) -> Optional[CveLookupResult]:
        if self.options.fixtures_dir is None:
            return None
        path = Path(self.options.fixtures_dir) / f"{cve_id}.json"
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise MalformedPayload(f"{path}: {exc}") from None
        return parse_nvd_payload(cve_id, payload, "fixture")

    def _throttle(self) -> None:
        with self._lock:
            wait = self._last_request + self.options.min_interval - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last_request = time.monotonic()

    def _from_network(self, cve_id: str) -> CveLookupResult:
        base = self.options.api_base or DEFAULT_API_BASE
        url = f"{base}?{urlencode({'cveId': cve_id})}"
        headers = {"User-Agent": f"agforecast/{__version__}"}
        if self.options.api_key:
            headers["apiKey"] = self.options.api_key
        self._throttle()
        try:
            with urlopen(Request(url, headers=headers), timeout=self.options.timeout) as resp:
                body = resp.read()
        except HTTPError as exc:
            if exc.code == 404:
                raise CveNotFound(f"{cve_id}: not found upstream") from None
            raise NetworkError(f"{cve_id}: upstream HTTP {exc.code}") from None
        except (URLError, OSError) as exc:
            raise NetworkError(f"{cve_id}: {exc}") from None
        try:
            payload = json.loads(body)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise MalformedPayload(f"{cve_id}: upstream body is not JSON ({exc})") from None
        return parse_nvd_payload(cve_id, payload, "network")


def fetch_cvss(cve_id: str, options: LookupOptions = LookupOptions()) -> CveLookupResult:
    return NvdClient(options).fetch_cvss(cve_id)


_FIELDS = {
    "av": "access_vector",
    "ac": "access_complexity",
    "au": "authentication",
    "c": "conf_impact",
    "i": "integ_impact",
    "a": "avail_impact",
}


def hydrate_graph(g: AttackGraph, options: LookupOptions = LookupOptions(),
                  client: Optional[NvdClient] = None) -> AttackGraph:
    """Fill missing CVSS factors of ``g``'s vulnerabilities from lookups.

    Fields already present, overrides and disclosure dates are never
    changed.  A CVE that cannot be resolved is only an error when it has
    neither factors nor an exploitability override.  Network failures
    propagate as :class:`NetworkError`.
    """
    client = client or NvdClient(options)
    updated: list[VulnerabilityRecord] = []
    unresolved: list[str] = []
    for v in g.vulnerabilities:
        missing = [m for m, f in _FIELDS.items() if getattr(v, f) is None]
        if not missing:
            updated.append(v)
            continue
        try:
            hit = client.fetch_cvss(v.cve_id)
        except (CveNotFound, InvalidCveId, MalformedPayload):
            if v.exploitability_override is None and not v.has_exploit_factors:
                unresolved.append(v.cve_id)
            updated.append(v)
            continue
        updated.append(replace(v, **{_FIELDS[m]: hit.factor(m) for m in missing}))
    if unresolved:
        raise CveNotFound("unresolved CVEs with no exploitability override: " + ", ".join(unresolved))
    return g.with_vulnerabilities(updated)


def needs_hydration(g: AttackGraph) -> bool:
    return any(v.exploitability_override is None and not v.has_exploit_factors for v in g.vulnerabilities)
