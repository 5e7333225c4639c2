"""Command-line front end.

Exit codes: 0 success, 2 validation failure, 3 I/O error, 4 upstream or
network failure, 5 numeric failure.  Data goes to standard output (or to
``--out-dir``); diagnostics and logs go to standard error.
"""

from __future__ import annotations

import functools
import json
import logging
import shutil
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import click

from . import __version__, cvss, forecast, impact, lifecycle, markov, model, nvd, simulate

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_IO = 3
EXIT_UPSTREAM = 4
EXIT_NUMERIC = 5

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_GRAPH = DATA_DIR / "four_host_graph.json"

log = logging.getLogger("agforecast")


class Abort(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class RunConfig:
    mode: str
    lifecycle: lifecycle.LifecycleParams
    ei_steps: int
    pp_horizon: int
    fmt: str
    out_dir: Optional[Path]
    seed: int
    fixtures: Optional[Path]
    cache_dir: Optional[Path]
    lenient: bool
    online: bool

    @property
    def forecast(self) -> forecast.ForecastConfig:
        return forecast.ForecastConfig(self.mode, self.lifecycle, self.ei_steps, self.pp_horizon)

    @property
    def lookup(self) -> nvd.LookupOptions:
        return nvd.LookupOptions.from_env(fixtures_dir=self.fixtures, cache_dir=self.cache_dir,
                                          offline=not self.online)


def common_options(fn):
    options = [
        click.option("--mode", type=click.Choice(markov.MODES), default="temporal", show_default=True,
                     help="temporal reweights exploitability by exploit availability; static uses base scores"),
        click.option("--lifecycle-form", type=click.Choice(lifecycle.FORMS), default="pareto_cdf",
                     show_default=True),
        click.option("--lifecycle-a", type=float, default=lifecycle.DEFAULT_A, show_default=True),
        click.option("--lifecycle-k", type=float, default=lifecycle.DEFAULT_K, show_default=True),
        click.option("--min-age-days", type=click.IntRange(min=1), default=1, show_default=True),
        click.option("--ei-steps", type=click.IntRange(min=0), default=5, show_default=True,
                     help="steps T for the instantaneous expected impact"),
        click.option("--pp-horizon", type=click.IntRange(min=0), default=5, show_default=True,
                     help="horizon (steps) for the finite-horizon path probability"),
        click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True),
        click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option("--fixtures", type=click.Path(file_okay=False, path_type=Path), default=None,
                     help="directory of recorded NVD responses (<CVE>.json)"),
        click.option("--cache-dir", type=click.Path(file_okay=False, path_type=Path), default=None),
        click.option("--lenient", is_flag=True, help="ignore unknown keys in the graph file"),
        click.option("--online", is_flag=True, help="allow NVD network lookups"),
    ]

    @functools.wraps(fn)
    def wrapper(mode, lifecycle_form, lifecycle_a, lifecycle_k, min_age_days, ei_steps, pp_horizon,
                fmt, out_dir, seed, fixtures, cache_dir, lenient, online, **kwargs):
        try:
            params = lifecycle.LifecycleParams(lifecycle_a, lifecycle_k, lifecycle_form, min_age_days)
        except lifecycle.LifecycleError as exc:
            raise click.BadParameter(str(exc)) from None
        cfg = RunConfig(mode, params, ei_steps, pp_horizon, fmt, out_dir, seed, fixtures, cache_dir,
                        lenient, online)
        try:
            return fn(cfg, **kwargs)
        except Abort as exc:
            if str(exc):
                click.echo(str(exc), err=True)
            sys.exit(exc.code)

    for option in reversed(options):
        wrapper = option(wrapper)
    return wrapper


def _load(path: Path, cfg: RunConfig) -> model.AttackGraph:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise Abort(EXIT_IO, f"error: cannot read {path}: {exc.strerror or exc}") from None
    try:
        g = model.parse_graph(data, strict=not cfg.lenient)
    except model.GraphFormatError as exc:
        raise Abort(EXIT_INVALID, f"{path}: {exc}") from None
    diags = model.validate_graph(g)
    if diags:
        raise Abort(EXIT_INVALID, "\n".join(f"{path}: {d}" for d in diags))
    explicit = cfg.fixtures is not None or cfg.online
    if nvd.needs_hydration(g) or explicit:
        try:
            g = nvd.hydrate_graph(g, cfg.lookup)
        except nvd.NvdError as exc:
            raise Abort(EXIT_UPSTREAM, f"error: {exc}") from None
    return g


def _numeric(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (markov.NumericError, cvss.CvssError) as exc:
        raise Abort(EXIT_NUMERIC, f"error: {exc}") from None


def _write(cfg: RunConfig, name: str, text: str) -> None:
    if cfg.out_dir is None:
        click.echo(text, nl=False)
        return
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        (cfg.out_dir / name).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise Abort(EXIT_IO, f"error: cannot write {cfg.out_dir / name}: {exc}") from None


def _g12(x: float) -> float:
    return float(f"{x:.12g}")


# -- analysis document -----------------------------------------------------------

def analysis_document(g: model.AttackGraph, day_offset: int, config: forecast.ForecastConfig) -> dict:
    t = markov.build_transition_matrix(g, day_offset, config.lifecycle, config.mode)
    start = g.start.state_id
    N = markov.fundamental_matrix(t)
    r = impact.reward_vector(g)
    row = forecast.evaluate_day(g, day_offset, config)
    return {
        "metadata": dict(config.metadata(), graph=g.name, scoring_date=g.scoring_date.isoformat()),
        "day_offset": day_offset,
        "epl": _g12(row.epl),
        "pp": {"horizon": config.pp_horizon, "value": _g12(row.pp)},
        "absorption": {k: _g12(v) for k, v in row.absorption.items()},
        "ei": {"steps": config.ei_steps, "value": _g12(row.ei)},
        "ei_cumulative": _g12(row.ei_cum),
        "node_rank": [{"state": s, "expected_visits": _g12(v)} for s, v in markov.node_rank(N, t, start)],
        "weights": {k: _g12(v) for k, v in row.weights.items()},
        "rewards": {s: _g12(r[s]) for s in g.state_ids},
    }


def analysis_csv(doc: dict) -> str:
    lines = [forecast.metadata_lines(doc["metadata"]).rstrip("\n"), "section,key,value"]
    lines.append(f"metric,day,{doc['day_offset']}")
    lines.append(f"metric,epl,{doc['epl']!r}")
    lines.append(f"metric,pp_h{doc['pp']['horizon']},{doc['pp']['value']!r}")
    lines.append(f"metric,ei_t{doc['ei']['steps']},{doc['ei']['value']!r}")
    lines.append(f"metric,ei_cum,{doc['ei_cumulative']!r}")
    lines += [f"absorb,{k},{v!r}" for k, v in doc["absorption"].items()]
    lines += [f"node_rank,{e['state']},{e['expected_visits']!r}" for e in doc["node_rank"]]
    lines += [f"weight,{k},{v!r}" for k, v in doc["weights"].items()]
    lines += [f"reward,{k},{v!r}" for k, v in doc["rewards"].items()]
    return "\n".join(lines) + "\n"


# -- commands ------------------------------------------------------------------

@click.group()
@click.version_option(__version__, prog_name="agforecast")
def main():
    """Attack-graph security metrics and exploit-lifecycle forecasts."""
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(levelname)s: %(message)s")


@main.command()
@click.argument("path", type=click.Path(path_type=Path))
@common_options
def validate(cfg: RunConfig, path: Path):
    """Check a graph file; exit 0 when valid, 2 with one diagnostic per line otherwise."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise Abort(EXIT_IO, f"error: cannot read {path}: {exc.strerror or exc}") from None
    try:
        g = model.parse_graph(data, strict=not cfg.lenient)
    except model.GraphFormatError as exc:
        raise Abort(EXIT_INVALID, f"{path}: {exc}") from None
    diags = model.validate_graph(g)
    if diags:
        raise Abort(EXIT_INVALID, "\n".join(diags))


@main.command()
@click.argument("path", type=click.Path(path_type=Path))
@click.option("--day-offset", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--dump-matrix", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="also write the day's transition matrix as CSV to this file")
@common_options
def analyze(cfg: RunConfig, path: Path, day_offset: int, dump_matrix: Optional[Path]):
    """Metrics for one day: EPL, node rank, absorption, PP, EI and weights."""
    g = _load(path, cfg)
    doc = _numeric(analysis_document, g, day_offset, cfg.forecast)
    if dump_matrix is not None:
        t = _numeric(markov.build_transition_matrix, g, day_offset, cfg.lifecycle, cfg.mode)
        try:
            dump_matrix.write_text(t.to_csv(), encoding="utf-8")
        except OSError as exc:
            raise Abort(EXIT_IO, f"error: cannot write {dump_matrix}: {exc}") from None
    if cfg.fmt == "json":
        _write(cfg, "analysis.json", json.dumps(doc, indent=2) + "\n")
    else:
        _write(cfg, "analysis.csv", analysis_csv(doc))


def _parse_threshold(spec: str) -> tuple[str, str, float]:
    try:
        metric, direction, value = spec.split(":")
        if direction not in forecast.DIRECTIONS:
            raise ValueError
        return metric, direction, float(value)
    except ValueError:
        raise click.BadParameter(f"{spec!r}: expected METRIC:falls_below|rises_above:VALUE") from None


@main.command("forecast")
@click.argument("path", type=click.Path(path_type=Path))
@click.option("--horizon", type=click.IntRange(min=0), default=150, show_default=True, help="days")
@click.option("--step", type=click.IntRange(min=1), default=1, show_default=True, help="days")
@click.option("--threshold-epl", type=float, default=None, help="report first day EPL falls below this")
@click.option("--threshold-pp", type=float, default=None, help="report first day PP rises above this")
@click.option("--threshold-ei", type=float, default=None, help="report first day EI rises above this")
@click.option("--threshold", "thresholds", multiple=True, metavar="METRIC:DIRECTION:VALUE")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@common_options
def forecast_cmd(cfg: RunConfig, path: Path, horizon: int, step: int, threshold_epl, threshold_pp,
                 threshold_ei, thresholds, workers: int):
    """Daily metric series over a horizon, plus threshold crossings."""
    g = _load(path, cfg)
    checks = [_parse_threshold(s) for s in thresholds]
    if threshold_epl is not None:
        checks.append(("epl", "falls_below", threshold_epl))
    if threshold_pp is not None:
        checks.append(("pp", "rises_above", threshold_pp))
    if threshold_ei is not None:
        checks.append(("ei", "rises_above", threshold_ei))

    rows = _numeric(forecast.forecast_series, g, horizon, step, cfg.forecast, workers)
    crossings = []
    for metric, direction, value in checks:
        try:
            crossings.append(forecast.threshold_crossings(rows, metric, value, direction))
        except KeyError as exc:
            raise click.BadParameter(str(exc.args[0]), param_hint="--threshold") from None

    if cfg.fmt == "json":
        _write(cfg, "forecast.json", forecast.series_to_json(rows, cfg.forecast))
    else:
        _write(cfg, "forecast.csv", forecast.series_to_csv(rows, cfg.forecast))
    if crossings:
        if cfg.out_dir is not None:
            _write(cfg, "crossings.csv", forecast.crossings_to_csv(crossings))
        else:
            click.echo(forecast.crossings_to_csv(crossings), err=True, nl=False)


def _offsets(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise click.BadParameter(f"{text!r}: expected comma-separated day offsets") from None


def _simulate(g: model.AttackGraph, cfg: RunConfig, offsets: list[int], runs: int, max_steps: int,
              workers: int) -> None:
    rewards = impact.reward_vector(g).values
    try:
        reports = _numeric(simulate.multi_day_simulation, g, offsets, runs, cfg.seed, cfg.forecast,
                           max_steps, rewards, workers)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--day-offsets") from None
    extra = {"tool": f"agforecast {__version__}", "mode": cfg.mode, "lifecycle_form": cfg.lifecycle.form}
    if cfg.fmt == "json":
        doc = {
            "metadata": dict(extra, seed=cfg.seed, runs=runs, rng=simulate.RNG_ID, max_steps=max_steps),
            "reports": [
                {"day": r.day_offset, "seed": r.seed, "truncated_runs": r.truncated_runs,
                 "histogram": {str(k): v for k, v in r.path_length_histogram.items()},
                 "visits": r.visit_counts}
                for r in reports
            ],
        }
        _write(cfg, "simulation.json", json.dumps(doc, indent=2) + "\n")
        return
    _write(cfg, "histogram.csv", simulate.histogram_csv(reports, cfg.seed, extra))
    if cfg.out_dir is None:
        click.echo()
    _write(cfg, "visits.csv", simulate.visits_csv(reports, cfg.seed, extra))
    if len(reports) > 1 and cfg.out_dir is not None:
        _write(cfg, "histogram_comparison.csv", simulate.histogram_comparison_csv(reports))


@main.command("simulate")
@click.argument("path", type=click.Path(path_type=Path))
@click.option("--runs", type=click.IntRange(min=1), default=simulate.DEFAULT_RUNS, show_default=True)
@click.option("--day-offsets", default="0", show_default=True, help="comma-separated, e.g. 0,150,300")
@click.option("--max-steps", type=click.IntRange(min=1), default=simulate.DEFAULT_MAX_STEPS, show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@common_options
def simulate_cmd(cfg: RunConfig, path: Path, runs: int, day_offsets: str, max_steps: int, workers: int):
    """Monte Carlo attack paths: path-length histogram and state visits."""
    g = _load(path, cfg)
    _simulate(g, cfg, _offsets(day_offsets), runs, max_steps, workers)


@main.command("fetch-cvss")
@click.argument("cve_ids", nargs=-1, required=True)
@common_options
def fetch_cvss_cmd(cfg: RunConfig, cve_ids):
    """Look up CVSS v2 vectors (cache, then --fixtures, then NVD with --online)."""
    client = nvd.NvdClient(cfg.lookup)
    results = []
    for cve_id in cve_ids:
        try:
            results.append(client.fetch_cvss(cve_id))
        except nvd.InvalidCveId as exc:
            raise Abort(EXIT_INVALID, f"error: {exc}") from None
        except nvd.NvdError as exc:
            raise Abort(EXIT_UPSTREAM, f"error: {exc}") from None
    if cfg.fmt == "json":
        doc = [{"cve": r.cve_id, "vector": r.vector, "published_date": r.published_date.isoformat(),
                "exploitability": _g12(r.exploitability().raw), "impact": _g12(r.impact().raw),
                "source": r.source} for r in results]
        _write(cfg, "cvss.json", json.dumps(doc, indent=2) + "\n")
        return
    lines = ["cve,vector,published_date,exploitability,exploitability_rounded,impact,source"]
    for r in results:
        e = r.exploitability()
        lines.append(f"{r.cve_id},{r.vector},{r.published_date.isoformat()},{e.raw:.12g},{e.rounded},"
                     f"{r.impact().raw:.12g},{r.source}")
    _write(cfg, "cvss.csv", "\n".join(lines) + "\n")


@main.command()
@click.option("--horizon", type=click.IntRange(min=0), default=150, show_default=True)
@click.option("--runs", type=click.IntRange(min=1), default=simulate.DEFAULT_RUNS, show_default=True)
@click.option("--day-offsets", default="0,150,300", show_default=True)
@common_options
def demo(cfg: RunConfig, horizon: int, runs: int, day_offsets: str):
    """Run analyze, forecast and simulate on the bundled four-host example."""
    if cfg.out_dir is None:
        cfg = replace(cfg, out_dir=Path("agforecast-demo"))
    if cfg.fixtures is None:
        cfg = replace(cfg, fixtures=nvd.BUNDLED_FIXTURES)
    g = _load(FIXTURE_GRAPH, cfg)
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(FIXTURE_GRAPH, cfg.out_dir / "graph.json")
    except OSError as exc:
        raise Abort(EXIT_IO, f"error: {exc}") from None
    doc = _numeric(analysis_document, g, 0, cfg.forecast)
    _write(cfg, "analysis.csv", analysis_csv(doc))
    t = _numeric(markov.build_transition_matrix, g, 0, cfg.lifecycle, cfg.mode)
    _write(cfg, "matrix_day0.csv", t.to_csv())
    rows = _numeric(forecast.forecast_series, g, horizon, 1, cfg.forecast)
    _write(cfg, "forecast.csv", forecast.series_to_csv(rows, cfg.forecast))
    crossing = forecast.threshold_crossings(rows, "epl", 4.86, "falls_below")
    _write(cfg, "crossings.csv", forecast.crossings_to_csv([crossing]))
    _simulate(g, cfg, _offsets(day_offsets), runs, simulate.DEFAULT_MAX_STEPS, 1)
    for name in sorted(p.name for p in cfg.out_dir.iterdir()):
        click.echo(str(cfg.out_dir / name))


if __name__ == "__main__":
    main()
