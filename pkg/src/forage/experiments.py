"""Batch orchestration: shared-seed batches, epsilon sweeps and ablations.

Episode ``i`` of every compared algorithm runs with the same episode seed,
so item spawning, wind, drift and deployment are identical across them.
Aggregation is a sequential reduce over episode index using exactly rounded
sums, which makes it independent of episode order and of ``jobs``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

from .agents import FORAGER, SCOUT, TeamSpec
from .engine import EpisodeConfig, PolicyBinding, run_episode_with_metrics
from .metrics import (
    HIGHER_BETTER,
    LOWER_BETTER,
    SCALAR_FIELDS,
    SERIES_FIELDS,
    LinearFit,
    MetricError,
    MetricReport,
    SegmentedFit,
    marginal_contribution,
    segmented_slope,
    sensitivity_slope,
)
from .seeding import episode_seeds
from .trace import EpisodeTrace

Z95 = 1.96

Evaluate = Callable[[EpisodeTrace, MetricReport], float]


class BatchError(RuntimeError):
    """An episode of a batch failed; carries the offending seed."""

    def __init__(self, algorithm: str, seed: int, cause: BaseException):
        super().__init__(f"{algorithm}: episode with seed {seed} failed: {cause!r}")
        self.algorithm = algorithm
        self.seed = seed
        self.cause = cause


# ------------------------------------------------------------ aggregation


def mean_ci(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    """Mean and 95% half-width ``1.96 s / sqrt(n)``; half-width 0 for n = 1.

    ``None`` entries are skipped; an all-``None`` input gives ``(None, None)``.
    """
    xs = [float(v) for v in values if v is not None]
    n = len(xs)
    if n == 0:
        return None, None
    mean = math.fsum(xs) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2 for x in xs) / (n - 1)
    return mean, Z95 * math.sqrt(var) / math.sqrt(n)


def _padded(series: list, length: int) -> list:
    # finished episodes hold their last value until the longest one ends
    if not series:
        return [None] * length
    return list(series[:length]) + [series[-1]] * (length - len(series))


@dataclass
class AggregateReport:
    """Per-scalar mean/CI and per-step mean/CI bands over a batch."""

    n: int
    scalars: dict
    series: dict

    def to_dict(self) -> dict:
        return {"n": self.n, "scalars": self.scalars, "series": self.series}

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateReport":
        return cls(n=d["n"], scalars=d["scalars"], series=d["series"])

    def mean(self, name: str) -> Optional[float]:
        return self.scalars[name]["mean"]

    def ci(self, name: str) -> Optional[float]:
        return self.scalars[name]["ci"]


def aggregate(reports: Sequence[MetricReport]) -> AggregateReport:
    if not reports:
        raise ValueError("cannot aggregate an empty batch")
    scalars = {}
    for name in SCALAR_FIELDS + ("dsl_all",):
        if name == "dsl_all":
            values = [v for r in reports for v in r.dsl_values]
        else:
            values = [getattr(r, name) for r in reports]
        mean, ci = mean_ci(values)
        scalars[name] = {"mean": mean, "ci": ci, "n": sum(v is not None for v in values)}
    length = max(r.horizon for r in reports) + 1
    series = {}
    for name in SERIES_FIELDS:
        cols = [_padded(getattr(r, name), length) for r in reports]
        means, cis = [], []
        for t in range(length):
            mean, ci = mean_ci([c[t] for c in cols])
            means.append(mean)
            cis.append(ci)
        series[name.removesuffix("_series")] = {"mean": means, "ci": cis}
    return AggregateReport(n=len(reports), scalars=scalars, series=series)


# ------------------------------------------------------------------ batch


def _default_algorithms() -> dict:
    return {"greedy": {SCOUT: "greedy", FORAGER: "greedy"}}


@dataclass(frozen=True, eq=False)
class BatchSpec:
    base: EpisodeConfig
    n: int = 100
    master_seed: int = 0
    algorithms: Mapping[str, Mapping[str, PolicyBinding]] = field(default_factory=_default_algorithms)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a batch needs at least one episode")
        if not self.algorithms:
            raise ValueError("a batch needs at least one algorithm")

    @property
    def seeds(self) -> list[int]:
        return episode_seeds(self.master_seed, self.n)

    def configs(self, algorithm: str) -> list[EpisodeConfig]:
        policies = dict(self.algorithms[algorithm])
        return [replace(self.base, seed=s, policies=policies) for s in self.seeds]


@dataclass
class BatchResult:
    algorithm: str
    seeds: list[int]
    reports: list[MetricReport]
    traces: Optional[list[EpisodeTrace]] = None
    values: Optional[list[float]] = None

    @property
    def aggregate(self) -> AggregateReport:
        return aggregate(self.reports)


def _episode(args):
    config, evaluate, keep = args
    trace, report = run_episode_with_metrics(config)
    value = evaluate(trace, report) if evaluate is not None else None
    return report, trace if keep else None, value


def _run_configs(
    algorithm: str,
    configs: Sequence[EpisodeConfig],
    jobs: int,
    evaluate: Optional[Evaluate],
    keep_traces: bool,
) -> BatchResult:
    tasks = [(c, evaluate, keep_traces) for c in configs]
    results = []
    if jobs <= 1 or len(tasks) <= 1:
        for task in tasks:
            try:
                results.append(_episode(task))
            except Exception as exc:
                raise BatchError(algorithm, task[0].seed, exc) from exc
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_episode, task) for task in tasks]
            for task, fut in zip(tasks, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    raise BatchError(algorithm, task[0].seed, exc) from exc
    return BatchResult(
        algorithm=algorithm,
        seeds=[c.seed for c in configs],
        reports=[r[0] for r in results],
        traces=[r[1] for r in results] if keep_traces else None,
        values=[r[2] for r in results] if evaluate is not None else None,
    )


def run_batch(
    spec: BatchSpec,
    jobs: int = 1,
    keep_traces: bool = False,
    evaluate: Optional[Evaluate] = None,
) -> dict[str, BatchResult]:
    """Run every algorithm over the shared seed list."""
    return {
        name: _run_configs(name, spec.configs(name), jobs, evaluate, keep_traces)
        for name in spec.algorithms
    }


# ------------------------------------------------------------------ sweep


def default_grid(step: float = 0.05) -> tuple[float, ...]:
    n = round(1.0 / step)
    return tuple(round(k * step, 10) for k in range(n + 1))


TEAM_ALIASES = {"scout": SCOUT, "scouts": SCOUT, "forager": FORAGER, "foragers": FORAGER}


@dataclass(frozen=True, eq=False)
class SweepSpec:
    batch: BatchSpec
    team: str
    metric: str = "pta_c_final"
    grid: tuple[float, ...] = field(default_factory=default_grid)

    def __post_init__(self):
        if self.team not in TEAM_ALIASES:
            raise ValueError(f"unknown team {self.team!r}; expected scouts or foragers")
        g = list(self.grid)
        if not g:
            raise ValueError("empty epsilon grid")
        if any(not 0.0 <= e <= 1.0 for e in g):
            raise ValueError("epsilon grid must lie in [0, 1]")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise ValueError("epsilon grid must be strictly increasing")
        if self.metric not in SCALAR_FIELDS:
            raise ValueError(f"unknown metric {self.metric!r}")

    @property
    def corrupted_team(self) -> str:
        return TEAM_ALIASES[self.team]


@dataclass
class SweepResult:
    algorithm: str
    team: str
    metric: str
    eps: list[float]
    mean: list[Optional[float]]
    ci: list[Optional[float]]
    fit: LinearFit
    segmented: Optional[SegmentedFit]

    @property
    def ss(self) -> float:
        return self.fit.slope

    def to_dict(self) -> dict:
        seg = None
        if self.segmented is not None:
            s = self.segmented
            seg = {
                "breakpoint": s.breakpoint,
                "sse": s.sse,
                "segments": [vars(x) for x in s.segments],
            }
        return {
            "algorithm": self.algorithm,
            "team": self.team,
            "metric": self.metric,
            "eps": self.eps,
            "mean": self.mean,
            "ci": self.ci,
            "ss": self.fit.slope,
            "intercept": self.fit.intercept,
            "r2": self.fit.r2,
            "segmented": seg,
        }


def epsilon_sweep(
    spec: SweepSpec,
    jobs: int = 1,
    evaluate: Optional[Evaluate] = None,
) -> dict[str, SweepResult]:
    """Degradation curve of ``spec.metric`` as one team's actions are corrupted.

    ``evaluate`` replaces the metric lookup by a custom per-episode score.
    Corruption streams depend on (episode seed, agent id) only, so every
    algorithm and every grid point flips decisions from the same draws.
    """
    if len(spec.grid) < 2:
        raise MetricError("sensitivity slope needs at least two grid points")
    team = spec.corrupted_team
    score = evaluate or (lambda trace, report: getattr(report, spec.metric))
    out = {}
    for name in spec.batch.algorithms:
        base = spec.batch.configs(name)
        means, cis = [], []
        for eps in spec.grid:
            configs = [replace(c, corruption={team: eps}) for c in base]
            res = _run_configs(name, configs, jobs, score, False)
            mean, ci = mean_ci(res.values)
            means.append(mean)
            cis.append(ci)
        points = [(e, v) for e, v in zip(spec.grid, means) if v is not None]
        fit = sensitivity_slope(points)
        try:
            seg = segmented_slope(points)
        except MetricError:
            seg = None
        out[name] = SweepResult(name, team, spec.metric, list(spec.grid), means, cis, fit, seg)
    return out


def sweep_csv(results: Mapping[str, SweepResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "team", "metric", "eps", "mean", "ci"])
    for name, r in results.items():
        for e, m, c in zip(r.eps, r.mean, r.ci):
            w.writerow([name, r.team, r.metric, repr(e), _num(m), _num(c)])
    return buf.getvalue()


def ss_csv(results: Mapping[str, SweepResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "team", "metric", "ss", "intercept", "r2", "breakpoint", "slope_low", "slope_high"])
    for name, r in results.items():
        seg = r.segmented
        w.writerow([
            name, r.team, r.metric, _num(r.fit.slope), _num(r.fit.intercept), _num(r.fit.r2),
            _num(seg.breakpoint) if seg else "",
            _num(seg.segments[0].slope) if seg else "",
            _num(seg.segments[1].slope) if seg else "",
        ])
    return buf.getvalue()


# --------------------------------------------------------------- ablation

ABLATION_METRICS = (
    ("pta_d", "pta_d_final", HIGHER_BETTER),
    ("pta_c", "pta_c_final", HIGHER_BETTER),
    ("rmse", "rmse_final", LOWER_BETTER),
)
COMPLETE = "complete"


def setup_label(n_scouts: int, n_foragers: int) -> str:
    return f"{n_scouts}S-{n_foragers}F"


@dataclass(frozen=True, eq=False)
class AblationSpec:
    """Complete team plus the one-scout-less and one-forager-less setups."""

    batch: BatchSpec
    setups: Optional[tuple[tuple[str, int, int], ...]] = None

    def resolved_setups(self) -> tuple[tuple[str, int, int], ...]:
        if self.setups is not None:
            setups = self.setups
        else:
            s, f = self.batch.base.scouts.count, self.batch.base.foragers.count
            setups = (
                (COMPLETE, s, f),
                (setup_label(s - 1, f), s - 1, f),
                (setup_label(s, f - 1), s, f - 1),
            )
        for label, s, f in setups:
            if s < 0 or f < 0:
                raise ValueError(f"ablated setup {label!r} has a negative team count")
        if setups[0][0] != COMPLETE:
            raise ValueError(f"the first setup must be {COMPLETE!r}")
        return tuple(setups)


@dataclass
class AblationResult:
    # values[algorithm][setup][metric] -> batch mean
    values: dict
    # mc[algorithm][setup][metric] -> marginal contribution (None if undefined)
    mc: dict
    setups: tuple


def mc_table(values: Mapping[str, Mapping[str, float]], full: str = COMPLETE) -> dict:
    """Marginal contribution of every non-complete setup, per metric.

    ``values[setup][metric]`` holds batch means keyed by the short metric
    names ``pta_d``, ``pta_c`` and ``rmse``.
    """
    out = {}
    ref = values[full]
    for setup, row in values.items():
        if setup == full:
            continue
        out[setup] = {}
        for short, _, direction in ABLATION_METRICS:
            try:
                out[setup][short] = marginal_contribution(ref[short], row[short], direction)
            except (MetricError, TypeError):
                out[setup][short] = None
    return out


def ablation_study(spec: AblationSpec, jobs: int = 1) -> AblationResult:
    setups = spec.resolved_setups()
    base = spec.batch.base
    values: dict = {name: {} for name in spec.batch.algorithms}
    for label, s, f in setups:
        config = replace(
            base,
            scouts=TeamSpec(SCOUT, s, base.scouts.speed, base.scouts.sensing_radius),
            foragers=TeamSpec(FORAGER, f, base.foragers.speed, base.foragers.sensing_radius),
        )
        results = run_batch(replace(spec.batch, base=config), jobs=jobs)
        for name, res in results.items():
            agg = res.aggregate
            values[name][label] = {short: agg.mean(full) for short, full, _ in ABLATION_METRICS}
    mc = {name: mc_table(rows) for name, rows in values.items()}
    return AblationResult(values=values, mc=mc, setups=setups)


def ablation_csv(result: AblationResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", "setup", "pta_d", "pta_c", "rmse"])
    for name, rows in result.values.items():
        for label, row in rows.items():
            w.writerow([name, label, *(_num(row[s]) for s, _, _ in ABLATION_METRICS)])
    return buf.getvalue()


def mc_csv(result: AblationResult) -> str:
    labels = [label for label, _, _ in result.setups[1:]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", *(f"mc_{label}_{s}" for label in labels for s, _, _ in ABLATION_METRICS)])
    for name, rows in result.mc.items():
        w.writerow([name, *(_num(rows[label][s]) for label in labels for s, _, _ in ABLATION_METRICS)])
    return buf.getvalue()


# ----------------------------------------------------------------- tables


PRIMARY_COLUMNS = ("pta_d_final", "pta_c_final", "rmse_final")
TEMPORAL_COLUMNS = ("nt_50", "nt_90", "throughput")
INTERTEAM_COLUMNS = ("csr_final", "itl", "dsl_mean", "gini_final", "mi_final")


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def batch_table(results: Mapping[str, BatchResult], columns: Sequence[str] = PRIMARY_COLUMNS) -> str:
    """One row per algorithm with mean and CI columns for each scalar."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["algorithm", *(f"{c}_{kind}" for c in columns for kind in ("mean", "ci"))])
    for name, res in results.items():
        agg = res.aggregate
        w.writerow([name, *(_num(x) for c in columns for x in (agg.mean(c), agg.ci(c)))])
    return buf.getvalue()
