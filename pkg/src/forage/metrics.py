"""Cooperation and performance metrics.

The scalar helpers (``pta``, ``rmse``, ``gini`` ...) are pure functions.
Trace-level functions (``idleness_series``, ``dsl``, ``csr``) and
:func:`report_from_trace` rebuild everything from an :class:`EpisodeTrace`
alone, while :class:`OnlineMetrics` is fed live state by the engine. Both
routes must agree exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .agents import FORAGER, OBSERVE, SCOUT, mean_idleness
from .trace import COLLECT, DISCOVER, MOVE, STEP, EpisodeTrace
from .world import GridMap, load_map

HIGHER_BETTER = "higher"
LOWER_BETTER = "lower"


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


# --------------------------------------------------------------- primary


def pta(u: float, u_ub: float) -> float:
    if u_ub <= 0:
        raise MetricError("PTA undefined: upper bound must be positive")
    if not 0 <= u <= u_ub:
        raise MetricError(f"PTA needs 0 <= u <= u_ub, got u={u}, u_ub={u_ub}")
    return 100.0 * u / u_ub


def gaussian_kernel(sigma: float = 1.0, radius: int = 3) -> np.ndarray:
    x = np.arange(-radius, radius + 1, dtype=float)
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return np.outer(g, g)


_KERNEL = gaussian_kernel()


def smooth(a: np.ndarray) -> np.ndarray:
    """Zero-padded convolution with the normalised sigma=1, radius-3 kernel."""
    return ndimage.convolve(np.asarray(a, dtype=float), _KERNEL, mode="constant", cval=0.0)


def rmse(truth: np.ndarray, estimate: np.ndarray, m: GridMap) -> float:
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    if truth.shape != estimate.shape or truth.shape != m.shape:
        raise MetricError(f"shape mismatch: {truth.shape} vs {estimate.shape} vs map {m.shape}")
    diff = smooth(truth.astype(float) - estimate.astype(float))[m.navigable]
    return math.sqrt(float(np.dot(diff, diff)) / diff.size)


def nt_x(series: Sequence[float], x: float, horizon: int) -> float:
    """Normalised first time the series reaches ``x`` percent (1 if never)."""
    if not len(series):
        raise MetricError("NT_X of an empty series")
    if not 0 < x <= 100:
        raise MetricError(f"threshold must be in (0, 100], got {x}")
    for t, v in enumerate(series):
        if v >= x:
            return t / horizon
    return 1.0


def throughput(collected: int, n_agents: int, t_end: int) -> float:
    if n_agents < 1 or t_end < 1:
        raise MetricError("throughput needs at least one agent and one step")
    return collected / (n_agents * t_end)


def idleness(age, forgetting: float):
    """Idleness law ``1 - f**age``; 0 right after a reset, -> 1 as age grows."""
    if not 0 < forgetting < 1:
        raise MetricError(f"forgetting factor must be in (0, 1), got {forgetting}")
    return 1.0 - np.power(forgetting, age)


def irr_series(mi: Sequence[float]) -> list[Optional[float]]:
    """Finite-difference idleness reduction rate; undefined at the last step."""
    return [mi[t] - mi[t + 1] for t in range(len(mi) - 1)] + [None]


# ------------------------------------------------------------ inter-team


def itl(r1: Sequence[float], r2: Sequence[float], horizon: int) -> float:
    """Normalised gap between the first steps at which each series peaks."""
    if not len(r1) or not len(r2):
        raise MetricError("ITL of an empty series")
    if len(r1) != len(r2):
        raise MetricError("ITL series must have equal length")
    t1 = int(np.argmax(np.asarray(r1, dtype=float)))
    t2 = int(np.argmax(np.asarray(r2, dtype=float)))
    return abs(t1 - t2) / horizon


def gini(contributions: Sequence[float]) -> float:
    c = np.asarray(contributions, dtype=float)
    if c.size == 0:
        raise MetricError("Gini of an empty team")
    mean = c.mean()
    if mean == 0:
        return 0.0
    n = c.size
    return float(np.abs(c[:, None] - c[None, :]).sum() / (2 * n * n * mean))


def coverage_overlap(fovs: Sequence[Sequence[int]]) -> float:
    """Share of covered cells that lie in two or more fields of view."""
    lists = [np.unique(np.asarray(f, dtype=np.int64)) for f in fovs]
    lists = [f for f in lists if f.size]
    if not lists:
        return 0.0
    _, counts = np.unique(np.concatenate(lists), return_counts=True)
    return int((counts >= 2).sum()) / counts.size


def marginal_contribution(r_full: float, r_ablated: float, direction: str = HIGHER_BETTER) -> float:
    if direction == HIGHER_BETTER:
        if r_full == 0:
            raise MetricError("MC undefined: full-team value is 0")
        return (r_full - r_ablated) / r_full
    if direction == LOWER_BETTER:
        if r_ablated == 0:
            raise MetricError("MC undefined: ablated value is 0")
        return (r_ablated - r_full) / r_ablated
    raise ValueError(f"direction must be {HIGHER_BETTER!r} or {LOWER_BETTER!r}")


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """(slope, intercept, sse) of an ordinary least-squares line."""
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0:
        raise MetricError("degenerate fit: all x values are equal")
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    return slope, intercept, float((resid**2).sum())


def sensitivity_slope(points: Sequence[tuple[float, float]]) -> LinearFit:
    """OLS line through (eps, performance) points; the slope is SS."""
    if len(points) < 2:
        raise MetricError("sensitivity slope needs at least two points")
    x = np.array([p[0] for p in points], dtype=float)
    y = np.array([p[1] for p in points], dtype=float)
    slope, intercept, sse = _ols(x, y)
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if sst == 0 else 1.0 - sse / sst
    return LinearFit(slope, intercept, r2)


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    slope: float
    intercept: float


@dataclass(frozen=True)
class SegmentedFit:
    breakpoint: float
    segments: tuple[Segment, Segment]
    sse: float


def segmented_slope(points: Sequence[tuple[float, float]], max_breakpoints: int = 1) -> SegmentedFit:
    """Best single-breakpoint two-line fit by exhaustive search.

    Both segments include the breakpoint sample. Candidates with equal SSE
    (up to rounding) are resolved toward the median x.
    """
    if max_breakpoints != 1:
        raise NotImplementedError("only a single breakpoint is supported")
    if len(points) < 4:
        raise MetricError("segmented fit needs at least four points")
    pts = sorted(points)
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    ux = np.unique(x)
    if ux.size < 3:
        raise MetricError("segmented fit needs at least three distinct x values")
    median = float(np.median(ux))
    scale = 1.0 + float(((y - y.mean()) ** 2).sum())
    best = None
    for b in ux[1:-1]:
        left, right = x <= b, x >= b
        sl, il, el = _ols(x[left], y[left])
        sr, ir, er = _ols(x[right], y[right])
        sse = el + er
        key = (sse, abs(float(b) - median), float(b))
        if best is None or sse < best[0][0] - 1e-12 * scale or (
            abs(sse - best[0][0]) <= 1e-12 * scale and key[1:] < best[0][1:]
        ):
            best = (key, float(b), sl, il, sr, ir)
    (sse, _, _), b, sl, il, sr, ir = best
    return SegmentedFit(
        breakpoint=b,
        segments=(Segment(float(x[0]), b, sl, il), Segment(b, float(x[-1]), sr, ir)),
        sse=sse,
    )


# ---------------------------------------------------------------- report

SERIES_FIELDS = (
    "pta_d_series",
    "pta_c_series",
    "rmse_series",
    "mi_series",
    "irr_series",
    "co_series",
    "csr_series",
    "gini_series",
)
SCALAR_FIELDS = (
    "k",
    "t_end",
    "horizon",
    "pta_d_final",
    "pta_c_final",
    "rmse_final",
    "mi_final",
    "nt_50",
    "nt_90",
    "throughput",
    "scout_throughput",
    "itl",
    "csr_final",
    "dsl_mean",
    "dsl_excluded_fraction",
    "gini_final",
)


@dataclass
class MetricReport:
    k: int
    t_end: int
    horizon: int
    pta_d_series: list
    pta_c_series: list
    rmse_series: list
    mi_series: list
    irr_series: list
    co_series: list
    csr_series: list
    gini_series: list
    pta_d_final: float
    pta_c_final: float
    rmse_final: float
    mi_final: float
    nt_50: float
    nt_90: float
    throughput: Optional[float]
    scout_throughput: Optional[float]
    itl: float
    csr_final: Optional[float]
    dsl_values: list = field(default_factory=list)
    dsl_mean: Optional[float] = None
    dsl_excluded_fraction: Optional[float] = None
    gini_final: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**d)

    def scalars(self) -> dict:
        return {name: getattr(self, name) for name in SCALAR_FIELDS}

    def series_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        names = [f.removesuffix("_series") for f in SERIES_FIELDS]
        w.writerow(["t", *names])
        for t in range(self.t_end + 1):
            w.writerow([t, *(_fmt(getattr(self, f)[t]) for f in SERIES_FIELDS)])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def scalars_csv(reports: Sequence[MetricReport], labels: Sequence[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", *SCALAR_FIELDS])
    for n, r in enumerate(reports):
        label = labels[n] if labels else n
        w.writerow([label, *(_fmt(v) for v in r.scalars().values())])
    return buf.getvalue()


def _finish(
    *,
    k: int,
    horizon: int,
    n_scouts: int,
    n_foragers: int,
    pta_d_s: list,
    pta_c_s: list,
    rmse_s: list,
    mi_s: list,
    co_s: list,
    csr_s: list,
    gini_s: list,
    scout_found: int,
    collected: int,
    dsl_values: list,
    n_excluded: int,
) -> MetricReport:
    t_end = len(pta_c_s) - 1
    return MetricReport(
        k=k,
        t_end=t_end,
        horizon=horizon,
        pta_d_series=pta_d_s,
        pta_c_series=pta_c_s,
        rmse_series=rmse_s,
        mi_series=mi_s,
        irr_series=irr_series(mi_s),
        co_series=co_s,
        csr_series=csr_s,
        gini_series=gini_s,
        pta_d_final=pta_d_s[-1],
        pta_c_final=pta_c_s[-1],
        rmse_final=rmse_s[-1],
        mi_final=mi_s[-1],
        nt_50=nt_x(pta_c_s, 50, horizon),
        nt_90=nt_x(pta_c_s, 90, horizon),
        throughput=throughput(collected, n_foragers, t_end) if n_foragers and t_end else None,
        scout_throughput=throughput(scout_found, n_scouts, t_end) if n_scouts and t_end else None,
        itl=itl(pta_d_s, pta_c_s, horizon),
        csr_final=csr_s[-1],
        dsl_values=dsl_values,
        dsl_mean=float(np.mean(dsl_values)) if dsl_values else None,
        dsl_excluded_fraction=n_excluded / collected if collected else None,
        gini_final=gini_s[-1],
    )


class OnlineMetrics:
    """Incremental metric computation fed by the running engine."""

    def __init__(self, m: GridMap, k: int, horizon: int, teams: Sequence[str]):
        self.map = m
        self.k = k
        self.horizon = horizon
        self.teams = list(teams)
        self.scouts = [n for n, tm in enumerate(self.teams) if tm == SCOUT]
        self.foragers = [n for n, tm in enumerate(self.teams) if tm == FORAGER]
        self.discover_t: dict[int, tuple[int, str]] = {}
        self.per_forager = {n: 0 for n in self.foragers}
        self.n_collected = 0
        self.n_coop = 0
        self.n_scout_found = 0
        self.dsl_values: list[float] = []
        self.series = {name: [] for name in ("pta_d", "pta_c", "rmse", "mi", "co", "csr", "gini")}

    def discover(self, t: int, item: int, team: str) -> None:
        self.discover_t[item] = (t, team)
        if team == SCOUT:
            self.n_scout_found += 1

    def collect(self, t: int, item: int, agent: int) -> None:
        self.n_collected += 1
        self.per_forager[agent] += 1
        found = self.discover_t.get(item)
        if found is not None and found[1] == SCOUT and found[0] <= t:
            self.n_coop += 1
            self.dsl_values.append((t - found[0]) / self.horizon)

    def step(self, truth: np.ndarray, estimate: np.ndarray, fovs: Sequence[np.ndarray], mi: float) -> None:
        s = self.series
        s["pta_d"].append(pta(self.n_scout_found, self.k))
        s["pta_c"].append(pta(self.n_collected, self.k))
        s["rmse"].append(rmse(truth, estimate, self.map))
        s["mi"].append(mi)
        s["co"].append(coverage_overlap([fovs[n] for n in self.scouts]))
        s["csr"].append(self.n_coop / self.n_collected if self.n_collected else None)
        s["gini"].append(gini([self.per_forager[n] for n in self.foragers]) if self.foragers else None)

    def finish(self) -> MetricReport:
        s = self.series
        return _finish(
            k=self.k,
            horizon=self.horizon,
            n_scouts=len(self.scouts),
            n_foragers=len(self.foragers),
            pta_d_s=s["pta_d"],
            pta_c_s=s["pta_c"],
            rmse_s=s["rmse"],
            mi_s=s["mi"],
            co_s=s["co"],
            csr_s=s["csr"],
            gini_s=s["gini"],
            scout_found=self.n_scout_found,
            collected=self.n_collected,
            dsl_values=self.dsl_values,
            n_excluded=self.n_collected - self.n_coop,
        )


# ------------------------------------------------- offline, trace-driven


def trace_map(trace: EpisodeTrace) -> GridMap:
    return load_map(trace.header["map"]["text"])


def _dense(shape, sparse) -> np.ndarray:
    a = np.zeros(shape[0] * shape[1], dtype=np.int64)
    for k, v in sparse:
        a[k] = v
    return a.reshape(shape)


def _first_discoveries(trace: EpisodeTrace) -> dict[int, tuple[int, str]]:
    out = {}
    for e in trace.of_type(DISCOVER):
        out.setdefault(e["item"], (e["t"], e["team"]))
    return out


def dsl(trace: EpisodeTrace, horizon: Optional[int] = None) -> list[float]:
    """(t_c - t_d) / T for every collected item first discovered by a scout."""
    horizon = horizon or trace.horizon
    found = _first_discoveries(trace)
    out = []
    for e in trace.of_type(COLLECT):
        d = found.get(e["item"])
        if d is not None and d[1] == SCOUT and d[0] <= e["t"]:
            out.append((e["t"] - d[0]) / horizon)
    return out


def csr(trace: EpisodeTrace) -> tuple[list[Optional[float]], Optional[float]]:
    """Per-step cooperative success ratio (None before any collection)."""
    found = _first_discoveries(trace)
    by_t: dict[int, list[int]] = {}
    for e in trace.of_type(COLLECT):
        d = found.get(e["item"])
        by_t.setdefault(e["t"], []).append(int(d is not None and d[1] == SCOUT and d[0] <= e["t"]))
    coop = total = 0
    series = []
    for t in range(trace.t_end + 1):
        for c in by_t.get(t, ()):
            coop += c
            total += 1
        series.append(coop / total if total else None)
    return series, series[-1]


def _positions_by_step(trace: EpisodeTrace) -> list[list[tuple[int, int]]]:
    pos = [tuple(a["start"]) for a in trace.header["agents"]]
    out = [list(pos)]
    moves: dict[int, list[dict]] = {}
    for e in trace.of_type(MOVE):
        moves.setdefault(e["t"], []).append(e)
    for t in range(1, trace.t_end + 1):
        for e in moves.get(t, ()):
            pos[e["agent"]] = tuple(e["to"])
        out.append(list(pos))
    return out


def idleness_series(
    trace: EpisodeTrace,
    m: Optional[GridMap] = None,
    forgetting: Optional[float] = None,
    mode: Optional[str] = None,
) -> tuple[list[float], list[Optional[float]]]:
    """Mean idleness and its reduction rate, replayed from the trace."""
    m = m or trace_map(trace)
    cfg = trace.header["config"]["idleness"]
    forgetting = cfg["forgetting"] if forgetting is None else forgetting
    mode = cfg["mode"] if mode is None else mode
    if not 0 < forgetting < 1:
        raise MetricError(f"forgetting factor must be in (0, 1), got {forgetting}")
    age = np.full(m.shape[0] * m.shape[1], np.inf)
    nav = m.navigable.ravel()
    positions = _positions_by_step(trace) if mode != OBSERVE else None
    mi = []
    for step in trace.of_type(STEP):
        reset = np.zeros_like(nav)
        if mode == OBSERVE:
            for f in step["fov"]:
                reset[f] = True
        else:
            for p in positions[step["t"]]:
                reset[m.flat(p)] = True
        age = np.where(reset & nav, 0.0, age + 1.0)
        mi.append(mean_idleness(age, nav, forgetting))
    return mi, irr_series(mi)


def report_from_trace(trace: EpisodeTrace) -> MetricReport:
    """Recompute every metric from the trace alone."""
    m = trace_map(trace)
    k, horizon = trace.k, trace.horizon
    teams = [a["team"] for a in trace.header["agents"]]
    scouts = [n for n, tm in enumerate(teams) if tm == SCOUT]
    foragers = [n for n, tm in enumerate(teams) if tm == FORAGER]

    found = _first_discoveries(trace)
    scout_found_t = sorted(t for t, team in found.values() if team == SCOUT)
    collects = list(trace.of_type(COLLECT))

    pta_d_s, pta_c_s, rmse_s, co_s, gini_s = [], [], [], [], []
    per_forager = {n: 0 for n in foragers}
    ci = di = 0
    for step in trace.of_type(STEP):
        t = step["t"]
        while di < len(scout_found_t) and scout_found_t[di] <= t:
            di += 1
        while ci < len(collects) and collects[ci]["t"] <= t:
            per_forager[collects[ci]["agent"]] += 1
            ci += 1
        pta_d_s.append(pta(di, k))
        pta_c_s.append(pta(ci, k))
        rmse_s.append(rmse(_dense(m.shape, step["truth"]), _dense(m.shape, step["estimate"]), m))
        co_s.append(coverage_overlap([step["fov"][n] for n in scouts]))
        gini_s.append(gini([per_forager[n] for n in foragers]) if foragers else None)

    mi_s, _ = idleness_series(trace, m)
    csr_s, _ = csr(trace)
    dsl_values = dsl(trace, horizon)
    return _finish(
        k=k,
        horizon=horizon,
        n_scouts=len(scouts),
        n_foragers=len(foragers),
        pta_d_s=pta_d_s,
        pta_c_s=pta_c_s,
        rmse_s=rmse_s,
        mi_s=mi_s,
        co_s=co_s,
        csr_s=csr_s,
        gini_s=gini_s,
        scout_found=len(scout_found_t),
        collected=len(collects),
        dsl_values=dsl_values,
        n_excluded=len(collects) - len(dsl_values),
    )
