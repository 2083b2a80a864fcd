"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

import itertools
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from forage.agents import FORAGER, SCOUT, TeamSpec, fov_cells, fov_offsets
from forage.cli import main as cli_main
from forage.engine import EpisodeConfig, run_episode, run_episode_with_metrics
from forage.experiments import COMPLETE, BatchSpec, SweepSpec, default_grid, epsilon_sweep, mc_table, run_batch
from forage.metrics import (
    coverage_overlap,
    gaussian_kernel,
    gini,
    report_from_trace,
    rmse,
    segmented_slope,
    sensitivity_slope,
)
from forage.trace import COLLECT, DISCOVER, MOVE
from forage.world import bundled_map, load_map, neighbors, open_map, path_cost, shortest_path

RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    if __name__ == "__main__":
        print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


def result_lines() -> list[str]:
    return [f"{'PASS' if ok else 'FAIL'} criterion {n}: {d}" for n, (ok, d) in sorted(RESULTS.items())]


def rel_err(got, want):
    return abs(got - want) / abs(want) if want else abs(got)


# ---------------------------------------------------------------- 1


TABLE_RMSE = {  # batch means: complete, one scout removed, one forager removed
    "drl": {COMPLETE: 0.0010, "1S-2F": 0.0077, "2S-1F": 0.0017},
    "greedy": {COMPLETE: 0.0017, "1S-2F": 0.0130, "2S-1F": 0.0029},
    "levy": {COMPLETE: 0.0165, "1S-2F": 0.0223, "2S-1F": 0.0202},
}
EXPECTED_MC = [0.8701, 0.4118, 0.8692, 0.4138, 0.2601, 0.1832]


def criterion_1():
    got = []
    for name, rows in TABLE_RMSE.items():
        values = {setup: {"pta_d": 1.0, "pta_c": 1.0, "rmse": v} for setup, v in rows.items()}
        mc = mc_table(values)
        got += [mc["1S-2F"]["rmse"], mc["2S-1F"]["rmse"]]
    worst = max(abs(g - e) for g, e in zip(got, EXPECTED_MC))
    ok = worst <= 0.0005
    return ok, f"RMSE MC {[round(g, 4) for g in got]}, max |err| {worst:.2e} (tol 5e-4)"


# ---------------------------------------------------------------- 2


def _scenario(tmp: Path, **extra) -> str:
    doc = {"map": "open20", "horizon": 150, "seed": 2024, "episodes": 10,
           "teams": {"scouts": {"count": 2}, "foragers": {"count": 2}}}
    doc.update(extra)
    p = tmp / "scenario.json"
    p.write_text(json.dumps(doc))
    return str(p)


def _files(d: Path) -> dict:
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def criterion_2():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sc = _scenario(tmp)
        t0 = time.perf_counter()
        codes = [cli_main(["run", sc, "--out", str(tmp / o), "--jobs", "1"]) for o in ("a", "b")]
        elapsed = time.perf_counter() - t0
        a, b = _files(tmp / "a"), _files(tmp / "b")
    traces = sum(k.endswith(".trace.jsonl") for k in a)
    ok = codes == [0, 0] and a == b and traces == 10 and elapsed < 5.0
    return ok, f"{len(a)} files ({traces} traces) identical={a == b}, two runs in {elapsed:.2f} s (limit 5 s)"


# ---------------------------------------------------------------- 3


def _naive_conv(a, k):
    h, w = a.shape
    r = k.shape[0] // 2
    out = np.zeros((h, w))
    for i, j in itertools.product(range(h), range(w)):
        for di, dj in itertools.product(range(-r, r + 1), repeat=2):
            if 0 <= i - di < h and 0 <= j - dj < w:
                out[i, j] += k[di + r, dj + r] * a[i - di, j - dj]
    return out


def _simple_paths(m, start, goal):
    out = []

    def walk(node, seen, path):
        if node == goal:
            out.append(list(path))
            return
        for n in neighbors(m, node):
            if n not in seen:
                seen.add(n)
                path.append(n)
                walk(n, seen, path)
                path.pop()
                seen.remove(n)

    walk(start, {start}, [start])
    return out


def criterion_3():
    errs = {}
    rng = np.random.default_rng(7)

    # Gini against the double sum
    worst = 0.0
    for _ in range(200):
        c = rng.integers(0, 50, size=int(rng.integers(1, 9))).tolist()
        mean = sum(c) / len(c)
        ref = 0.0 if mean == 0 else sum(abs(x - y) for x in c for y in c) / (2 * len(c) ** 2 * mean)
        worst = max(worst, abs(gini(c) - ref) / max(ref, 1e-300) if ref else abs(gini(c)))
    errs["gini"] = (worst, 1e-9)

    # CO against explicit per-cell counts
    m = open_map(12, 12)
    worst = 0.0
    for _ in range(100):
        pos = [tuple(int(v) for v in rng.integers(0, 12, 2)) for _ in range(int(rng.integers(1, 5)))]
        fovs = [fov_cells(m, p, 4.0) for p in pos]
        counts = {}
        for f in fovs:
            for cell in f.tolist():
                counts[cell] = counts.get(cell, 0) + 1
        ref = 0.0 if len(fovs) < 2 else sum(v >= 2 for v in counts.values()) / len(counts)
        worst = max(worst, rel_err(coverage_overlap(fovs), ref))
    errs["co"] = (worst, 1e-9)

    # RMSE against a dense convolution
    worst = 0.0
    k = gaussian_kernel(1.0, 3)
    for _ in range(4):
        nav = rng.random((11, 13)) > 0.2
        mm = load_map("\n".join("".join("." if v else "#" for v in row) for row in nav))
        y, yh = rng.integers(0, 4, mm.shape), rng.integers(0, 4, mm.shape)
        d = _naive_conv(y.astype(float), k) - _naive_conv(yh.astype(float), k)
        ref = math.sqrt(float((d[mm.navigable] ** 2).mean()))
        worst = max(worst, rel_err(rmse(y, yh, mm), ref))
    errs["rmse"] = (worst, 1e-6)

    # FOV against offset enumeration (strict disc, navigable cells only)
    mm = load_map("........\n.##.....\n........\n...#....\n........\n........\n")
    bad = 0
    for rho in (0.0, 1.0, 1.5, 2.0, 4.0):
        offs = set(fov_offsets(rho))
        for p in mm.navigable_nodes:
            ref = sorted(
                (p[0] + di) * mm.width + (p[1] + dj)
                for di in range(-5, 6) for dj in range(-5, 6)
                if (di, dj) in offs and mm.in_bounds(p[0] + di, p[1] + dj) and mm.is_navigable(p[0] + di, p[1] + dj)
            )
            bad += fov_cells(mm, p, rho).tolist() != ref
    errs["fov"] = (float(bad), 0.0)
    n45 = len(fov_offsets(4.0))

    # Dijkstra against simple-path enumeration
    worst = 0.0
    mm = load_map("...#\n.#..\n....\n")
    for a, b in itertools.product(mm.navigable_nodes, repeat=2):
        best = min(path_cost(p) for p in _simple_paths(mm, a, b))
        worst = max(worst, rel_err(path_cost(shortest_path(mm, a, b)), best) if best else path_cost(shortest_path(mm, a, b)))
    errs["dijkstra"] = (worst, 1e-9)

    # OLS exact-line recovery
    xs = default_grid()
    fit = sensitivity_slope([(x, -40 * x + 99) for x in xs])
    errs["ols"] = (max(rel_err(fit.slope, -40), rel_err(fit.intercept, 99)), 1e-9)

    ok = all(e <= tol for e, tol in errs.values()) and n45 == 45
    parts = ", ".join(f"{k} {e:.1e}" for k, (e, _) in errs.items())
    return ok, f"relative errors: {parts}; rho=4 disc has {n45} cells"


# ---------------------------------------------------------------- 4


def criterion_4():
    m = bundled_map("open20")
    algs = [("greedy", "greedy"), ("levy", "levy"), ("greedy", "levy"), ("random", "greedy"), ("levy", "random")]
    failures = []
    for n in range(50):
        s, f = algs[n % len(algs)]
        config = EpisodeConfig(
            m, TeamSpec.scouts(1 + n % 3), TeamSpec.foragers(n % 4), horizon=150, seed=1000 + n,
            policies={SCOUT: s, FORAGER: f}, corruption={SCOUT: (n % 5) / 10},
        )
        tr, rep = run_episode_with_metrics(config)
        if any(st["alive"] + st["collected"] != tr.k for st in tr.steps):
            failures.append((n, "conservation"))
        for series in (rep.pta_d_series, rep.pta_c_series):
            if any(b < a for a, b in zip(series, series[1:])) or not all(0 <= v <= 100 for v in series):
                failures.append((n, "pta"))
        for name in ("mi_series", "co_series", "csr_series"):
            if not all(0 <= v <= 1 for v in getattr(rep, name) if v is not None):
                failures.append((n, name))
        disc = {e["item"]: e["t"] for e in tr.of_type(DISCOVER)}
        if any(e["item"] not in disc or disc[e["item"]] > e["t"] for e in tr.of_type(COLLECT)):
            failures.append((n, "order"))
    return not failures, f"50 episodes, violations: {failures or 'none'}"


# ---------------------------------------------------------------- 5


def criterion_5():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        sc = _scenario(tmp, episodes=20, algorithms={"mixed": {"scout": "levy", "forager": "greedy"}})
        cli_main(["run", sc, "--out", str(tmp / "r"), "--jobs", "1"])
        traces = sorted((tmp / "r" / "mixed").glob("*.trace.jsonl"))
        cli_main(["metrics", "--trace", *map(str, traces), "--out", str(tmp / "m")])
        same = 0
        for t in traces:
            name = t.name.replace(".trace.jsonl", ".report.json")
            same += (tmp / "m" / name).read_bytes() == (tmp / "r" / "mixed" / name).read_bytes()
    # and in memory, field by field
    m = bundled_map("open20")
    exact = sum(
        report_from_trace(tr) == rep
        for tr, rep in (
            run_episode_with_metrics(EpisodeConfig(m, horizon=150, seed=s)) for s in range(20)
        )
    )
    ok = len(traces) == 20 and same == 20 and exact == 20
    return ok, f"report files identical {same}/{len(traces)}, in-memory reports equal {exact}/20"


# ---------------------------------------------------------------- 6


def criterion_6():
    base = EpisodeConfig(bundled_map("open40"), TeamSpec.scouts(2), TeamSpec.foragers(2), horizon=150)
    spec = BatchSpec(base, n=100, master_seed=0, algorithms={
        "greedy": {SCOUT: "greedy", FORAGER: "greedy"}, "levy": {SCOUT: "levy", FORAGER: "levy"}})
    t0 = time.perf_counter()
    res = run_batch(spec, jobs=1)
    elapsed = time.perf_counter() - t0
    g, lv = res["greedy"].aggregate, res["levy"].aggregate
    gap = g.mean("pta_c_final") - lv.mean("pta_c_final")
    csr_g, csr_l = g.mean("csr_final"), lv.mean("csr_final")
    co = g.series["co"]["mean"]
    co0, co_min = co[0], min(co[: 31])
    ok = gap >= 10 and csr_g > csr_l and co0 >= 0.5 and co_min < 0.2 and elapsed < 60
    return ok, (
        f"PTA_C greedy {g.mean('pta_c_final'):.1f} vs levy {lv.mean('pta_c_final'):.1f} (gap {gap:.1f}),"
        f" CSR {csr_g:.3f} vs {csr_l:.3f}, CO(0) {co0:.2f}, min CO t<=30 {co_min:.3f}, {elapsed:.1f} s"
    )


# ---------------------------------------------------------------- 7


def criterion_7():
    m = bundled_map("open40")
    base = EpisodeConfig(m, TeamSpec.scouts(2), TeamSpec.foragers(2), horizon=150)
    t0 = time.perf_counter()
    r = epsilon_sweep(SweepSpec(BatchSpec(base, n=20), "scouts", metric="pta_c_final"))["greedy"]
    elapsed = time.perf_counter() - t0
    drop = r.mean[0] - r.mean[-1]
    identical = all(
        run_episode(EpisodeConfig(m, horizon=150, seed=s)).to_text()
        == run_episode(EpisodeConfig(m, horizon=150, seed=s, corruption={SCOUT: 0.0, FORAGER: 0.0})).to_text()
        for s in range(5)
    )
    ok = len(r.eps) == 21 and r.ss < 0 and drop >= 20 and identical and elapsed < 600
    return ok, (
        f"SS {r.ss:.2f}, PTA_C eps=0 {r.mean[0]:.1f} eps=1 {r.mean[-1]:.1f} (drop {drop:.1f}),"
        f" eps=0 traces identical={identical}, {elapsed:.0f} s for 21 x 20 episodes"
    )


# ---------------------------------------------------------------- 8


def clean_scout_share(trace, report):
    """100 x share of scout decisions left untouched: 100 (1 - eps) by design."""
    scouts = {a["id"] for a in trace.agents(SCOUT)}
    moves = [e for e in trace.of_type(MOVE) if e["agent"] in scouts]
    return 100.0 * sum(not e.get("corrupted", False) for e in moves) / len(moves)


def criterion_8():
    # no foragers: nothing is ever cleared, so every episode runs the full horizon
    base = EpisodeConfig(bundled_map("open20"), TeamSpec.scouts(2), TeamSpec.foragers(0), horizon=150)
    r = epsilon_sweep(SweepSpec(BatchSpec(base, n=20), "scouts"), evaluate=clean_scout_share)["greedy"]
    ss_ok = abs(r.ss + 100) <= 1.0

    grid = default_grid()
    rng = np.random.default_rng(11)
    misses = []
    for bp in grid[3:-3]:
        low, high = rng.uniform(-15, 0), rng.uniform(-150, -60)
        pts = [(x, 95 + low * min(x, bp) + high * max(x - bp, 0) + rng.normal(0, 0.3)) for x in grid]
        fit = segmented_slope(pts)
        if abs(fit.breakpoint - bp) > 0.05 + 1e-9:
            misses.append((bp, fit.breakpoint))
    ok = ss_ok and not misses
    return ok, f"SS {r.ss:.3f} (target -100 +/- 1), breakpoint misses {misses or 'none'} over {len(grid[3:-3])} cases"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8]


@pytest.mark.parametrize("n", range(1, 9))
def test_criterion(n):
    ok, detail = CRITERIA[n - 1]()
    record(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    for n, check in enumerate(CRITERIA, start=1):
        record(n, *check())
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
