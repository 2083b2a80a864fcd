"""Static SVG charts of batch reports.

Output is a pure function of the input numbers: no timestamps, no random
ids, and every coordinate is written with two decimals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import gaussian_kde

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")

SERIES_KINDS = {
    "rmse": ("rmse", "RMSE"),
    "idleness": ("mi", "Mean idleness"),
    "csr": ("csr", "CSR"),
    "gini": ("gini", "Gini"),
    "co": ("co", "Coverage overlap"),
}
KINDS = ("pta", *SERIES_KINDS, "sweep", "violin")

PANEL_W, PANEL_H = 420, 260
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 56, 16, 28, 40


class PlotError(ValueError):
    """Report content cannot be drawn as the requested kind."""


@dataclass(frozen=True)
class Curve:
    label: str
    x: Sequence[float]
    mean: Sequence[Optional[float]]
    ci: Optional[Sequence[Optional[float]]] = None


def _f(v: float) -> str:
    return f"{v:.2f}"


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        ticks.append(round(v, 10))
        v += step
    return ticks


def _tick_label(v: float) -> str:
    if v == int(v) and abs(v) < 1e6:
        return str(int(v))
    return f"{v:.4g}"


class Panel:
    def __init__(self, x0: float, y0: float, title: str, xlabel: str, ylabel: str,
                 xlim: tuple[float, float], ylim: tuple[float, float]):
        self.x0, self.y0 = x0, y0
        self.title, self.xlabel, self.ylabel = title, xlabel, ylabel
        self.xlim, self.ylim = xlim, ylim
        self.parts: list[str] = []

    @property
    def inner(self):
        return (
            self.x0 + MARGIN_L,
            self.y0 + MARGIN_T,
            PANEL_W - MARGIN_L - MARGIN_R,
            PANEL_H - MARGIN_T - MARGIN_B,
        )

    def sx(self, x: float) -> float:
        left, _, w, _ = self.inner
        lo, hi = self.xlim
        return left + (x - lo) / (hi - lo) * w

    def sy(self, y: float) -> float:
        _, top, _, h = self.inner
        lo, hi = self.ylim
        return top + h - (y - lo) / (hi - lo) * h

    def axes(self) -> None:
        left, top, w, h = self.inner
        p = self.parts
        p.append(f'<rect x="{_f(left)}" y="{_f(top)}" width="{_f(w)}" height="{_f(h)}" fill="none" stroke="#333"/>')
        for t in nice_ticks(*self.xlim):
            x = self.sx(t)
            p.append(f'<line x1="{_f(x)}" y1="{_f(top + h)}" x2="{_f(x)}" y2="{_f(top + h + 4)}" stroke="#333"/>')
            p.append(f'<text x="{_f(x)}" y="{_f(top + h + 16)}" text-anchor="middle">{_tick_label(t)}</text>')
        for t in nice_ticks(*self.ylim):
            y = self.sy(t)
            p.append(f'<line x1="{_f(left - 4)}" y1="{_f(y)}" x2="{_f(left)}" y2="{_f(y)}" stroke="#333"/>')
            p.append(f'<line x1="{_f(left)}" y1="{_f(y)}" x2="{_f(left + w)}" y2="{_f(y)}" stroke="#eee"/>')
            p.append(f'<text x="{_f(left - 6)}" y="{_f(y + 4)}" text-anchor="end">{_tick_label(t)}</text>')
        p.append(f'<text x="{_f(left + w / 2)}" y="{_f(self.y0 + 18)}" text-anchor="middle" font-weight="bold">{escape(self.title)}</text>')
        p.append(f'<text x="{_f(left + w / 2)}" y="{_f(top + h + 32)}" text-anchor="middle">{escape(self.xlabel)}</text>')
        cx, cy = self.x0 + 14, top + h / 2
        p.append(f'<text x="{_f(cx)}" y="{_f(cy)}" text-anchor="middle" transform="rotate(-90 {_f(cx)} {_f(cy)})">{escape(self.ylabel)}</text>')

    def curve(self, c: Curve, color: str) -> None:
        pts = list(zip(c.x, c.mean, c.ci if c.ci is not None else [None] * len(c.x)))
        # shaded band over runs where both mean and CI are known
        for run in _runs([(x, m, e) for x, m, e in pts if m is not None and e is not None]):
            upper = [(self.sx(x), self.sy(m + e)) for x, m, e in run]
            lower = [(self.sx(x), self.sy(m - e)) for x, m, e in reversed(run)]
            poly = " ".join(f"{_f(a)},{_f(b)}" for a, b in upper + lower)
            self.parts.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        for run in _runs([(x, m, None) for x, m, _ in pts if m is not None], pts):
            line = " ".join(f"{_f(self.sx(x))},{_f(self.sy(m))}" for x, m, _ in run)
            self.parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.5"/>')

    def line(self, x1, y1, x2, y2, color: str, dash: bool = False) -> None:
        extra = ' stroke-dasharray="4 3"' if dash else ""
        self.parts.append(
            f'<line x1="{_f(self.sx(x1))}" y1="{_f(self.sy(y1))}" x2="{_f(self.sx(x2))}"'
            f' y2="{_f(self.sy(y2))}" stroke="{color}"{extra}/>'
        )

    def legend(self, labels: Sequence[str]) -> None:
        left, top, w, _ = self.inner
        for n, label in enumerate(labels):
            y = top + 12 + 14 * n
            x = left + w - 110
            color = PALETTE[n % len(PALETTE)]
            self.parts.append(f'<rect x="{_f(x)}" y="{_f(y - 8)}" width="10" height="10" fill="{color}"/>')
            self.parts.append(f'<text x="{_f(x + 14)}" y="{_f(y + 1)}">{escape(label)}</text>')


def _runs(points, full=None):
    """Split points into runs of consecutive x (gaps come from missing values)."""
    if not points:
        return []
    if full is None:
        return [points]
    present = {p[0] for p in points}
    runs, cur = [], []
    for x, m, _ in full:
        if x in present and m is not None:
            cur.append((x, m, None))
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def _limits(curves: Sequence[Curve], y_floor: Optional[float] = None, y_ceil: Optional[float] = None):
    xs = [x for c in curves for x in c.x]
    ys = []
    for c in curves:
        ci = c.ci if c.ci is not None else [None] * len(c.mean)
        for m, e in zip(c.mean, ci):
            if m is None:
                continue
            e = e or 0.0
            ys.extend((m - e, m + e))
    if not xs or not ys:
        raise PlotError("nothing to plot: the series are empty")
    ylo = min(ys) if y_floor is None else y_floor
    yhi = max(ys) if y_ceil is None else y_ceil
    if yhi - ylo < 1e-12:
        ylo, yhi = ylo - 0.5, yhi + 0.5
    xlo, xhi = min(xs), max(xs)
    if xhi == xlo:
        xhi = xlo + 1
    return (xlo, xhi), (ylo, yhi)


def _document(panels: Sequence[Panel], width: float, height: float) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(width)}" height="{_f(height)}"'
        f' viewBox="0 0 {_f(width)} {_f(height)}" font-family="sans-serif" font-size="11">'
    )
    body = [f'<rect width="{_f(width)}" height="{_f(height)}" fill="white"/>']
    for p in panels:
        body.extend(p.parts)
    return "\n".join([head, *body, "</svg>"]) + "\n"


def series_chart(panels_spec: Sequence[tuple[str, str, Sequence[Curve]]], xlabel: str = "t") -> str:
    """Side-by-side panels; each is (title, ylabel, curves)."""
    panels = []
    for n, (title, ylabel, curves) in enumerate(panels_spec):
        xlim, ylim = _limits(curves)
        p = Panel(n * PANEL_W, 0, title, xlabel, ylabel, xlim, ylim)
        p.axes()
        for k, c in enumerate(curves):
            p.curve(c, PALETTE[k % len(PALETTE)])
        p.legend([c.label for c in curves])
        panels.append(p)
    return _document(panels, PANEL_W * len(panels), PANEL_H)


def sweep_chart(curves: Sequence[Curve], fits: Sequence[tuple[float, float]], ylabel: str, title: str) -> str:
    """Degradation curves with their OLS lines (slope, intercept) dashed."""
    xlim, ylim = _limits(curves)
    p = Panel(0, 0, title, "epsilon", ylabel, xlim, ylim)
    p.axes()
    for k, (c, (slope, intercept)) in enumerate(zip(curves, fits)):
        color = PALETTE[k % len(PALETTE)]
        p.curve(c, color)
        p.line(xlim[0], intercept + slope * xlim[0], xlim[1], intercept + slope * xlim[1], color, dash=True)
    p.legend([c.label for c in curves])
    return _document([p], PANEL_W, PANEL_H)


def _violin(p: Panel, center: float, values: Sequence[float], color: str, half_width: float = 0.35) -> None:
    v = np.asarray(values, dtype=float)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    lo, hi = float(v.min()), float(v.max())
    if hi > lo and v.size > 1 and np.std(v) > 0:
        grid = np.linspace(lo, hi, 64)
        dens = gaussian_kde(v)(grid)
        dens = dens / dens.max() * half_width
        right = [(p.sx(center + d), p.sy(y)) for y, d in zip(grid, dens)]
        left = [(p.sx(center - d), p.sy(y)) for y, d in zip(grid[::-1], dens[::-1])]
        poly = " ".join(f"{_f(a)},{_f(b)}" for a, b in right + left)
        p.parts.append(f'<polygon points="{poly}" fill="{color}" fill-opacity="0.3" stroke="{color}"/>')
    box = half_width / 4
    x0, x1 = p.sx(center - box), p.sx(center + box)
    p.parts.append(
        f'<rect x="{_f(x0)}" y="{_f(p.sy(q3))}" width="{_f(x1 - x0)}"'
        f' height="{_f(p.sy(q1) - p.sy(q3))}" fill="white" stroke="#333"/>'
    )
    p.parts.append(f'<line x1="{_f(x0)}" y1="{_f(p.sy(med))}" x2="{_f(x1)}" y2="{_f(p.sy(med))}" stroke="#333" stroke-width="2"/>')
    p.line(center, lo, center, q1, "#333")
    p.line(center, q3, center, hi, "#333")


def violin_chart(groups: Sequence[tuple[str, dict[str, Sequence[float]]]]) -> str:
    """One panel per distribution name; one violin per labelled group.

    ``groups`` is ``[(label, {"dsl": [...], "itl": [...]}), ...]``.
    """
    names = sorted({k for _, d in groups for k in d})
    panels = []
    for n, name in enumerate(names):
        values = [(label, [x for x in d.get(name, []) if x is not None]) for label, d in groups]
        if not any(vs for _, vs in values):
            raise PlotError(f"no {name} values to plot")
        ys = [x for _, vs in values for x in vs]
        lo, hi = min(ys), max(ys)
        if hi - lo < 1e-12:
            lo, hi = lo - 0.5, hi + 0.5
        p = Panel(n * PANEL_W, 0, name.upper(), "", name.upper(), (0.5, len(values) + 0.5), (lo, hi))
        p.axes()
        for k, (label, vs) in enumerate(values):
            if vs:
                _violin(p, k + 1, vs, PALETTE[k % len(PALETTE)])
        p.legend([label for label, _ in values])
        panels.append(p)
    return _document(panels, PANEL_W * len(panels), PANEL_H)
