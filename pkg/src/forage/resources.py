"""Drifting item field: spawn, wind/noise drift, discretisation, collection."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .world import GridMap

MAX_SPAWN_DRAWS = 10_000


class SpawnError(RuntimeError):
    """Rejection sampling could not place an item on navigable area."""


class Item(NamedTuple):
    id: int
    x: float
    y: float
    alive: bool


@dataclass(frozen=True)
class DriftParams:
    w_wind: float = 1.0
    w_rand: float = 1.0
    dt: float = 1.0
    wind_max: float = 0.05
    rand_max: float = 0.05

    def __post_init__(self):
        if self.wind_max < 0 or self.rand_max < 0 or self.dt < 0:
            raise ValueError("drift bounds and dt must be >= 0")


@dataclass(frozen=True)
class SpawnParams:
    k_mean: float = 100.0
    k_std: float = 15.0
    k_min: int = 10
    k_max: int = 200
    spread_std: float = 3.0

    def __post_init__(self):
        if self.k_min < 1:
            raise ValueError("k_min must be >= 1")
        if self.k_max < self.k_min:
            raise ValueError("k_max must be >= k_min")
        if self.k_std < 0:
            raise ValueError("k_std must be >= 0")
        if self.spread_std < 0:
            raise ValueError("spread_std must be >= 0")


@dataclass(frozen=True, eq=False)
class ItemField:
    """Item positions are stored column-wise; ``ids`` are array indices."""

    xs: np.ndarray
    ys: np.ndarray
    alive: np.ndarray
    wind: tuple[float, float]
    params: DriftParams
    hotspot: tuple[int, int] = (-1, -1)

    @property
    def k(self) -> int:
        return len(self.xs)

    @property
    def alive_count(self) -> int:
        return int(self.alive.sum())

    @property
    def items(self) -> list[Item]:
        return [
            Item(k, float(x), float(y), bool(a))
            for k, (x, y, a) in enumerate(zip(self.xs, self.ys, self.alive))
        ]

    def cells(self, m: GridMap) -> tuple[np.ndarray, np.ndarray]:
        """Row/column index of every item (alive or not)."""
        s = m.cell_size
        return (
            np.floor(self.xs / s).astype(np.int64),
            np.floor(self.ys / s).astype(np.int64),
        )


def _inside_navigable(m: GridMap, x, y):
    s = m.cell_size
    i = np.floor(np.asarray(x) / s).astype(np.int64)
    j = np.floor(np.asarray(y) / s).astype(np.int64)
    h, w = m.shape
    ok = (i >= 0) & (i < h) & (j >= 0) & (j < w)
    out = np.zeros(np.shape(ok), dtype=bool)
    out[ok] = m.navigable[i[ok], j[ok]]
    return out


def draw_item_count(spawn: SpawnParams, rng: np.random.Generator) -> int:
    k = round(rng.normal(spawn.k_mean, spawn.k_std))
    return int(min(max(k, spawn.k_min), spawn.k_max))


def spawn_items(
    m: GridMap,
    spawn: SpawnParams,
    rng: np.random.Generator,
    drift: DriftParams = DriftParams(),
    wind_rng: np.random.Generator | None = None,
) -> ItemField:
    """Draw K, a hotspot node and K items scattered normally around it.

    ``wind_rng`` defaults to ``rng``; the engine passes a dedicated stream.
    """
    k = draw_item_count(spawn, rng)
    nodes = m.navigable_nodes
    hotspot = nodes[int(rng.integers(len(nodes)))]
    cx, cy = m.cell_center(hotspot)
    sd = spawn.spread_std * m.cell_size
    xs = np.empty(k)
    ys = np.empty(k)
    for n in range(k):
        for _ in range(MAX_SPAWN_DRAWS):
            x, y = rng.normal((cx, cy), sd)
            if _inside_navigable(m, x, y):
                xs[n], ys[n] = x, y
                break
        else:
            raise SpawnError(
                f"item {n}: no navigable position after {MAX_SPAWN_DRAWS} draws"
            )
    wr = rng if wind_rng is None else wind_rng
    bound = drift.wind_max * m.cell_size
    wind = tuple(float(v) for v in wr.uniform(-bound, bound, size=2))
    return ItemField(
        xs=xs,
        ys=ys,
        alive=np.ones(k, dtype=bool),
        wind=wind,
        params=drift,
        hotspot=tuple(hotspot),
    )


def step_items(field: ItemField, m: GridMap, rng: np.random.Generator) -> ItemField:
    """Advance alive items by dt * (w_wind * wind + w_rand * noise).

    Noise is drawn for every item, dead ones included, so the noise stream
    stays aligned across runs that collect different items. A displacement
    that would leave navigable area is dropped for that item and step.
    """
    p = field.params
    bound = p.rand_max * m.cell_size
    noise = rng.uniform(-bound, bound, size=(field.k, 2))
    dx = p.dt * (p.w_wind * field.wind[0] + p.w_rand * noise[:, 0])
    dy = p.dt * (p.w_wind * field.wind[1] + p.w_rand * noise[:, 1])
    nx = field.xs + dx
    ny = field.ys + dy
    move = field.alive & _inside_navigable(m, nx, ny)
    return replace(
        field,
        xs=np.where(move, nx, field.xs),
        ys=np.where(move, ny, field.ys),
    )


def discretize(field: ItemField, m: GridMap) -> np.ndarray:
    """Ground-truth count matrix Y of alive items per cell."""
    y = np.zeros(m.shape, dtype=np.int64)
    ii, jj = field.cells(m)
    a = field.alive
    np.add.at(y, (ii[a], jj[a]), 1)
    return y


def collect_at(
    field: ItemField, m: GridMap, node: tuple[int, int]
) -> tuple[ItemField, int, list[int]]:
    """Remove every alive item inside ``node``'s area (unlimited capacity)."""
    ii, jj = field.cells(m)
    hit = field.alive & (ii == node[0]) & (jj == node[1])
    ids = [int(k) for k in np.flatnonzero(hit)]
    if not ids:
        return field, 0, []
    return replace(field, alive=field.alive & ~hit), len(ids), ids


def item_digest(field: ItemField) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(field.xs, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(field.ys, dtype="<f8").tobytes())
    return h.hexdigest()[:16]
