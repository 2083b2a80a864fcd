"""Agent state, role-specific sensing/motion and the shared belief model."""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

from .world import DIRECTION_NAMES, DIRECTION_OFFSETS, DomainError, GridMap, NodeId

SCOUT = "scout"
FORAGER = "forager"
TEAMS = (SCOUT, FORAGER)

STAY = "STAY"
ACTIONS: tuple[str, ...] = DIRECTION_NAMES + (STAY,)

OBSERVE = "observe"
VISIT = "visit"
IDLENESS_MODES = (OBSERVE, VISIT)


@dataclass(frozen=True)
class AgentState:
    id: int
    team: str
    position: NodeId


@dataclass(frozen=True)
class TeamSpec:
    team: str
    count: int = 2
    speed: int = 1
    sensing_radius: float = 0.0

    def __post_init__(self):
        if self.team not in TEAMS:
            raise ValueError(f"unknown team {self.team!r}")
        if self.count < 0:
            raise ValueError("team count must be >= 0")
        if self.speed not in (1, 2):
            raise ValueError("speed must be 1 or 2")
        if self.sensing_radius < 0:
            raise ValueError("sensing radius must be >= 0")

    @classmethod
    def scouts(cls, count: int = 2) -> "TeamSpec":
        return cls(SCOUT, count=count, speed=2, sensing_radius=4.0)

    @classmethod
    def foragers(cls, count: int = 2) -> "TeamSpec":
        return cls(FORAGER, count=count, speed=1, sensing_radius=0.0)


@lru_cache(maxsize=None)
def fov_offsets(rho: float) -> tuple[tuple[int, int], ...]:
    """Integer offsets strictly closer than ``rho``; ``rho == 0`` is own cell."""
    if rho <= 0:
        return ((0, 0),)
    r = int(np.ceil(rho))
    return tuple(
        (di, dj)
        for di in range(-r, r + 1)
        for dj in range(-r, r + 1)
        if di * di + dj * dj < rho * rho
    )


def fov_cells(m: GridMap, position: tuple[int, int], rho: float) -> np.ndarray:
    """Flat indices of the navigable cells seen from ``position``, ascending.

    Results are memoised per map; the returned array is read-only.
    """
    key = (int(position[0]), int(position[1]), float(rho))
    cache = m._fov_cache
    cells = cache.get(key)
    if cells is None:
        i, j = key[0], key[1]
        off = np.array(fov_offsets(rho), dtype=np.int64).reshape(-1, 2)
        a = off[:, 0] + i
        b = off[:, 1] + j
        h, w = m.shape
        ok = (a >= 0) & (a < h) & (b >= 0) & (b < w)
        a, b = a[ok], b[ok]
        keep = m.navigable[a, b]
        cells = np.sort(a[keep] * w + b[keep])
        cells.flags.writeable = False
        cache[key] = cells
    return cells


def field_of_view(m: GridMap, position: tuple[int, int], rho: float) -> set[NodeId]:
    if not m.is_navigable(*position):
        raise DomainError(f"node {tuple(position)} is not navigable")
    return {m.unflat(k) for k in fov_cells(m, position, rho)}


def move_path(
    m: GridMap, position: tuple[int, int], action: str, speed: int
) -> list[NodeId]:
    """Cells entered by ``speed`` single-edge traversals along ``action``.

    Motion stops at the last valid cell when the next one is blocked or out
    of bounds, so the list may be shorter than ``speed`` (or empty).
    """
    key = (position[0], position[1], action, speed)
    cache = m._move_cache
    path = cache.get(key)
    if path is None:
        path = cache[key] = _move_path(m, position, action, speed)
    return list(path)


def _move_path(m: GridMap, position, action: str, speed: int) -> tuple[NodeId, ...]:
    if action == STAY:
        return ()
    try:
        di, dj = DIRECTION_OFFSETS[action]
    except KeyError:
        raise ValueError(f"unknown action {action!r}") from None
    i, j = position
    out = []
    for _ in range(speed):
        a, b = i + di, j + dj
        if not m.is_navigable(a, b):
            break
        i, j = a, b
        out.append(NodeId(i, j))
    return tuple(out)


def apply_move(m: GridMap, agent: AgentState, action: str, speed: int) -> NodeId:
    path = move_path(m, agent.position, action, speed)
    return path[-1] if path else NodeId(*agent.position)


@dataclass(frozen=True, eq=False)
class SharedModel:
    """Team-wide item estimate plus per-cell staleness bookkeeping.

    ``idleness_age`` is ``inf`` for cells never reset, so their idleness is
    exactly 1. Obstacle cells keep age ``inf`` and are masked out of MI.
    """

    estimate: np.ndarray
    last_seen: np.ndarray
    idleness_age: np.ndarray
    navigable: np.ndarray
    forgetting: float = 0.95
    mode: str = OBSERVE

    @classmethod
    def empty(cls, m: GridMap, forgetting: float = 0.95, mode: str = OBSERVE) -> "SharedModel":
        if not 0 < forgetting < 1:
            raise ValueError(f"forgetting factor must be in (0, 1), got {forgetting}")
        if mode not in IDLENESS_MODES:
            raise ValueError(f"unknown idleness mode {mode!r}")
        return cls(
            estimate=np.zeros(m.shape, dtype=np.int64),
            last_seen=np.full(m.shape, -1, dtype=np.int64),
            idleness_age=np.full(m.shape, np.inf),
            navigable=m.navigable,
            forgetting=forgetting,
            mode=mode,
        )

    def idleness(self) -> np.ndarray:
        """Per-cell idleness 1 - f**age (0 on obstacles)."""
        idle = 1.0 - np.power(self.forgetting, self.idleness_age)
        return np.where(self.navigable, idle, 0.0)

    def mean_idleness(self) -> float:
        return mean_idleness(self.idleness_age, self.navigable, self.forgetting)


def mean_idleness(age: np.ndarray, navigable: np.ndarray, forgetting: float) -> float:
    idle = 1.0 - np.power(forgetting, age[navigable])
    return float(idle.sum() / idle.size)


def _mask(shape, cells) -> np.ndarray:
    if isinstance(cells, np.ndarray) and cells.dtype == bool:
        return cells
    mask = np.zeros(shape, dtype=bool)
    for c in cells:
        mask[c] = True
    return mask


def update_model(
    model: SharedModel,
    truth: np.ndarray,
    visible: Iterable | np.ndarray,
    t: int,
    visited: Optional[Iterable | np.ndarray] = None,
) -> SharedModel:
    """Copy truth into visible cells and advance idleness ages.

    Ages reset on cells in ``visible`` (mode ``observe``) or in ``visited``
    (mode ``visit``; defaults to no cell) and grow by one elsewhere.
    """
    if truth.shape != model.estimate.shape:
        raise ValueError("truth and model shapes differ")
    vis = _mask(truth.shape, visible)
    if model.mode == OBSERVE:
        reset = vis
    else:
        reset = _mask(truth.shape, visited if visited is not None else [])
    estimate = np.where(vis, truth, model.estimate)
    last_seen = np.where(vis, t, model.last_seen)
    age = np.where(reset & model.navigable, 0.0, model.idleness_age + 1.0)
    return replace(model, estimate=estimate, last_seen=last_seen, idleness_age=age)
