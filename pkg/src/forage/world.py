"""Static map geometry: navigability grid, 8-connectivity and shortest paths.

Coordinate frame: row ``i`` grows southward, column ``j`` eastward. The
continuous ``x`` coordinate maps to rows and ``y`` to columns, so cell
``(i, j)`` owns the half-open area ``[i*s, (i+1)*s) x [j*s, (j+1)*s)``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

SQRT2 = math.sqrt(2.0)

# Canonical direction order. Every tie-break in the package follows it.
DIRECTIONS: tuple[tuple[str, int, int], ...] = (
    ("N", -1, 0),
    ("NE", -1, 1),
    ("E", 0, 1),
    ("SE", 1, 1),
    ("S", 1, 0),
    ("SW", 1, -1),
    ("W", 0, -1),
    ("NW", -1, -1),
)
DIRECTION_NAMES = tuple(d[0] for d in DIRECTIONS)
DIRECTION_OFFSETS = {name: (di, dj) for name, di, dj in DIRECTIONS}

# Distances closer than this are treated as equal when breaking ties.
DIST_TOL = 1e-9


class MapFormatError(ValueError):
    """Malformed ASCII map text."""


class EmptyMapError(ValueError):
    """Map without a single navigable cell."""


class DomainError(ValueError):
    """Operation requested on a node that is not navigable."""


class NodeId(NamedTuple):
    i: int
    j: int


@dataclass(frozen=True, eq=False)
class GridMap:
    navigable: np.ndarray
    cell_size: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        nav = np.asarray(self.navigable, dtype=bool)
        if nav.ndim != 2 or nav.size == 0:
            raise MapFormatError("navigable matrix must be a non-empty 2-D array")
        if not nav.any():
            raise EmptyMapError("map has no navigable cells")
        if not self.cell_size > 0:
            raise MapFormatError(f"cell_size must be positive, got {self.cell_size}")
        nav = nav.copy()
        nav.flags.writeable = False
        object.__setattr__(self, "navigable", nav)

    @property
    def height(self) -> int:
        return self.navigable.shape[0]

    @property
    def width(self) -> int:
        return self.navigable.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.navigable.shape

    @cached_property
    def n_navigable(self) -> int:
        return int(self.navigable.sum())

    @cached_property
    def navigable_nodes(self) -> list[NodeId]:
        """Navigable cells in row-major order."""
        return [NodeId(int(i), int(j)) for i, j in np.argwhere(self.navigable)]

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.height}x{self.width}@{self.cell_size!r}".encode())
        h.update(np.packbits(self.navigable).tobytes())
        return h.hexdigest()[:16]

    def in_bounds(self, i: int, j: int) -> bool:
        return 0 <= i < self.height and 0 <= j < self.width

    def is_navigable(self, i: int, j: int) -> bool:
        return self.in_bounds(i, j) and bool(self.navigable[i, j])

    def flat(self, node: tuple[int, int]) -> int:
        return node[0] * self.width + node[1]

    def unflat(self, k: int) -> NodeId:
        return NodeId(*divmod(int(k), self.width))

    def cell_center(self, node: tuple[int, int]) -> tuple[float, float]:
        s = self.cell_size
        return ((node[0] + 0.5) * s, (node[1] + 0.5) * s)

    def to_text(self) -> str:
        rows = ["".join("." if v else "#" for v in row) for row in self.navigable]
        header = [] if self.cell_size == 1.0 else [f"# cell_size={self.cell_size!r}"]
        return "\n".join(header + rows) + "\n"

    @cached_property
    def _fov_cache(self) -> dict:
        return {}

    @cached_property
    def _move_cache(self) -> dict:
        return {}

    @cached_property
    def _graph(self) -> csr_matrix:
        h, w = self.shape
        rows, cols, costs = [], [], []
        for i, j in self.navigable_nodes:
            src = i * w + j
            for n in neighbors(self, NodeId(i, j)):
                rows.append(src)
                cols.append(n.i * w + n.j)
                costs.append(1.0 if (n.i == i or n.j == j) else SQRT2)
        return csr_matrix((costs, (rows, cols)), shape=(h * w, h * w))


def load_map(text: str, name: str = "") -> GridMap:
    """Parse the ASCII map format ('.' navigable, '#' obstacle)."""
    lines = text.splitlines()
    cell_size = 1.0
    if lines and lines[0].startswith("#") and "cell_size=" in lines[0]:
        value = lines[0].split("cell_size=", 1)[1].strip()
        try:
            cell_size = float(value)
        except ValueError:
            raise MapFormatError(f"line 1: bad cell_size {value!r}") from None
        lines = lines[1:]
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise MapFormatError("map text has no grid rows")
    width = len(lines[0])
    grid = []
    for lineno, line in enumerate(lines, start=1):
        if len(line) != width:
            raise MapFormatError(
                f"ragged row {lineno}: length {len(line)}, expected {width}"
            )
        bad = set(line) - {".", "#"}
        if bad:
            raise MapFormatError(f"row {lineno}: unexpected characters {sorted(bad)}")
        grid.append([c == "." for c in line])
    return GridMap(np.array(grid, dtype=bool), cell_size=cell_size, name=name)


def load_map_file(path: str | Path) -> GridMap:
    path = Path(path)
    return load_map(path.read_text(), name=path.stem)


BUNDLED_MAPS = ("open10", "open20", "open40", "wharf62x46")


def bundled_map(name: str) -> GridMap:
    """Load one of the maps shipped with the package."""
    if name not in BUNDLED_MAPS:
        raise KeyError(f"unknown bundled map {name!r}; choose from {BUNDLED_MAPS}")
    text = resources.files("forage.maps").joinpath(f"{name}.txt").read_text()
    return load_map(text, name=name)


def open_map(height: int, width: int, cell_size: float = 1.0) -> GridMap:
    return GridMap(np.ones((height, width), dtype=bool), cell_size=cell_size)


def _require_navigable(m: GridMap, node: tuple[int, int]) -> None:
    if not m.is_navigable(node[0], node[1]):
        raise DomainError(f"node {tuple(node)} is not navigable")


def neighbors(m: GridMap, node: tuple[int, int]) -> list[NodeId]:
    """Navigable 8-neighbours of ``node`` in canonical N, NE, ..., NW order."""
    _require_navigable(m, node)
    i, j = node
    nav = m.navigable
    h, w = nav.shape
    out = []
    for _, di, dj in DIRECTIONS:
        a, b = i + di, j + dj
        if 0 <= a < h and 0 <= b < w and nav[a, b]:
            out.append(NodeId(a, b))
    return out


def node_of_point(m: GridMap, x: float, y: float) -> Optional[NodeId]:
    i = math.floor(x / m.cell_size)
    j = math.floor(y / m.cell_size)
    if not m.in_bounds(i, j):
        return None
    return NodeId(i, j)


def step_cost(a: tuple[int, int], b: tuple[int, int]) -> float:
    return 1.0 if (a[0] == b[0] or a[1] == b[1]) else SQRT2


def distance_field(m: GridMap, sources) -> np.ndarray:
    """Metric distance (1 / sqrt 2 edge costs) from the nearest of ``sources``.

    ``sources`` holds ``(i, j)`` nodes or flat indices. Returns an ``H x W``
    array; unreachable and obstacle cells are ``inf``.
    """
    if isinstance(sources, np.ndarray) and sources.ndim == 1:
        idx = sources.astype(np.int64, copy=False)
    else:
        idx = np.array(
            [s if isinstance(s, (int, np.integer)) else m.flat(s) for s in sources],
            dtype=np.int64,
        )
    if idx.size == 0:
        return np.full(m.shape, np.inf)
    # the edge list is symmetric, so the directed solver skips a conversion
    dist = dijkstra(m._graph, directed=True, indices=idx, min_only=True)
    return np.asarray(dist).reshape(m.shape)


def first_step(
    m: GridMap, start: tuple[int, int], dist: np.ndarray
) -> Optional[NodeId]:
    """Next node along a shortest path descending ``dist`` from ``start``.

    The first neighbour in canonical order that lies on some shortest path
    wins. Returns ``None`` when ``start`` is already a target (distance 0) or
    no target is reachable.
    """
    d0 = dist[start]
    if not np.isfinite(d0) or d0 <= DIST_TOL:
        return None
    for n in neighbors(m, start):
        if abs(step_cost(start, n) + dist[n] - d0) <= DIST_TOL:
            return n
    return None  # pragma: no cover - dist is a consistent field


def shortest_path(
    m: GridMap, start: tuple[int, int], goal: tuple[int, int]
) -> Optional[list[NodeId]]:
    """Minimum-cost path from ``start`` to ``goal``; ``None`` if disconnected."""
    _require_navigable(m, start)
    _require_navigable(m, goal)
    start, goal = NodeId(*start), NodeId(*goal)
    dist = distance_field(m, [goal])
    if not np.isfinite(dist[start]):
        return None
    path = [start]
    node = start
    while node != goal:
        node = first_step(m, node, dist)
        path.append(node)
    return path


def path_cost(path: list[tuple[int, int]]) -> float:
    return sum(step_cost(a, b) for a, b in zip(path, path[1:]))
