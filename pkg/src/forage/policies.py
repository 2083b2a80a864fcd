"""Decision layer: baselines, the epsilon-corruption wrapper and a factory.

Every policy exposes ``act(obs) -> action`` where ``action`` is one of
:data:`forage.agents.ACTIONS`. Policies only see the :class:`Observation`,
never the ground-truth item matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np

from .agents import ACTIONS, FORAGER, SCOUT, STAY, AgentState, SharedModel, fov_cells, move_path
from .world import DIRECTION_NAMES, DIRECTIONS, DIST_TOL, GridMap, distance_field, first_step

POLICY_NAMES = ("greedy", "levy", "random")

_DIRECTION_OF = {(di, dj): name for name, di, dj in DIRECTIONS}
SCORE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Observation:
    self: AgentState
    teammates: tuple[AgentState, ...]
    model: SharedModel
    map: GridMap
    t: int
    horizon: int
    speed: int
    sensing_radius: float
    visible: np.ndarray  # union of all agents' current fields of view


class Policy(Protocol):
    def act(self, obs: Observation) -> str: ...


def direction_to(a: tuple[int, int], b: tuple[int, int]) -> str:
    return _DIRECTION_OF[(b[0] - a[0], b[1] - a[1])]


def _pick(scores: Sequence[float], order: Sequence[str]) -> str:
    best = max(scores)
    if best <= SCORE_TOL:
        return STAY
    for s, a in zip(scores, order):
        if s >= best - SCORE_TOL:
            return a
    raise AssertionError("unreachable")


def _destination(obs: Observation, action: str):
    path = move_path(obs.map, obs.self.position, action, obs.speed)
    return path[-1] if path else obs.self.position


_field_cache: dict = {}
_FIELD_CACHE_SIZE = 8


def _known_distance(obs: Observation, known: np.ndarray) -> np.ndarray:
    # the known set rarely changes between steps, so recent fields are reused
    key = (obs.map, known.shape, np.packbits(known).tobytes())
    dist = _field_cache.get(key)
    if dist is None:
        if len(_field_cache) >= _FIELD_CACHE_SIZE:
            del _field_cache[next(iter(_field_cache))]
        dist = _field_cache[key] = distance_field(obs.map, np.flatnonzero(known.ravel()))
    return dist


def toward_nearest_known(obs: Observation) -> Optional[str]:
    """First move along a shortest path to the closest cell with estimate > 0.

    ``STAY`` when already standing on one; ``None`` when nothing is known
    (or reachable).
    """
    known = obs.model.estimate > 0
    if not known.any():
        return None
    pos = obs.self.position
    if known[pos]:
        return STAY
    dist = _known_distance(obs, known)
    nxt = first_step(obs.map, pos, dist)
    if nxt is None:
        return None
    return direction_to(pos, nxt)


class GreedyForager:
    """Moves onto the reachable cell with the largest estimated count.

    With ``coordinate`` on, foragers decide in id order: each one predicts
    the target of every lower-id forager (the cell it steps onto, or the
    known cell it heads for) and leaves it out. When that leaves no known
    cell the plain rule applies. Without this, co-located foragers would
    move as one for the whole episode.
    """

    def __init__(self, coordinate: bool = True):
        self.coordinate = coordinate

    @staticmethod
    def _plan(obs: Observation, position, known: np.ndarray, want_target: bool = False):
        est = obs.model.estimate
        dests = []
        for a in ACTIONS:
            path = move_path(obs.map, position, a, obs.speed)
            dests.append(path[-1] if path else position)
        scores = [float(est[d]) if known[d] else 0.0 for d in dests]
        choice = _pick(scores, ACTIONS)
        if choice != STAY:
            return choice, dests[ACTIONS.index(choice)]
        if not known.any():
            return None, None
        if known[position]:
            return STAY, position
        dist = _known_distance(obs, known)
        nxt = first_step(obs.map, position, dist)
        if nxt is None:
            return None, None
        target = None
        if want_target:
            target = nxt
            while dist[target] > DIST_TOL:
                target = first_step(obs.map, target, dist)
        return direction_to(position, nxt), target

    def act(self, obs: Observation) -> str:
        known = obs.model.estimate > 0
        if self.coordinate and known.any():
            free = known.copy()
            for mate in obs.teammates:
                if mate.team != obs.self.team or mate.id >= obs.self.id:
                    continue
                _, target = self._plan(obs, mate.position, free, want_target=True)
                if target is not None:
                    free[target] = False
            if free.any():
                action, _ = self._plan(obs, obs.self.position, free)
                if action is not None:
                    return action
        action, _ = self._plan(obs, obs.self.position, known)
        return action or STAY


class GreedyScout:
    """Maximises idleness + estimate over cells newly brought into view.

    Scouts decide in id order: each one first predicts the greedy choice of
    every lower-id scout teammate (same rule, same snapshot) and does not
    count the cells those choices will reveal. Without this, co-located
    scouts with identical observations would move as one forever.
    """

    def __init__(self, coordinate: bool = True):
        self.coordinate = coordinate

    @staticmethod
    def _choose(obs: Observation, position, value: np.ndarray, claimed: np.ndarray):
        best, best_cells, choice = SCORE_TOL, None, STAY
        for a in ACTIONS:
            path = move_path(obs.map, position, a, obs.speed)
            dest = path[-1] if path else position
            cells = fov_cells(obs.map, dest, obs.sensing_radius)
            new = cells[~claimed[cells]]
            score = float(value[new].sum())
            if score > best + SCORE_TOL:
                best, best_cells, choice = score, new, a
        return choice, best_cells

    def scores(self, obs: Observation) -> list[float]:
        """Score of each action in canonical order, after teammates' claims."""
        value, claimed = self._claims(obs)
        out = []
        for a in ACTIONS:
            dest = _destination(obs, a)
            cells = fov_cells(obs.map, dest, obs.sensing_radius)
            out.append(float(value[cells[~claimed[cells]]].sum()))
        return out

    def _claims(self, obs: Observation):
        value = (obs.model.idleness() + obs.model.estimate).ravel()
        claimed = obs.visible.ravel().copy()
        if self.coordinate:
            for mate in obs.teammates:
                if mate.team != obs.self.team or mate.id >= obs.self.id:
                    continue
                _, cells = self._choose(obs, mate.position, value, claimed)
                if cells is not None:
                    claimed[cells] = True
        return value, claimed

    def act(self, obs: Observation) -> str:
        value, claimed = self._claims(obs)
        return self._choose(obs, obs.self.position, value, claimed)[0]


def levy_step_lengths(rng: np.random.Generator, n: int, alpha: float = 1.5, cap: float = 20.0):
    """Pareto(alpha, scale 1) step lengths capped at ``cap`` (inverse CDF)."""
    u = rng.random(n)
    return np.minimum((1.0 - u) ** (-1.0 / alpha), cap)


class LevyWalk:
    """Straight runs of Pareto-distributed length along random headings."""

    def __init__(
        self,
        rng: np.random.Generator,
        alpha: float = 1.5,
        cap: float = 20.0,
        max_redraws: int = 16,
    ):
        self.rng = rng
        self.alpha = alpha
        self.cap = cap
        self.max_redraws = max_redraws
        self.heading: Optional[str] = None
        self.steps_remaining = 0

    def _blocked(self, obs: Observation, heading: str) -> bool:
        return not move_path(obs.map, obs.self.position, heading, 1)

    def act(self, obs: Observation) -> str:
        if self.steps_remaining > 0 and not self._blocked(obs, self.heading):
            self.steps_remaining -= 1
            return self.heading
        for _ in range(self.max_redraws):
            length = float(levy_step_lengths(self.rng, 1, self.alpha, self.cap)[0])
            heading = DIRECTION_NAMES[int(self.rng.integers(len(DIRECTION_NAMES)))]
            if not self._blocked(obs, heading):
                self.heading = heading
                self.steps_remaining = math.ceil(length) - 1
                return heading
        self.heading, self.steps_remaining = None, 0
        return STAY


class LevyForager:
    """Dijkstra to the nearest known item; Lévy exploration otherwise."""

    def __init__(self, rng: np.random.Generator, **walk_kwargs):
        self.walk = LevyWalk(rng, **walk_kwargs)

    def act(self, obs: Observation) -> str:
        return levy_forager(obs, self.walk)


def _draw(rng: np.random.Generator) -> tuple[float, int]:
    # Both numbers are always consumed so the stream position never depends on eps.
    return float(rng.random()), int(rng.integers(len(ACTIONS)))


class UniformRandom:
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def act(self, obs: Observation) -> str:
        _, k = _draw(self.rng)
        return ACTIONS[k]


class Corrupted:
    """Replaces the wrapped policy's action by a uniform one with prob. eps.

    The wrapped policy is consulted at every decision so its own state and
    random stream advance identically for every eps.
    """

    def __init__(self, policy: Policy, eps: float, rng: np.random.Generator):
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"corruption eps must be in [0, 1], got {eps}")
        self.policy = policy
        self.eps = eps
        self.rng = rng
        self.last_corrupted = False

    def act(self, obs: Observation) -> str:
        u, k = _draw(self.rng)
        nominal = self.policy.act(obs)
        self.last_corrupted = u < self.eps
        return ACTIONS[k] if self.last_corrupted else nominal


def corrupt(policy: Policy, eps: float, rng: np.random.Generator) -> Corrupted:
    return Corrupted(policy, eps, rng)


def uniform_random_policy(rng: np.random.Generator) -> UniformRandom:
    return UniformRandom(rng)


def make_policy(
    name: str,
    team: str,
    rng: np.random.Generator,
    levy_alpha: float = 1.5,
    levy_cap: float = 20.0,
) -> Policy:
    if name == "random":
        return UniformRandom(rng)
    if name == "greedy":
        return GreedyScout() if team == SCOUT else GreedyForager()
    if name == "levy":
        if team == FORAGER:
            return LevyForager(rng, alpha=levy_alpha, cap=levy_cap)
        return LevyWalk(rng, alpha=levy_alpha, cap=levy_cap)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")


# Function forms of the baselines. The Lévy variants take the walk state
# explicitly so callers can keep it between decisions.


def greedy_forager(obs: Observation) -> str:
    return GreedyForager().act(obs)


def greedy_scout(obs: Observation) -> str:
    return GreedyScout().act(obs)


def levy_scout(obs: Observation, state: LevyWalk) -> str:
    return state.act(obs)


def levy_forager(obs: Observation, state: LevyWalk) -> str:
    step = toward_nearest_known(obs)
    if step is not None:
        state.steps_remaining = 0
        return step
    return state.act(obs)
