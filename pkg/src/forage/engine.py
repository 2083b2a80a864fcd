"""Deterministic episode loop.

Step ``t = 0`` is the deployment step: agents stand on their start cell,
foragers collect there and everybody observes; nothing moves or drifts.
Every later step runs the full phase order:

1. snapshot observations, 2. all policies act, 3. all agents move,
4. foragers collect (agent order), 5. items drift, 6. fields of view and
DISCOVER events, 7. shared-model/idleness update, 8. STEP summary.

The episode ends after step ``horizon`` or as soon as no item is alive.
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Optional, Union

import numpy as np

from . import seeding
from .agents import (
    FORAGER,
    OBSERVE,
    SCOUT,
    AgentState,
    SharedModel,
    TeamSpec,
    fov_cells,
    move_path,
    update_model,
)
from .metrics import MetricReport, OnlineMetrics
from .policies import Corrupted, Observation, Policy, make_policy
from .resources import DriftParams, SpawnParams, collect_at, discretize, item_digest, spawn_items, step_items
from .trace import COLLECT, DISCOVER, MOVE, STEP, TRACE_VERSION, EpisodeTrace, digest, read_trace
from .world import GridMap, NodeId

PolicyFactory = Callable[[AgentState, np.random.Generator], Policy]
PolicyBinding = Union[str, PolicyFactory]

CLEARED = "cleared"
HORIZON = "horizon"


class ConfigError(ValueError):
    """Invalid episode configuration."""


class ReplayError(RuntimeError):
    """A replayed trace cannot be followed in the current environment."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(f"step {step}: {message}" if step is not None else message)
        self.step = step


@dataclass(frozen=True, eq=False)
class EpisodeConfig:
    map: GridMap
    scouts: TeamSpec = field(default_factory=TeamSpec.scouts)
    foragers: TeamSpec = field(default_factory=TeamSpec.foragers)
    spawn: SpawnParams = field(default_factory=SpawnParams)
    drift: DriftParams = field(default_factory=DriftParams)
    horizon: int = 150
    seed: int = 0
    forgetting: float = 0.95
    idleness_mode: str = OBSERVE
    policies: Mapping[str, PolicyBinding] = field(
        default_factory=lambda: {SCOUT: "greedy", FORAGER: "greedy"}
    )
    corruption: Mapping[str, float] = field(default_factory=dict)
    deploy: Optional[tuple[int, int]] = None
    levy_alpha: float = 1.5
    levy_cap: float = 20.0

    def validate(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.scouts.team != SCOUT or self.foragers.team != FORAGER:
            raise ConfigError("team specs must be (scout, forager)")
        if not 0 < self.forgetting < 1:
            raise ConfigError("forgetting factor must be in (0, 1)")
        for team, eps in self.corruption.items():
            if team not in (SCOUT, FORAGER):
                raise ConfigError(f"corruption: unknown team {team!r}")
            if not 0 <= eps <= 1:
                raise ConfigError(f"corruption eps for {team} must be in [0, 1]")
        for team in (SCOUT, FORAGER):
            if team not in self.policies:
                raise ConfigError(f"no policy bound for team {team!r}")
        if self.deploy is not None and not self.map.is_navigable(*self.deploy):
            raise ConfigError(f"deploy cell {tuple(self.deploy)} is not navigable")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned value")

    def to_dict(self) -> dict:
        """Serialisable description (map excluded; it is stored separately).

        Corruption entries with eps = 0 are inert and left out, so a
        0-corrupted run produces exactly the uncorrupted trace.
        """

        def binding(b):
            return b if isinstance(b, str) else f"custom:{getattr(b, '__qualname__', type(b).__name__)}"

        return {
            "scouts": {k: v for k, v in asdict(self.scouts).items() if k != "team"},
            "foragers": {k: v for k, v in asdict(self.foragers).items() if k != "team"},
            "spawn": asdict(self.spawn),
            "drift": asdict(self.drift),
            "horizon": self.horizon,
            "seed": self.seed,
            "idleness": {"forgetting": self.forgetting, "mode": self.idleness_mode},
            "policies": {t: binding(self.policies[t]) for t in (SCOUT, FORAGER)},
            "corruption": {t: e for t, e in sorted(self.corruption.items()) if e > 0},
            "deploy": list(self.deploy) if self.deploy is not None else None,
            "levy": {"alpha": self.levy_alpha, "cap": self.levy_cap},
        }


def agent_start_positions(
    config: EpisodeConfig, m: GridMap, rng: np.random.Generator
) -> list[NodeId]:
    """Shared deployment cell for every agent (fixed or uniform)."""
    n = config.scouts.count + config.foragers.count
    if config.deploy is not None:
        cell = NodeId(*config.deploy)
    else:
        nodes = m.navigable_nodes
        cell = nodes[int(rng.integers(len(nodes)))]
    return [cell] * n


class ReplayPolicy:
    """Re-emits the actions one agent took in a recorded trace."""

    def __init__(self, moves: Mapping[int, dict], agent: int, speed: Optional[int] = None):
        self.moves = dict(moves)
        self.agent = agent
        self.speed = speed

    def act(self, obs: Observation) -> str:
        e = self.moves.get(obs.t)
        if e is None:
            raise ReplayError(f"no recorded move for agent {self.agent}", obs.t)
        if tuple(obs.self.position) != tuple(e["from"]):
            raise ReplayError(
                f"agent {self.agent} is at {tuple(obs.self.position)}, trace expects"
                f" {tuple(e['from'])}",
                obs.t,
            )
        path = move_path(obs.map, obs.self.position, e["action"], obs.speed)
        end = path[-1] if path else obs.self.position
        if tuple(end) != tuple(e["to"]):
            raise ReplayError(
                f"agent {self.agent}: {e['action']} reaches {tuple(end)}, trace"
                f" recorded {tuple(e['to'])}",
                obs.t,
            )
        return e["action"]


def replay_policy(trace: EpisodeTrace, agent: int) -> ReplayPolicy:
    moves = {e["t"]: e for e in trace.of_type(MOVE) if e["agent"] == agent}
    if trace.footer is not None:
        missing = [t for t in range(1, trace.t_end + 1) if t not in moves]
        if missing:
            raise ReplayError(f"trace has no move for agent {agent} at steps {missing[:5]}")
    return ReplayPolicy(moves, agent)


def _build_policies(config: EpisodeConfig, agents: list[AgentState]) -> list[Policy]:
    replays: dict[str, EpisodeTrace] = {}
    out = []
    for a in agents:
        rng = seeding.stream(config.seed, seeding.POLICY, a.id)
        binding = config.policies[a.team]
        if callable(binding):
            policy = binding(a, rng)
        elif binding.startswith("replay:"):
            path = binding.split(":", 1)[1]
            if path not in replays:
                replays[path] = read_trace(path)
            policy = replay_policy(replays[path], a.id)
        else:
            policy = make_policy(
                binding,
                a.team,
                rng,
                levy_alpha=config.levy_alpha,
                levy_cap=config.levy_cap,
            )
        eps = config.corruption.get(a.team, 0.0)
        if eps > 0:
            policy = Corrupted(policy, eps, seeding.stream(config.seed, seeding.CORRUPTION, a.id))
        out.append(policy)
    return out


def _sparse(a: np.ndarray) -> list[list[int]]:
    flat = a.ravel()
    idx = np.flatnonzero(flat)
    return [[int(k), int(flat[k])] for k in idx]


def _digest_cells(cells: np.ndarray) -> str:
    return hashlib.sha256(np.asarray(cells, dtype="<i8").tobytes()).hexdigest()[:16]


def run_episode_with_metrics(config: EpisodeConfig) -> tuple[EpisodeTrace, MetricReport]:
    config.validate()
    m = config.map
    seed = config.seed

    field_ = spawn_items(
        m,
        config.spawn,
        seeding.stream(seed, seeding.SPAWN),
        config.drift,
        wind_rng=seeding.stream(seed, seeding.WIND),
    )
    drift_rng = seeding.stream(seed, seeding.DRIFT)
    starts = agent_start_positions(config, m, seeding.stream(seed, seeding.DEPLOY))

    specs: list[TeamSpec] = [config.scouts] * config.scouts.count + [config.foragers] * config.foragers.count
    agents = [AgentState(n, spec.team, starts[n]) for n, spec in enumerate(specs)]
    policies = _build_policies(config, agents)
    model = SharedModel.empty(m, config.forgetting, config.idleness_mode)
    k = field_.k
    w = m.width

    cfg = config.to_dict()
    trace = EpisodeTrace(
        header={
            "type": "header",
            "trace_version": TRACE_VERSION,
            "config_digest": digest(cfg),
            "seed": seed,
            "horizon": config.horizon,
            "k": k,
            "wind": list(field_.wind),
            "hotspot": list(field_.hotspot),
            "items_digest": item_digest(field_),
            "map": {
                "name": m.name,
                "digest": m.digest,
                "height": m.height,
                "width": m.width,
                "cell_size": m.cell_size,
                "n_navigable": m.n_navigable,
                "text": m.to_text(),
            },
            "agents": [
                {"id": a.id, "team": a.team, "start": list(a.position), "policy": cfg["policies"][a.team]}
                for a in agents
            ],
            "config": cfg,
        }
    )
    online = OnlineMetrics(m, k, config.horizon, [a.team for a in agents])
    discovered: dict[int, str] = {}
    undiscovered = np.ones(k, dtype=bool)
    n_collected = 0
    visible = np.zeros(m.shape, dtype=bool)

    def collect_phase(t: int) -> None:
        nonlocal field_, n_collected
        for a in agents:
            if a.team != FORAGER:
                continue
            field_, count, ids = collect_at(field_, m, a.position)
            for item in ids:
                cell = list(a.position)
                if item not in discovered:
                    discovered[item] = FORAGER
                    undiscovered[item] = False
                    trace.emit({"type": DISCOVER, "t": t, "item": item, "cell": cell, "agent": a.id, "team": FORAGER})
                    online.discover(t, item, FORAGER)
                trace.emit({"type": COLLECT, "t": t, "item": item, "cell": cell, "agent": a.id})
                online.collect(t, item, a.id)
            n_collected += count

    def observe_phase(t: int) -> None:
        nonlocal model, visible
        fovs = [fov_cells(m, a.position, specs[a.id].sensing_radius) for a in agents]
        vis = np.zeros(m.shape[0] * w, dtype=bool)
        for f in fovs:
            vis[f] = True
        ii, jj = field_.cells(m)
        item_cells = ii * w + jj
        pending = field_.alive & undiscovered
        seen_mask = np.zeros_like(vis)
        for a, f in zip(agents, fovs):
            if not pending.any():
                break
            seen_mask[f] = True
            seen = pending & seen_mask[item_cells]
            seen_mask[f] = False
            for item in np.flatnonzero(seen):
                item = int(item)
                discovered[item] = a.team
                undiscovered[item] = False
                trace.emit({
                    "type": DISCOVER, "t": t, "item": item,
                    "cell": [int(ii[item]), int(jj[item])], "agent": a.id, "team": a.team,
                })
                online.discover(t, item, a.team)
            pending &= ~seen
        visible = vis.reshape(m.shape)
        truth = discretize(field_, m)
        model = update_model(model, truth, visible, t, visited=[a.position for a in agents])
        mi = model.mean_idleness()
        alive = field_.alive_count
        trace.emit({
            "type": STEP,
            "t": t,
            "alive": alive,
            "discovered": len(discovered),
            "scout_discovered": sum(1 for team in discovered.values() if team == SCOUT),
            "collected": n_collected,
            "mi": mi,
            "visible_digest": _digest_cells(np.flatnonzero(vis)),
            "fov": [[int(c) for c in f] for f in fovs],
            "truth": _sparse(truth),
            "estimate": _sparse(model.estimate),
        })
        online.step(truth, model.estimate, fovs, mi)

    # deployment step
    collect_phase(0)
    observe_phase(0)
    t = 0
    reason = CLEARED if field_.alive_count == 0 else HORIZON
    while field_.alive_count > 0 and t < config.horizon:
        t += 1
        snapshot = tuple(agents)
        actions = []
        for a, policy in zip(agents, policies):
            spec = specs[a.id]
            obs = Observation(
                self=a,
                teammates=snapshot,
                model=model,
                map=m,
                t=t,
                horizon=config.horizon,
                speed=spec.speed,
                sensing_radius=spec.sensing_radius,
                visible=visible,
            )
            actions.append(policy.act(obs))
        moved = []
        for a, action, policy in zip(agents, actions, policies):
            path = move_path(m, a.position, action, specs[a.id].speed)
            to = path[-1] if path else a.position
            event = {"type": MOVE, "t": t, "agent": a.id, "action": action, "from": list(a.position)}
            if len(path) > 1:
                event["via"] = [list(p) for p in path[:-1]]
            event["to"] = list(to)
            if isinstance(policy, Corrupted) and policy.last_corrupted:
                event["corrupted"] = True
            trace.emit(event)
            moved.append(AgentState(a.id, a.team, NodeId(*to)))
        agents = moved
        collect_phase(t)
        field_ = step_items(field_, m, drift_rng)
        observe_phase(t)
        reason = CLEARED if field_.alive_count == 0 else HORIZON

    trace.footer = {"type": "footer", "t_end": t, "reason": reason}
    return trace, online.finish()


def run_episode(config: EpisodeConfig) -> EpisodeTrace:
    return run_episode_with_metrics(config)[0]
