"""Scenario files: JSON documents describing a batch of episodes.

A scenario names a map (a bundled map name or a path relative to the
scenario file), team specs, item parameters, the horizon and either one
policy binding (``policies``) or several named ones (``algorithms``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema

from .agents import FORAGER, SCOUT, TeamSpec
from .engine import EpisodeConfig
from .resources import DriftParams, SpawnParams
from .world import BUNDLED_MAPS, MapFormatError, bundled_map, load_map_file

SCHEMA_ID = "forage-scenario/1"
DEFAULT_EPISODES = 100


class ScenarioError(ValueError):
    """Invalid scenario; ``field`` is the dotted path of the offending key."""

    def __init__(self, message: str, field: str = "", line: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.field = field
        self.line = line


def schema() -> dict:
    text = resources.files("forage").joinpath("scenario.schema.json").read_text()
    return json.loads(text)


@dataclass(frozen=True, eq=False)
class Scenario:
    config: EpisodeConfig
    algorithms: dict
    episodes: int = DEFAULT_EPISODES
    output: Optional[str] = None
    raw: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.config.seed


def _path(error: jsonschema.ValidationError) -> str:
    return ".".join(str(p) for p in error.absolute_path)


def validate(doc: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        e = errors[0]
        raise ScenarioError(e.message, _path(e))


def _team(doc: dict, key: str, base: TeamSpec) -> TeamSpec:
    t = doc.get("teams", {}).get(key, {})
    try:
        return TeamSpec(
            base.team,
            count=t.get("count", base.count),
            speed=t.get("speed", base.speed),
            sensing_radius=float(t.get("sensing_radius", base.sensing_radius)),
        )
    except ValueError as exc:
        raise ScenarioError(str(exc), f"teams.{key}") from None


def _resolve_map(name: str, base_dir: Path):
    if name in BUNDLED_MAPS:
        return bundled_map(name)
    path = Path(name)
    if not path.is_absolute():
        path = base_dir / path
    if not path.is_file():
        raise ScenarioError(f"map file {str(path)!r} not found", "map")
    try:
        return load_map_file(path)
    except (MapFormatError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}", "map") from None


def from_dict(doc: dict, base_dir: str | Path = ".") -> Scenario:
    validate(doc)
    base_dir = Path(base_dir)
    m = _resolve_map(doc["map"], base_dir)
    try:
        spawn = SpawnParams(**doc.get("spawn", {}))
    except ValueError as exc:
        raise ScenarioError(str(exc), "spawn") from None
    drift = DriftParams(**doc.get("drift", {}))
    if "algorithms" in doc:
        algorithms = {name: dict(b) for name, b in doc["algorithms"].items()}
    else:
        b = doc.get("policies", {SCOUT: "greedy", FORAGER: "greedy"})
        algorithms = {f"{b[SCOUT]}" if b[SCOUT] == b[FORAGER] else f"{b[SCOUT]}+{b[FORAGER]}": dict(b)}
    algorithms = {name: _rebase_replay(b, base_dir) for name, b in algorithms.items()}
    first = next(iter(algorithms.values()))
    idle = doc.get("idleness", {})
    levy = doc.get("levy", {})
    deploy = doc.get("deploy")
    config = EpisodeConfig(
        map=m,
        scouts=_team(doc, "scouts", TeamSpec.scouts()),
        foragers=_team(doc, "foragers", TeamSpec.foragers()),
        spawn=spawn,
        drift=drift,
        horizon=doc.get("horizon", 150),
        seed=doc.get("seed", 0),
        forgetting=idle.get("forgetting", 0.95),
        idleness_mode=idle.get("mode", "observe"),
        policies=first,
        corruption=dict(doc.get("corruption", {})),
        deploy=tuple(deploy) if deploy is not None else None,
        levy_alpha=levy.get("alpha", 1.5),
        levy_cap=levy.get("cap", 20.0),
    )
    try:
        config.validate()
    except ValueError as exc:
        field_ = "deploy" if "deploy" in str(exc) else ""
        raise ScenarioError(str(exc), field_) from None
    return Scenario(
        config=config,
        algorithms=algorithms,
        episodes=doc.get("episodes", DEFAULT_EPISODES),
        output=doc.get("output"),
        raw=doc,
    )


def _rebase_replay(binding: dict, base_dir: Path) -> dict:
    out = {}
    for team, b in binding.items():
        if b.startswith("replay:"):
            p = Path(b.split(":", 1)[1])
            if not p.is_absolute():
                p = base_dir / p
            b = f"replay:{p}"
        out[team] = b
    return out


def loads(text: str, base_dir: str | Path = ".") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    return from_dict(doc, base_dir)


def load(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}") from None
    return loads(text, base_dir=path.parent)


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
