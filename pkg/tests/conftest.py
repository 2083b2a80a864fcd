import sys
import numpy as np
import pytest

from forage.agents import FORAGER, SCOUT, AgentState, SharedModel, TeamSpec
from forage.policies import Observation
from forage.world import NodeId, bundled_map, load_map, open_map


@pytest.fixture(scope="session")
def open10():
    return bundled_map("open10")


@pytest.fixture(scope="session")
def open20():
    return bundled_map("open20")


@pytest.fixture(scope="session")
def open40():
    return bundled_map("open40")


def make_obs(m, position, team=FORAGER, *, estimate=None, age=None, visible=None,
             teammates=None, agent_id=0, t=1, horizon=150):
    spec = TeamSpec.scouts() if team == SCOUT else TeamSpec.foragers()
    model = SharedModel.empty(m)
    if estimate is not None:
        model = SharedModel(
            estimate=np.asarray(estimate, dtype=np.int64),
            last_seen=model.last_seen,
            idleness_age=model.idleness_age if age is None else np.asarray(age, dtype=float),
            navigable=m.navigable,
        )
    elif age is not None:
        model = SharedModel(model.estimate, model.last_seen, np.asarray(age, dtype=float), m.navigable)
    me = AgentState(agent_id, team, NodeId(*position))
    if teammates is None:
        teammates = (me,)
    if visible is None:
        visible = np.zeros(m.shape, dtype=bool)
    return Observation(
        self=me,
        teammates=tuple(teammates),
        model=model,
        map=m,
        t=t,
        horizon=horizon,
        speed=spec.speed,
        sensing_radius=spec.sensing_radius,
        visible=visible,
    )


__all__ = ["make_obs", "load_map", "open_map"]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
