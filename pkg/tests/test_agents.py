import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forage.agents import (
    FORAGER,
    SCOUT,
    VISIT,
    AgentState,
    SharedModel,
    TeamSpec,
    apply_move,
    field_of_view,
    fov_cells,
    fov_offsets,
    mean_idleness,
    move_path,
    update_model,
)
from forage.world import DomainError, NodeId, load_map, open_map


def _scan(m, pos, rho):
    # every cell of the grid tested against the strict Euclidean bound
    if rho == 0:
        return {NodeId(*pos)}
    out = set()
    for i in range(m.height):
        for j in range(m.width):
            if m.navigable[i, j] and math.hypot(i - pos[0], j - pos[1]) < rho:
                out.add(NodeId(i, j))
    return out


def test_fov_rho_zero_is_own_cell():
    m = open_map(5, 5)
    assert field_of_view(m, (2, 2), 0.0) == {(2, 2)}


def test_fov_rho_1_5_is_moore_neighbourhood():
    m = open_map(5, 5)
    got = field_of_view(m, (2, 2), 1.5)
    assert got == {(i, j) for i in (1, 2, 3) for j in (1, 2, 3)}


def test_fov_rho_4_has_45_cells():
    m = open_map(15, 15)
    got = field_of_view(m, (7, 7), 4.0)
    assert len(got) == 45
    assert got == _scan(m, (7, 7), 4.0)
    assert len(fov_offsets(4.0)) == 45


@pytest.mark.parametrize("rho", [0.0, 0.5, 1.0, 1.5, 2.0, 2.9, 4.0, 5.5])
def test_fov_matches_scan_near_obstacles(rho):
    m = load_map("......\n.##...\n......\n...#..\n......\n")
    for pos in m.navigable_nodes:
        assert field_of_view(m, pos, rho) == _scan(m, pos, rho)


def test_fov_cells_sorted_and_read_only():
    m = open_map(9, 9)
    cells = fov_cells(m, (0, 0), 4.0)
    assert (np.diff(cells) > 0).all()
    with pytest.raises(ValueError):
        cells[0] = 5


def test_fov_requires_navigable():
    m = load_map(".#\n")
    with pytest.raises(DomainError):
        field_of_view(m, (0, 1), 1.0)


def test_apply_move_rules():
    m = open_map(3, 5)
    scout = AgentState(0, SCOUT, NodeId(0, 0))
    assert apply_move(m, scout, "STAY", 2) == (0, 0)
    assert apply_move(m, scout, "E", 2) == (0, 2)
    assert apply_move(m, scout, "N", 2) == (0, 0)
    near_wall = AgentState(0, SCOUT, NodeId(0, 3))
    assert apply_move(m, near_wall, "E", 2) == (0, 4)
    walled = load_map("...#.\n")
    assert apply_move(walled, AgentState(0, SCOUT, NodeId(0, 1)), "E", 2) == (0, 2)
    assert move_path(m, (1, 1), "SE", 2) == [(2, 2)]
    with pytest.raises(ValueError):
        move_path(m, (1, 1), "UP", 1)


def test_agents_may_share_a_node():
    m = open_map(3, 3)
    a = apply_move(m, AgentState(0, FORAGER, NodeId(0, 1)), "S", 1)
    b = apply_move(m, AgentState(1, FORAGER, NodeId(2, 1)), "N", 1)
    assert a == b == (1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 5000), st.sampled_from(["N", "NE", "E", "SE", "S", "SW", "W", "NW", "STAY"]), st.integers(1, 2))
def test_moves_stay_navigable(seed, action, speed):
    rng = np.random.default_rng(seed)
    nav = rng.random((6, 6)) > 0.3
    nav[3, 3] = True
    m = load_map("\n".join("".join("." if v else "#" for v in row) for row in nav))
    end = apply_move(m, AgentState(0, SCOUT, NodeId(3, 3)), action, speed)
    assert m.is_navigable(*end)
    assert max(abs(end[0] - 3), abs(end[1] - 3)) <= speed


def test_team_spec_validation():
    assert TeamSpec.scouts().speed == 2 and TeamSpec.scouts().sensing_radius == 4.0
    assert TeamSpec.foragers().speed == 1 and TeamSpec.foragers().sensing_radius == 0.0
    for bad in (dict(count=-1), dict(speed=3), dict(sensing_radius=-1)):
        with pytest.raises(ValueError):
            TeamSpec(SCOUT, **bad)
    with pytest.raises(ValueError):
        TeamSpec("drone")


def test_update_full_visibility_copies_truth():
    m = open_map(4, 4)
    truth = np.arange(16).reshape(4, 4)
    model = update_model(SharedModel.empty(m), truth, np.ones((4, 4), bool), t=3)
    assert (model.estimate == truth).all()
    assert (model.idleness_age == 0).all()
    assert (model.last_seen == 3).all()
    assert model.mean_idleness() == 0.0


def test_update_nothing_visible_ages_cells():
    m = open_map(3, 3)
    model = update_model(SharedModel.empty(m), np.ones((3, 3), int), np.ones((3, 3), bool), t=0)
    truth = np.full((3, 3), 7)
    again = update_model(model, truth, np.zeros((3, 3), bool), t=1)
    assert (again.estimate == 1).all()
    assert (again.idleness_age == 1).all()


def test_stale_estimate_after_item_leaves():
    m = open_map(3, 3)
    truth = np.zeros((3, 3), int)
    truth[0, 0] = 2
    vis = np.zeros((3, 3), bool)
    vis[0, 0] = True
    model = update_model(SharedModel.empty(m), truth, vis, t=0)
    moved = np.zeros((3, 3), int)
    moved[2, 2] = 2
    model = update_model(model, moved, np.zeros((3, 3), bool), t=1)
    assert model.estimate[0, 0] == 2 and model.estimate[2, 2] == 0


def test_visit_mode_resets_on_occupancy_only():
    m = open_map(3, 3)
    model = SharedModel.empty(m, mode=VISIT)
    model = update_model(model, np.zeros((3, 3), int), np.ones((3, 3), bool), t=0, visited=[(1, 1)])
    assert model.idleness_age[1, 1] == 0
    assert np.isinf(model.idleness_age[0, 0])
    assert (model.estimate == 0).all()


def test_idleness_law():
    m = open_map(2, 2)
    age = np.array([[0.0, 10.0], [np.inf, 1.0]])
    model = SharedModel(np.zeros((2, 2), int), np.zeros((2, 2), int), age, m.navigable)
    idle = model.idleness()
    assert idle[0, 0] == 0.0
    assert idle[0, 1] == pytest.approx(1 - 0.95**10, rel=1e-12)
    assert idle[0, 1] == pytest.approx(0.4013, abs=5e-5)
    assert idle[1, 0] == 1.0
    assert mean_idleness(age, m.navigable, 0.95) == pytest.approx(idle.mean(), rel=1e-12)


def test_model_validation():
    m = open_map(2, 2)
    with pytest.raises(ValueError):
        SharedModel.empty(m, forgetting=1.0)
    with pytest.raises(ValueError):
        SharedModel.empty(m, mode="stare")
    with pytest.raises(ValueError):
        update_model(SharedModel.empty(m), np.zeros((3, 3), int), [], 0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=16, max_size=16), min_size=1, max_size=8))
def test_last_seen_non_decreasing(masks):
    m = open_map(4, 4)
    rng = np.random.default_rng(0)
    model = SharedModel.empty(m)
    for t, mask in enumerate(masks):
        truth = rng.integers(0, 3, size=(4, 4))
        vis = np.array(mask).reshape(4, 4)
        before = model.last_seen.copy()
        model = update_model(model, truth, vis, t)
        assert (model.last_seen >= before).all()
        assert (model.estimate[vis] == truth[vis]).all()
