import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shedlab.envs import core
from shedlab.envs.lander import DT, LANDER_SPACE, LanderEnv
from shedlab.envs.maze import (LEVELS, MAZE_SPACE, MazeEnv, MazeParams, START_LEVELS, bracket_report,
                               combo_feasible, generate_maze, maze_feasible, path_stats, satisfies)
from shedlab.envs.params import ParamVector, mutate_params, sample_params
from shedlab.errors import (IllegalTransitionError, InfeasibleSpecError, InvalidParameterError,
                            MalformedGridError)

FEASIBLE_EXAMPLE = [[0, -1, -1, 2], [1, -1, 0, 0], [0, -1, 0, -1], [0, 0, 0, -1]]
BLOCKED_EXAMPLE = [[0, -1, -1, 2], [1, -1, 0, 0], [0, -1, -1, 0], [0, 0, 0, -1]]
DIAGONAL_EXAMPLE = [[1, -1], [-1, 2]]


# -- parameter spaces ---------------------------------------------------------

def test_vector_rejects_out_of_range():
    with pytest.raises(InvalidParameterError):
        LANDER_SPACE.vector([-1.0, 5.0, 0.5])  # gravity must be in [-12, -2]
    with pytest.raises(InvalidParameterError):
        MAZE_SPACE.vector(["easy", "easy", "easy", 6])


def test_encode_decode_roundtrip_continuous():
    pv = LANDER_SPACE.vector([-7.5, 3.0, 1.2])
    back = LANDER_SPACE.decode(pv.encode())
    assert np.allclose(back.values, pv.values, atol=1e-12)


def test_decode_clamps_and_snaps():
    pv = MAZE_SPACE.decode([5.0, -5.0, 0.1, 0.0])
    assert pv.values == ("hard", "easy", "medium", 3)


def test_mutate_saturates_discrete():
    pv = MAZE_SPACE.vector(["hard", "hard", "hard", 5])
    rng = np.random.default_rng(0)
    for _ in range(200):
        child = mutate_params(pv, rng, 1.0)
        assert all(MAZE_SPACE.dims[i].contains(v) for i, v in enumerate(child.values))


def test_mutate_clamps_at_upper_bound():
    pv = LANDER_SPACE.vector([-2.0, 20.0, 2.0])
    rng = np.random.default_rng(1)
    for _ in range(100):
        child = mutate_params(pv, rng, 0.5)
        assert child["gravity"] <= -2.0 and child["wind_power"] <= 20.0 and child["turbulence"] <= 2.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), strength=st.floats(1e-6, 1.0))
def test_mutate_stays_in_bounds(seed, strength):
    rng = np.random.default_rng(seed)
    for space in (LANDER_SPACE, MAZE_SPACE):
        pv = sample_params(space, rng)
        child = mutate_params(pv, rng, strength)
        assert isinstance(child, ParamVector)
        assert all(d.contains(v) for d, v in zip(space.dims, child.values))


def test_mutate_bounds_ten_thousand_inputs():
    rng = np.random.default_rng(123)
    for _ in range(10_000):
        space = LANDER_SPACE if rng.random() < 0.5 else MAZE_SPACE
        child = mutate_params(sample_params(space, rng), rng, float(rng.uniform(0, 1)))
        assert all(d.contains(v) for d, v in zip(space.dims, child.values))


# -- maze ---------------------------------------------------------------------

def test_example_grids_classify():
    assert maze_feasible(FEASIBLE_EXAMPLE)
    assert not maze_feasible(BLOCKED_EXAMPLE)
    assert not maze_feasible(DIAGONAL_EXAMPLE)


@pytest.mark.parametrize("grid", [[[0, 0], [0, 2]], [[1, 1], [0, 2]], [[1, 0], [2, 2]], [[1, 3], [0, 2]], [1, 2]])
def test_malformed_grids(grid):
    with pytest.raises(MalformedGridError):
        maze_feasible(grid)


def test_path_stats_counts_minimum_turns():
    # straight corridor: 3 steps, 0 turns
    assert path_stats([[1, 0, 0, 2]]) == (3, 0)
    # the example maze: down the left column, across the bottom, up, across
    steps, turns = path_stats(FEASIBLE_EXAMPLE)
    assert steps == 8
    assert turns == 4
    # open 3x3: shortest corner-to-corner paths include a single-turn L
    assert path_stats([[1, 0, 0], [0, 0, 0], [0, 0, 2]]) == (4, 1)


def test_generate_easy_corner():
    g = generate_maze(MazeParams("easy", "easy", "easy", 1), np.random.default_rng(0))
    steps, turns = path_stats(g)
    assert g.shape[0] <= 7 and steps < 5 and turns < 2
    r, c = np.argwhere(g == 1)[0]
    assert r <= 2 and c <= 2


def test_generate_hard_size():
    g = generate_maze(MazeParams("hard", "medium", "medium", 3), np.random.default_rng(1))
    assert 10 < g.shape[0] < 15


def test_serpentine_hard_goal_in_easy_size():
    p = MazeParams("easy", "hard", "hard", 1)
    g = generate_maze(p, np.random.default_rng(2))
    assert satisfies(g, p) and path_stats(g)[0] > 10


def test_unsatisfiable_combo_raises():
    p = MazeParams("easy", "hard", "easy", 1)  # >=4 turns in <5 steps is impossible
    assert not combo_feasible(p)
    with pytest.raises(InfeasibleSpecError):
        generate_maze(p, np.random.default_rng(0))


def test_every_feasible_combo_generates():
    rng = np.random.default_rng(7)
    n_feasible = 0
    for size in LEVELS:
        for structure in LEVELS:
            for goal in LEVELS:
                for start in START_LEVELS:
                    p = MazeParams(size, structure, goal, start)
                    if combo_feasible(p):
                        n_feasible += 1
                        assert satisfies(generate_maze(p, rng), p)
    assert n_feasible == 135 - 16


def test_maze_env_dynamics():
    env = MazeEnv(MAZE_SPACE.vector(["easy", "easy", "easy", 1]), seed=0, grid=[[1, 0, 2]])
    obs = env.reset(0)
    assert obs.shape == (11,)
    r = env.step(0)  # up: wall (outside grid) -> stay
    assert env.pos == (0, 0) and r.reward == pytest.approx(-0.01) and not r.terminal
    env.step(3)
    r = env.step(3)
    assert r.terminal and r.reward == 1.0
    with pytest.raises(IllegalTransitionError):
        env.step(0)


def test_maze_truncates_at_horizon():
    env = MazeEnv(MAZE_SPACE.vector(["easy", "easy", "easy", 1]), seed=0, grid=[[1, 0, 2]])
    env.reset(0)
    for _ in range(env.horizon - 1):
        assert not env.step(0).truncated
    assert env.step(0).truncated
    with pytest.raises(IllegalTransitionError):
        MazeEnv(MAZE_SPACE.vector(["easy", "easy", "easy", 1]), 0, grid=[[1, 0, 2]]).step(7)


# -- lander -------------------------------------------------------------------

def test_lander_energy_balance_without_wind():
    env = LanderEnv(LANDER_SPACE.vector([-9.0, 0.0, 0.0]), seed=3)
    rng = np.random.default_rng(0)
    for _ in range(30):
        s = env.state.copy()
        a = rng.uniform(-1, 1, 2)
        acc = env.acceleration(a)
        res = env.step(a)
        ds = res.observation[:2] - s[:2]
        d_kinetic = 0.5 * (res.observation[2:] @ res.observation[2:] - s[2:] @ s[2:])
        work = acc @ ds  # thrust plus gravity, unit mass
        assert d_kinetic == pytest.approx(work, rel=1e-12, abs=1e-12)
        if res.terminal or res.truncated:
            break


def test_lander_deterministic_and_reward():
    pv = LANDER_SPACE.vector([-5.0, 10.0, 1.0])
    runs = []
    for _ in range(2):
        env = core.make_env("lander", pv, 11)
        traj = [core.step(env, [0.1, 0.5]) for _ in range(10)]
        runs.append(np.array([np.r_[t.observation, t.reward] for t in traj]))
    assert np.array_equal(runs[0], runs[1])
    env = core.make_env("lander", pv, 11)
    res = env.step([0.0, 0.0])
    assert res.reward == pytest.approx(-DT * math.hypot(*res.observation[:2]))


def test_lander_rejects_bad_action():
    env = core.make_env("lander", [-5.0, 0.0, 0.0], 0)
    with pytest.raises(IllegalTransitionError):
        env.step([np.nan, 0.0])


# -- core ----------------------------------------------------------------------

def test_reset_is_deterministic():
    for family, params in (("lander", [-3.0, 4.0, 0.5]), ("maze", ["medium", "medium", "medium", 2])):
        env = core.make_env(family, params, 5)
        a = core.reset(env, 9)
        b = core.reset(env, 9)
        assert np.array_equal(a, b)
        assert a.shape == (core.obs_dim(family),)


def test_family_metadata():
    assert core.is_discrete_action("maze") and not core.is_discrete_action("lander")
    assert core.action_dim("maze") == 4 and core.action_dim("lander") == 2
    with pytest.raises(ValueError):
        core.param_space("walker")


def test_mutate_rejects_nonpositive_strength():
    with pytest.raises(ValueError):
        mutate_params(LANDER_SPACE.center(), np.random.default_rng(0), 0.0)
