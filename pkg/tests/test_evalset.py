import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shedlab.envs.lander import LANDER_SPACE
from shedlab.envs.maze import MAZE_SPACE
from shedlab.envs.params import ParamSpace, continuous
from shedlab.errors import CoverageViolationError, InvalidDeltaError, TooManyEnvironmentsError
from shedlab.evalset import (EvalSet, analytic_bound, build_eval_set, build_interval_grid, collides,
                             perf_vector, same_env, verify_representation_bound)
from shedlab.student import StudentPolicy

UNIT = ParamSpace((continuous("x", 0.0, 1.0),), name="unit")


def test_midpoints_divisible_range():
    g = build_interval_grid(UNIT, [0.25])
    assert np.allclose(g.midpoints[0], [0.125, 0.375, 0.625, 0.875])


def test_midpoints_pin_last_interval():
    g = build_interval_grid(UNIT, [0.3])
    assert np.allclose(g.midpoints[0], [0.15, 0.45, 0.75, 0.85])


def test_full_width_delta_single_midpoint():
    g = build_interval_grid(UNIT, [1.0])
    assert g.midpoints[0] == (0.5,)


@pytest.mark.parametrize("delta", [0.0, -0.1, 1.5])
def test_invalid_delta(delta):
    with pytest.raises(InvalidDeltaError):
        build_interval_grid(UNIT, [delta])


def test_discrete_dims_use_levels():
    g = build_interval_grid(MAZE_SPACE, [None] * 4)
    assert g.sizes == (3, 3, 3, 5) and g.n_combinations == 135


@settings(max_examples=100, deadline=None)
@given(delta=st.floats(0.01, 1.0), x=st.floats(0.0, 1.0))
def test_every_point_is_covered(delta, x):
    g = build_interval_grid(UNIT, [delta])
    mid = g.covering_midpoints([[x]])[0, 0]
    assert abs(mid - x) <= delta / 2 + 1e-9


def test_outside_point_not_covered():
    g = build_interval_grid(UNIT, [0.25])
    with pytest.raises(CoverageViolationError):
        g.covering_midpoints([[2.0]])


def test_eval_set_grid_and_random_distinct():
    rng = np.random.default_rng(0)
    ev = build_eval_set(LANDER_SPACE, "lander", 10, "grid", rng)
    te = build_eval_set(LANDER_SPACE, "lander", 10, "random", rng, exclude=ev.params)
    assert len(ev) == len(te) == 10
    assert not any(collides(p, te.params) for p in ev.params)
    for i, p in enumerate(ev.params):
        assert not collides(p, ev.params[:i])


def test_maze_eval_set_skips_infeasible_combos():
    ev = build_eval_set(MAZE_SPACE, "maze", 20, "grid", np.random.default_rng(1))
    from shedlab.envs.maze import combo_feasible
    assert all(combo_feasible(p) for p in ev.params)


def test_too_many_environments():
    with pytest.raises(TooManyEnvironmentsError):
        build_eval_set(MAZE_SPACE, "maze", 200, "grid", np.random.default_rng(0))


def test_same_env_tolerance():
    a = LANDER_SPACE.vector([-5.0, 10.0, 1.0])
    b = LANDER_SPACE.vector([-5.0 + 1e-4, 10.0, 1.0])
    c = LANDER_SPACE.vector([-5.5, 10.0, 1.0])
    assert same_env(a, b) and not same_env(a, c)


def test_eval_set_record_roundtrip(tmp_path):
    ev = build_eval_set(MAZE_SPACE, "maze", 5, "random", np.random.default_rng(2), seed=2)
    path = tmp_path / "ev.json"
    ev.save(path)
    assert EvalSet.load(path) == ev


def test_perf_vector_shape_and_determinism():
    ev = build_eval_set(MAZE_SPACE, "maze", 4, "random", np.random.default_rng(3))
    pol = StudentPolicy.for_family("maze", np.random.default_rng(0), hidden=(8,))
    a = perf_vector(pol, ev, 2, seed=5, deterministic=False)
    b = perf_vector(pol, ev, 2, seed=5, deterministic=False)
    assert a.shape == (4,) and np.array_equal(a, b)


def test_representation_bound_holds_1d():
    g = build_interval_grid(UNIT, [0.1])
    L = 3.0
    observed = verify_representation_bound(lambda x: L * np.abs(np.sin(7 * x[:, 0])) / 7, g, 10_000,
                                           np.random.default_rng(0))
    assert observed <= analytic_bound([L], g)
