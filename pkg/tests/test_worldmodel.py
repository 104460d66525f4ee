import math

import numpy as np
from hypothesis import given, settings, strategies as st
import pytest

from gradcheck import FLOOR, REL_TOL, diffusion_case
from shedlab.envs.params import ParamSpace, continuous
from shedlab.errors import InvalidScheduleError, NoRealDataError
from shedlab.nn import max_relative_error
from shedlab.teacher import SYNTHETIC, ReplayBuffer, RewardConfig, TeacherTransition, teacher_reward
from shedlab.worldmodel import (ActionModel, EpsilonNet, Normalizer, WorldModel, forward_sample,
                                gen_synthetic, make_schedule, reverse_step, sample_chain, time_embedding)

SPACE = ParamSpace((continuous("a", -1.0, 1.0), continuous("b", 0.0, 4.0)), name="toy")


def test_schedule_closed_form():
    s = make_schedule(5, 0.1, 10.0)
    assert s.beta(1) == pytest.approx(1 - math.exp(0.02 - 0.198), abs=1e-15)
    assert s.beta(5) == pytest.approx(1 - math.exp(0.02 - 1.782), abs=1e-15)
    assert np.all(np.diff(s.betas) > 0)
    assert np.allclose(s.alpha_bars, np.cumprod(1 - s.betas))


@settings(max_examples=200, deadline=None)
@given(K=st.integers(1, 50), bmin=st.floats(0.01, 1.0), span=st.floats(0.1, 20.0))
def test_schedule_invariants(K, bmin, span):
    try:
        s = make_schedule(K, bmin, bmin + span)
    except InvalidScheduleError:
        return  # some (K, beta) pairs leave (0, 1); rejecting them is the contract
    assert np.all((s.betas > 0) & (s.betas < 1))
    assert np.all(np.diff(s.betas) > 0) and np.all(np.diff(s.alpha_bars) < 0)
    assert np.allclose(s.alpha_bars[1:], s.alpha_bars[:-1] * s.alphas[1:])


@pytest.mark.parametrize("args", [(0, 0.1, 10.0), (5, 0.0, 10.0), (5, 10.0, 0.1)])
def test_invalid_schedules(args):
    with pytest.raises(InvalidScheduleError):
        make_schedule(*args)


def test_forward_sample_closed_form():
    s = make_schedule()
    x0 = np.array([[1.0, -2.0]])
    eps = np.array([[0.5, 0.5]])
    got = forward_sample(x0, np.array([3]), eps, s)
    ab = s.alpha_bar(3)
    assert np.allclose(got, np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps)


def test_time_embedding_shape():
    e = time_embedding(np.array([1, 2, 5]), 5)
    assert e.shape == (3, 3) and np.allclose(e[:, 0], [0.2, 0.4, 1.0])


def test_normalizer_roundtrip_exact():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 10.0, size=(50, 4))
    x[:, 2] = 7.0  # degenerate dim
    n = Normalizer.fit(x)
    z = n(x)
    assert z.min() >= -1 - 1e-12 and z.max() <= 1 + 1e-12
    assert np.max(np.abs(n.inverse(z) - x)) <= 1e-12
    assert np.array_equal(Normalizer.from_record(n.to_record())(x), z)


@pytest.mark.parametrize("seed", range(5))
def test_diffusion_gradients_match_finite_differences(seed):
    analytic, numeric, n = diffusion_case(seed)
    assert n <= 100
    assert max_relative_error(analytic, numeric, FLOOR) < REL_TOL


class OracleEps:
    """Exact noise predictor for data concentrated at a single point."""

    def __init__(self, point, schedule):
        self.point, self.schedule = np.asarray(point), schedule

    def __call__(self, x_k, cond, k):
        ab = self.schedule.alpha_bar(np.asarray(k))[:, None]
        return (x_k - np.sqrt(ab) * self.point) / np.sqrt(1 - ab)


def test_reverse_chain_recovers_point_mass():
    s = make_schedule()
    target = np.array([0.3, -0.7])
    out = sample_chain(OracleEps(target, s), np.zeros((20, 1)), s, np.random.default_rng(0), 2)
    assert np.allclose(out, target, atol=1e-9)


def test_reverse_step_final_is_noise_free():
    s = make_schedule()
    net = EpsilonNet(2, 1, 5, np.random.default_rng(0), hidden=(4,))
    x = np.ones((3, 2))
    a = reverse_step(net, x, np.zeros((3, 1)), 1, s, np.random.default_rng(1))
    b = reverse_step(net, x, np.zeros((3, 1)), 1, s, np.random.default_rng(2))
    assert np.array_equal(a, b)


def _buffer(rng, n=40, m=3):
    buf = ReplayBuffer(100)
    for _ in range(n):
        a = SPACE.vector([rng.uniform(-1, 1), rng.uniform(0, 4)])
        s = rng.uniform(0, 1, m)
        buf.push(TeacherTransition(s, a, 0.0, s + 0.1 * a.encode()[0], done=False))
    return buf


def test_gen_synthetic_recomputes_rewards():
    rng = np.random.default_rng(3)
    buf = _buffer(rng)
    wm = WorldModel(3, SPACE, rng, hidden=(16,))
    wm.train_on_buffer(buf, 20, 16, rng)
    cfg = RewardConfig(eta=0.2)
    syn = gen_synthetic(wm, buf, cfg, 10, rng)
    assert len(syn) == 10
    for t in syn:
        assert t.origin == SYNTHETIC
        assert t.reward == pytest.approx(teacher_reward(t.state, t.next_state, cfg), abs=1e-12)
        assert np.array_equal(t.action_code, t.action.encode())


def test_gen_synthetic_with_action_model():
    rng = np.random.default_rng(4)
    buf = _buffer(rng)
    wm = WorldModel(3, SPACE, rng, hidden=(16,))
    wm.train_on_buffer(buf, 5, 16, rng)
    am = ActionModel(3, SPACE, rng, hidden=(16,))
    items = list(buf.items)
    am.train(np.array([t.state for t in items]), np.array([t.action_code for t in items]), 5, 16, rng)
    syn = gen_synthetic(wm, buf, RewardConfig(), 4, rng, "action_diffusion", am)
    assert all(SPACE.dims[1].contains(t.action["b"]) for t in syn)


def test_world_model_needs_data():
    wm = WorldModel(3, SPACE, np.random.default_rng(0))
    with pytest.raises(NoRealDataError):
        wm.train_on_buffer(ReplayBuffer(4), 1, 1, np.random.default_rng(0))
    with pytest.raises(NoRealDataError):
        gen_synthetic(wm, ReplayBuffer(4), RewardConfig(), 3, np.random.default_rng(0))


def test_world_model_learns_shift():
    rng = np.random.default_rng(5)
    n = 2000
    s = rng.uniform(0, 1, (n, 2))
    a = rng.uniform(-1, 1, (n, 2))
    s2 = s + 0.3 * a + 0.01 * rng.normal(size=(n, 2))
    wm = WorldModel(2, SPACE, rng, hidden=(64, 64), lr=1e-3)
    wm.train(s, a, s2, 1500, 128, rng)
    q_s = np.full((200, 2), 0.5)
    q_a = np.tile([0.5, -0.5], (200, 1))
    gen = wm.sample(q_s, q_a, rng)
    assert np.allclose(gen.mean(axis=0), [0.65, 0.35], atol=0.05)
