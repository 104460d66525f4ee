"""Finite-difference gradient cases shared by unit and acceptance tests.

Each case builds a network with at most 100 parameters and returns
(analytic gradient, central-difference gradient, parameter count).
"""
import numpy as np

from shedlab.envs.params import ParamSpace, continuous
from shedlab.nn import finite_difference_grad, flatten
from shedlab.student import PPOConfig, StudentPolicy, ppo_loss_and_grads
from shedlab.teacher import TeacherAgent, critic_loss_and_grads
from shedlab.worldmodel import EpsilonNet, diffusion_loss, make_schedule

REL_TOL = 1e-4
FLOOR = 1e-6


def _set_flat(params, flat):
    i = 0
    for p in params:
        p[...] = flat[i:i + p.size].reshape(p.shape)
        i += p.size


def _check(params, loss_fn):
    x0 = flatten(params)
    analytic = flatten(loss_fn()[1])

    def f(x):
        _set_flat(params, x)
        return loss_fn()[0]

    numeric = finite_difference_grad(f, x0)
    _set_flat(params, x0)
    return analytic, numeric, x0.size


def ppo_case(seed: int, discrete: bool):
    rng = np.random.default_rng(seed)
    obs_dim, act_dim, n = 3, (3 if discrete else 2), 16
    pol = StudentPolicy(obs_dim, act_dim, discrete, rng, hidden=(4,))
    obs = rng.normal(size=(n, obs_dim))
    if discrete:
        actions = rng.integers(act_dim, size=n)
    else:
        actions = rng.normal(size=(n, act_dim))
        pol.log_std[:] = rng.uniform(-1.0, 0.5, act_dim)
    # old log-probs near the current ones so some ratios are clipped, some not
    logits_logp = _logp(pol, obs, actions)
    old_logp = logits_logp + rng.normal(0.0, 0.3, n)
    adv = rng.normal(size=n)
    ret = rng.normal(size=n)
    cfg = PPOConfig()
    # keep ratios away from the clip kinks where the loss is not differentiable
    ratio = np.exp(logits_logp - old_logp)
    near = np.minimum(np.abs(ratio - 0.8), np.abs(ratio - 1.2)) < 1e-3
    old_logp[near] += 0.05
    return _check(pol.params, lambda: ppo_loss_and_grads(pol, obs, actions, old_logp, adv, ret, cfg)[:2])


def _logp(pol, obs, actions):
    out = pol.pi(obs)
    if pol.discrete:
        z = out - out.max(axis=1, keepdims=True)
        lp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return lp[np.arange(len(obs)), actions]
    ls = pol.clamped_log_std()
    zs = (actions - out) / np.exp(ls)
    return np.sum(-0.5 * zs ** 2 - ls - 0.5 * np.log(2 * np.pi), axis=1)


def ddpg_critic_case(seed: int):
    rng = np.random.default_rng(seed)
    space = ParamSpace((continuous("a", -1.0, 1.0), continuous("b", 0.0, 2.0)), name="toy")
    state_dim, n = 4, 12
    agent = TeacherAgent(state_dim, space, rng, hidden=(8,))  # critic: 6*8+8+8+1 = 65 params
    # move targets away from the online nets so the TD target is non-trivial
    for p in agent.critic_target.params + agent.actor_target.params:
        p += rng.normal(0.0, 0.1, p.shape)
    s = rng.normal(size=(n, state_dim))
    a = rng.uniform(-1, 1, (n, 2))
    r = rng.normal(size=n)
    s2 = rng.normal(size=(n, state_dim))
    done = (rng.random(n) < 0.2).astype(float)
    return _check(agent.critic.params, lambda: critic_loss_and_grads(agent, s, a, r, s2, done))


def diffusion_case(seed: int):
    rng = np.random.default_rng(seed)
    target_dim, cond_dim, n = 2, 3, 10
    net = EpsilonNet(target_dim, cond_dim, 5, rng, hidden=(8,))  # (2+3+3)*8+8+8*2+2 = 90 params
    sched = make_schedule(5, 0.1, 10.0)
    x0 = rng.normal(size=(n, target_dim))
    cond = rng.normal(size=(n, cond_dim))
    ks = rng.integers(1, 6, size=n)
    eps = rng.normal(size=(n, target_dim))
    return _check(net.params, lambda: diffusion_loss(net, x0, cond, sched, ks=ks, eps=eps))
