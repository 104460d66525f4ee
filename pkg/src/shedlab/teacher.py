"""Upper-level teacher: fairness-aware reward, replay buffers, DDPG agent."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .envs.params import ParamSpace, ParamVector
from .errors import (CannotTrainError, InsufficientDimensionsError, ShapeError,
                     TrainingDivergedError)
from .nn import MLP, Adam

log = logging.getLogger(__name__)

REAL, SYNTHETIC = "real", "synthetic"


@dataclass(frozen=True)
class RewardConfig:
    eta: float = 0.1
    eps_cv: float = 1e-8

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be >= 0")
        if not self.eps_cv > 0:
            raise ValueError("eps_cv must be > 0")


def _pair(s, s_next):
    s = np.asarray(s, dtype=np.float64).ravel()
    s_next = np.asarray(s_next, dtype=np.float64).ravel()
    if s.shape != s_next.shape:
        raise ShapeError(f"performance vectors differ in length: {s.size} vs {s_next.size}")
    return s, s_next


def progress_reward(s, s_next) -> float:
    """Total improvement across evaluation environments."""
    s, s_next = _pair(s, s_next)
    return math.fsum(np.concatenate([s_next, -s]))


def cv(s, s_next, eps_cv: float = 1e-8) -> float:
    """Coefficient of variation of per-environment improvements.

    ``eps_cv`` is added to the squared mean so a zero mean change stays finite.
    """
    s, s_next = _pair(s, s_next)
    m = s.size
    if m < 2:
        raise InsufficientDimensionsError("cv needs at least two evaluation environments")
    # compensated sums keep the result accurate when the mean change nearly cancels
    wbar = math.fsum(np.concatenate([s_next, -s])) / m
    dev = [math.fsum((b, -a, -wbar)) for a, b in zip(s, s_next)]
    var = math.fsum(d * d for d in dev) / (m - 1)
    return math.sqrt(var / (wbar * wbar + eps_cv))


def teacher_reward(s, s_next, config: RewardConfig = RewardConfig()) -> float:
    return progress_reward(s, s_next) - config.eta * cv(s, s_next, config.eps_cv)


@dataclass
class TeacherTransition:
    state: np.ndarray
    action: ParamVector
    reward: float
    next_state: np.ndarray
    origin: str = REAL
    done: bool = False
    action_code: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=np.float64)
        self.next_state = np.asarray(self.next_state, dtype=np.float64)
        if self.state.shape != self.next_state.shape:
            raise ShapeError("state and next_state lengths differ")
        if not np.isfinite(self.reward):
            raise ValueError("teacher reward must be finite")
        if self.action_code is None:
            self.action_code = self.action.encode()


class ReplayBuffer:
    """Bounded FIFO of teacher transitions."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self.items: deque = deque(maxlen=self.capacity)
        self.inserted = 0

    def __len__(self):
        return len(self.items)

    def push(self, t: TeacherTransition) -> None:
        self.items.append(t)
        self.inserted += 1

    def sample(self, n: int, rng: np.random.Generator) -> list:
        if n <= 0:
            return []
        idx = rng.integers(len(self.items), size=n)
        return [self.items[i] for i in idx]

    def states(self) -> np.ndarray:
        return np.array([t.state for t in self.items])


def push(buffer: ReplayBuffer, t: TeacherTransition) -> None:
    buffer.push(t)


def mix_batch(b_real: ReplayBuffer, b_syn: ReplayBuffer | None, psi: float, batch_size: int,
              rng: np.random.Generator) -> list:
    """``ceil(psi * batch_size)`` real draws, the rest synthetic (real-only if B_syn is empty)."""
    if len(b_real) == 0:
        raise CannotTrainError("real replay buffer is empty")
    if not 0.0 <= psi <= 1.0:
        raise ValueError("psi must lie in [0, 1]")
    n_real = math.ceil(psi * batch_size)
    n_syn = batch_size - n_real
    if n_syn > 0 and (b_syn is None or len(b_syn) == 0):
        log.warning("synthetic buffer empty; drawing the whole batch from real experience")
        n_real, n_syn = batch_size, 0
    return b_real.sample(n_real, rng) + (b_syn.sample(n_syn, rng) if n_syn else [])


def stack_batch(batch: list):
    s = np.array([t.state for t in batch])
    a = np.array([t.action_code for t in batch])
    r = np.array([t.reward for t in batch], dtype=np.float64)
    s2 = np.array([t.next_state for t in batch])
    d = np.array([t.done for t in batch], dtype=np.float64)
    return s, a, r, s2, d


class TeacherAgent:
    """Deterministic actor ``perf vector -> [-1, 1]^d`` and critic ``Q(s, a)``.

    Actions are decoded into the design space by affine rescaling, with
    discrete dims snapped to the nearest level; the critic always sees the
    snapped code, and the actor is trained straight-through the snap.
    """

    def __init__(self, state_dim: int, space: ParamSpace, rng: np.random.Generator, hidden=(64, 64),
                 actor_lr: float = 1e-3, critic_lr: float = 3e-3, tau: float = 0.005, gamma: float = 0.99,
                 noise_start: float = 0.3, noise_end: float = 0.05, noise_decay_steps: int = 500,
                 state_scale: float = 1.0, reward_scale: float = 1.0):
        self.state_dim = int(state_dim)
        self.space = space
        self.action_dim = len(space.dims)
        self.hidden = tuple(hidden)
        self.tau, self.gamma = float(tau), float(gamma)
        self.noise_start, self.noise_end = float(noise_start), float(noise_end)
        self.noise_decay_steps = int(noise_decay_steps)
        self.state_scale = float(state_scale)
        self.reward_scale = float(reward_scale)
        self.actor = MLP([self.state_dim, *self.hidden, self.action_dim], rng, out_activation="tanh", out_scale=0.1)
        self.critic = MLP([self.state_dim + self.action_dim, *self.hidden, 1], rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, lr=actor_lr)
        self.critic_opt = Adam(self.critic.params, lr=critic_lr)
        self.n_selected = 0
        self.n_updates = 0

    def noise_scale(self) -> float:
        frac = min(self.n_selected / max(self.noise_decay_steps, 1), 1.0)
        return self.noise_start + frac * (self.noise_end - self.noise_start)

    def snap(self, codes: np.ndarray) -> np.ndarray:
        codes = np.clip(np.atleast_2d(codes), -1.0, 1.0)
        if all(d.kind == "continuous" for d in self.space.dims):
            return codes
        return np.array([self.space.encode(self.space.decode(c)) for c in codes])

    def _scaled(self, s):
        return np.asarray(s, dtype=np.float64) * self.state_scale

    def q_values(self, s, a_codes, target: bool = False) -> np.ndarray:
        net = self.critic_target if target else self.critic
        return net(np.concatenate([self._scaled(s), a_codes], axis=-1))[..., 0]

    def descriptor(self) -> dict:
        return {"kind": "teacher", "state_dim": self.state_dim, "space": self.space.to_record(),
                "hidden": list(self.hidden), "tau": self.tau, "gamma": self.gamma,
                "state_scale": self.state_scale, "reward_scale": self.reward_scale}

    def nets(self) -> dict:
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}


def select_action(agent: TeacherAgent, s, explore: bool, rng: np.random.Generator | None = None) -> ParamVector:
    code = agent.actor(agent._scaled(s))
    if explore:
        code = code + agent.noise_scale() * rng.standard_normal(agent.action_dim)
        agent.n_selected += 1
    return agent.space.decode(np.clip(code, -1.0, 1.0))


def critic_loss_and_grads(agent: TeacherAgent, s, a, r, s2, done):
    """Mean squared TD error against frozen targets, and its critic gradients."""
    a2 = agent.snap(agent.actor_target(agent._scaled(s2)))
    y = agent.reward_scale * r + agent.gamma * (1.0 - done) * agent.q_values(s2, a2, target=True)
    x = np.concatenate([agent._scaled(s), a], axis=1)
    q, acts = agent.critic.forward(x)
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    grads, _ = agent.critic.backward(acts, (2.0 / len(err)) * err[:, None])
    return loss, grads


def actor_loss_and_grads(agent: TeacherAgent, s):
    """-mean Q(s, snap(actor(s))), differentiated straight through the snap."""
    xs = agent._scaled(s)
    raw, a_acts = agent.actor.forward(xs)
    a = agent.snap(raw)
    q, c_acts = agent.critic.forward(np.concatenate([xs, a], axis=1))
    loss = -float(np.mean(q))
    _, dx = agent.critic.backward(c_acts, np.full((len(q), 1), -1.0 / len(q)))
    grads, _ = agent.actor.backward(a_acts, dx[:, agent.state_dim:])
    return loss, grads


def soft_update(agent: TeacherAgent, tau: float) -> None:
    agent.actor_target.soft_update_from(agent.actor, tau)
    agent.critic_target.soft_update_from(agent.critic, tau)


def ddpg_update(agent: TeacherAgent, batch: list, gamma: float | None = None, tau: float | None = None,
                rng: np.random.Generator | None = None) -> dict:
    """One critic step, one actor step, one soft target update."""
    if not batch:
        raise CannotTrainError("empty teacher batch")
    if gamma is not None:
        agent.gamma = float(gamma)
    tau = agent.tau if tau is None else float(tau)
    s, a, r, s2, d = stack_batch(batch)
    c_loss, c_grads = critic_loss_and_grads(agent, s, a, r, s2, d)
    if not np.isfinite(c_loss):
        raise TrainingDivergedError("non-finite critic loss")
    agent.critic_opt.step(c_grads)
    a_loss, a_grads = actor_loss_and_grads(agent, s)
    if not np.isfinite(a_loss):
        raise TrainingDivergedError("non-finite actor loss")
    agent.actor_opt.step(a_grads)
    soft_update(agent, tau)
    agent.n_updates += 1
    return {"critic_loss": c_loss, "actor_loss": a_loss}
