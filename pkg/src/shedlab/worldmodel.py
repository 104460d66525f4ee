"""Conditional denoising diffusion over teacher transitions.

The next performance vector ``s'`` is generated from noise conditioned on
``(s, a)``; an optional second model generates actions conditioned on ``s``.
All diffusion happens in a normalised space where each state dim is mapped
affinely from its observed buffer range onto [-1, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .envs.params import ParamSpace, sample_params
from .errors import InvalidScheduleError, NoRealDataError, TrainingDivergedError
from .nn import MLP, Adam
from .teacher import SYNTHETIC, RewardConfig, TeacherTransition, teacher_reward


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray
    beta_min: float
    beta_max: float

    @property
    def K(self) -> int:
        return len(self.betas)

    # 1-based accessors matching the usual k = 1..K indexing
    def beta(self, k):
        return self.betas[np.asarray(k) - 1]

    def alpha(self, k):
        return self.alphas[np.asarray(k) - 1]

    def alpha_bar(self, k):
        return self.alpha_bars[np.asarray(k) - 1]


def make_schedule(K: int = 5, beta_min: float = 0.1, beta_max: float = 10.0) -> DiffusionSchedule:
    """Discretised variance-preserving schedule:

        beta_k = 1 - exp(beta_min / K - (beta_max - beta_min) * (2k - 1) / (2 K^2))
    """
    if K < 1:
        raise InvalidScheduleError("K must be >= 1")
    if not 0 < beta_min < beta_max:
        raise InvalidScheduleError("need 0 < beta_min < beta_max")
    k = np.arange(1, K + 1, dtype=np.float64)
    betas = 1.0 - np.exp(beta_min / K - 0.5 * (beta_max - beta_min) * (2 * k - 1) / K ** 2)
    if not np.all((betas > 0) & (betas < 1)):
        raise InvalidScheduleError(f"schedule (K={K}, {beta_min}, {beta_max}) gives betas outside (0, 1)")
    alphas = 1.0 - betas
    return DiffusionSchedule(betas, alphas, np.cumprod(alphas), float(beta_min), float(beta_max))


def forward_sample(x0, k, eps, schedule: DiffusionSchedule) -> np.ndarray:
    """Closed-form q(x_k | x_0) draw: sqrt(abar_k) x0 + sqrt(1 - abar_k) eps."""
    ab = schedule.alpha_bar(k)
    if np.ndim(ab):
        ab = ab.reshape(-1, *([1] * (np.ndim(x0) - 1)))
    return np.sqrt(ab) * np.asarray(x0) + np.sqrt(1.0 - ab) * np.asarray(eps)


def time_embedding(k, K: int) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    phase = 2.0 * np.pi * k / K
    return np.stack([k / K, np.sin(phase), np.cos(phase)], axis=-1)


class Normalizer:
    """Per-dim affine map of an observed range onto [-1, 1]."""

    def __init__(self, low, high):
        self.low = np.asarray(low, dtype=np.float64).copy()
        high = np.asarray(high, dtype=np.float64)
        span = high - self.low
        # degenerate dims: centre on the value, unit half-width
        self.half = np.where(span > 1e-12, span / 2.0, 1.0)
        self.mid = np.where(span > 1e-12, self.low + span / 2.0, self.low)

    @classmethod
    def fit(cls, data) -> "Normalizer":
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        return cls(data.min(axis=0), data.max(axis=0))

    def __call__(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mid) / self.half

    def inverse(self, z):
        return np.asarray(z, dtype=np.float64) * self.half + self.mid

    def to_record(self):
        return {"mid": self.mid.tolist(), "half": self.half.tolist()}

    @classmethod
    def from_record(cls, rec):
        n = cls.__new__(cls)
        n.mid = np.asarray(rec["mid"], dtype=np.float64)
        n.half = np.asarray(rec["half"], dtype=np.float64)
        n.low = n.mid - n.half
        return n


class EpsilonNet:
    """Noise predictor eps(x_k, cond, k) as a dense net over the concatenated inputs."""

    def __init__(self, target_dim: int, cond_dim: int, K: int, rng: np.random.Generator, hidden=(128, 128)):
        self.target_dim, self.cond_dim, self.K = int(target_dim), int(cond_dim), int(K)
        self.hidden = tuple(hidden)
        self.net = MLP([self.target_dim + self.cond_dim + 3, *self.hidden, self.target_dim], rng)

    @property
    def params(self):
        return self.net.params

    def inputs(self, x_k, cond, k) -> np.ndarray:
        x_k = np.atleast_2d(x_k)
        cond = np.atleast_2d(cond)
        emb = time_embedding(k, self.K)
        if len(emb) == 1 and len(x_k) > 1:
            emb = np.repeat(emb, len(x_k), axis=0)
        return np.concatenate([x_k, cond, emb], axis=1)

    def forward(self, x_k, cond, k):
        return self.net.forward(self.inputs(x_k, cond, k))

    def __call__(self, x_k, cond, k):
        return self.forward(x_k, cond, k)[0]

    def backward(self, cache, d_out):
        return self.net.backward(cache, d_out)[0]

    def descriptor(self):
        return {"target_dim": self.target_dim, "cond_dim": self.cond_dim, "K": self.K, "hidden": list(self.hidden)}


def diffusion_loss(net, x0, cond, schedule: DiffusionSchedule, rng: np.random.Generator | None = None,
                   ks=None, eps=None):
    """Simplified denoising objective mean ||eps - eps_hat(x_k, cond, k)||^2 and its gradients.

    ``ks`` and ``eps`` are drawn from ``rng`` unless given.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    n = len(x0)
    if n == 0:
        raise ValueError("empty batch")
    if ks is None:
        ks = rng.integers(1, schedule.K + 1, size=n)
    if eps is None:
        eps = rng.standard_normal(x0.shape)
    x_k = forward_sample(x0, ks, eps, schedule)
    pred, cache = net.forward(x_k, cond, ks)
    diff = pred - eps
    loss = float(np.mean(np.sum(diff * diff, axis=1)))
    if not np.isfinite(loss):
        raise TrainingDivergedError("non-finite diffusion loss")
    grads = net.backward(cache, (2.0 / n) * diff)
    return loss, grads


def reverse_step(net, x_k, cond, k: int, schedule: DiffusionSchedule, rng: np.random.Generator | None = None):
    """One ancestral step x_k -> x_{k-1} with fixed variance beta_k; no noise at k = 1."""
    x_k = np.atleast_2d(x_k)
    beta, alpha, ab = schedule.beta(k), schedule.alpha(k), schedule.alpha_bar(k)
    eps_hat = net(x_k, cond, np.full(len(x_k), k))
    mean = (x_k - beta * eps_hat / math.sqrt(1.0 - ab)) / math.sqrt(alpha)
    if k == 1:
        return mean
    return mean + math.sqrt(beta) * rng.standard_normal(x_k.shape)


def sample_chain(net, cond, schedule: DiffusionSchedule, rng: np.random.Generator, target_dim: int) -> np.ndarray:
    cond = np.atleast_2d(cond)
    x = rng.standard_normal((len(cond), target_dim))
    for k in range(schedule.K, 0, -1):
        x = reverse_step(net, x, cond, k, schedule, rng)
    return x


class ConditionalDiffusion:
    """A schedule, a noise predictor, its optimizer and the target-space normaliser."""

    def __init__(self, target_dim: int, cond_dim: int, rng: np.random.Generator, K: int = 5,
                 beta_min: float = 0.1, beta_max: float = 10.0, hidden=(128, 128), lr: float = 3e-4):
        self.schedule = make_schedule(K, beta_min, beta_max)
        self.net = EpsilonNet(target_dim, cond_dim, K, rng, hidden)
        self.optimizer = Adam(self.net.params, lr=lr)
        self.target_norm: Normalizer | None = None
        self.n_steps = 0

    @property
    def trained(self) -> bool:
        return self.n_steps > 0

    def fit_step(self, target, cond, rng) -> float:
        """One Adam step on (already normalised) targets and conditions."""
        loss, grads = diffusion_loss(self.net, target, cond, self.schedule, rng)
        self.optimizer.step(grads)
        self.n_steps += 1
        return loss

    def sample_normalized(self, cond, rng) -> np.ndarray:
        return sample_chain(self.net, cond, self.schedule, rng, self.net.target_dim)


class WorldModel:
    """Generates s' given (s, a); states and next states share one normaliser."""

    def __init__(self, state_dim: int, space: ParamSpace, rng: np.random.Generator, K: int = 5,
                 beta_min: float = 0.1, beta_max: float = 10.0, hidden=(128, 128), lr: float = 3e-4):
        self.state_dim = int(state_dim)
        self.space = space
        self.model = ConditionalDiffusion(state_dim, state_dim + len(space.dims), rng, K, beta_min,
                                          beta_max, hidden, lr)
        self.norm: Normalizer | None = None

    @property
    def schedule(self):
        return self.model.schedule

    @property
    def net(self):
        return self.model.net

    @property
    def trained(self) -> bool:
        return self.model.trained

    def refit_normalizer(self, states, next_states) -> None:
        self.norm = Normalizer.fit(np.vstack([states, next_states]))

    def cond(self, s, a_codes) -> np.ndarray:
        return np.concatenate([self.norm(np.atleast_2d(s)), np.atleast_2d(a_codes)], axis=1)

    def train(self, s, a_codes, s_next, steps: int, batch_size: int, rng: np.random.Generator) -> float:
        """Refit the normaliser on the given data, then ``steps`` minibatch updates."""
        s = np.atleast_2d(s)
        s_next = np.atleast_2d(s_next)
        a_codes = np.atleast_2d(a_codes)
        if len(s) == 0:
            raise NoRealDataError("no transitions to train the world model on")
        self.refit_normalizer(s, s_next)
        cond = self.cond(s, a_codes)
        target = self.norm(s_next)
        loss = float("nan")
        for _ in range(steps):
            idx = rng.integers(len(s), size=batch_size)
            loss = self.model.fit_step(target[idx], cond[idx], rng)
        return loss

    def train_on_buffer(self, buffer, steps: int, batch_size: int, rng) -> float:
        items = list(buffer.items)
        if not items:
            raise NoRealDataError("real buffer is empty")
        s = np.array([t.state for t in items])
        a = np.array([t.action_code for t in items])
        s2 = np.array([t.next_state for t in items])
        return self.train(s, a, s2, steps, batch_size, rng)

    def sample(self, s, a_codes, rng: np.random.Generator) -> np.ndarray:
        z = self.model.sample_normalized(self.cond(s, a_codes), rng)
        return self.norm.inverse(z)


def sample_next_state(model: WorldModel, s, a_codes, rng) -> np.ndarray:
    out = model.sample(s, a_codes, rng)
    return out[0] if np.ndim(s) == 1 else out


class ActionModel:
    """Behaviour-cloning diffusion over action codes conditioned on s."""

    def __init__(self, state_dim: int, space: ParamSpace, rng: np.random.Generator, K: int = 5,
                 beta_min: float = 0.1, beta_max: float = 10.0, hidden=(128, 128), lr: float = 3e-4):
        self.space = space
        self.model = ConditionalDiffusion(len(space.dims), state_dim, rng, K, beta_min, beta_max, hidden, lr)
        self.norm: Normalizer | None = None

    @property
    def trained(self):
        return self.model.trained

    def train(self, s, a_codes, steps: int, batch_size: int, rng) -> float:
        s = np.atleast_2d(s)
        self.norm = Normalizer.fit(s)
        cond = self.norm(s)
        a_codes = np.atleast_2d(a_codes)
        loss = float("nan")
        for _ in range(steps):
            idx = rng.integers(len(s), size=batch_size)
            loss = self.model.fit_step(a_codes[idx], cond[idx], rng)
        return loss

    def sample_codes(self, s, rng) -> np.ndarray:
        return np.clip(self.model.sample_normalized(self.norm(np.atleast_2d(s)), rng), -1.0, 1.0)

    def sample(self, s, rng) -> list:
        return [self.space.decode(c) for c in self.sample_codes(s, rng)]


def action_diffusion_train(model: ActionModel, s, a_codes, steps, batch_size, rng) -> float:
    return model.train(s, a_codes, steps, batch_size, rng)


def action_diffusion_sample(model: ActionModel, s, rng) -> list:
    return model.sample(s, rng)


def gen_synthetic(model: WorldModel, b_real, reward_config: RewardConfig, count: int,
                  rng: np.random.Generator, action_source: str = "random",
                  action_model: ActionModel | None = None) -> list:
    """Synthetic teacher transitions: real states, fresh actions, generated next states,
    rewards recomputed with the teacher's reward function."""
    if count <= 0:
        return []
    if len(b_real) == 0:
        raise NoRealDataError("cannot synthesise transitions without real data")
    states = b_real.states()[rng.integers(len(b_real), size=count)]
    if action_source == "random":
        actions = [sample_params(model.space, rng) for _ in range(count)]
    elif action_source == "action_diffusion":
        if action_model is None or not action_model.trained:
            raise ValueError("action_diffusion requires a trained ActionModel")
        actions = action_model.sample(states, rng)
    else:
        raise ValueError(f"unknown action source {action_source!r}")
    codes = np.array([a.encode() for a in actions])
    nxt = model.sample(states, codes, rng)
    out = []
    for s, a, c, s2 in zip(states, actions, codes, nxt):
        out.append(TeacherTransition(s, a, teacher_reward(s, s2, reward_config), s2, SYNTHETIC,
                                     action_code=c))
    return out
