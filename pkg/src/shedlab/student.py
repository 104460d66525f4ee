"""PPO student: dense policy/value nets, rollouts, GAE, clipped updates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import core as envcore
from .errors import TrainingDivergedError
from .nn import MLP, Adam

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PPOConfig:
    epochs: int = 4
    minibatches: int = 5
    clip_ratio: float = 0.2
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    lr: float = 1e-3
    max_grad_norm: float = 0.5
    rollout_steps: int | None = None  # None: one rollout spans the whole budget
    normalize_advantages: bool = True

    def __post_init__(self):
        if self.epochs < 1 or self.minibatches < 1:
            raise ValueError("epochs and minibatches must be >= 1")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")

    def updates_per_env(self, budget_steps: int) -> int:
        rollout = self.rollout_steps or budget_steps
        return (budget_steps // rollout) * self.epochs * self.minibatches


class StudentPolicy:
    """Actor-critic pair.  Categorical head for discrete actions,
    tanh-squashed Gaussian for continuous ones (the stored action is the
    pre-squash sample; the env receives its tanh)."""

    LOG_STD_BOUNDS = (-5.0, 1.0)

    def __init__(self, obs_dim: int, act_dim: int, discrete: bool, rng: np.random.Generator,
                 hidden=(64, 64), gamma: float = 0.999, gae_lambda: float = 0.95, lr: float = 1e-3,
                 max_grad_norm: float | None = 0.5):
        self.obs_dim, self.act_dim, self.discrete = int(obs_dim), int(act_dim), bool(discrete)
        self.hidden = tuple(int(h) for h in hidden)
        self.gamma, self.gae_lambda = float(gamma), float(gae_lambda)
        self.pi = MLP([self.obs_dim, *self.hidden, self.act_dim], rng, out_scale=0.01)
        self.vf = MLP([self.obs_dim, *self.hidden, 1], rng)
        self.log_std = np.full(self.act_dim, -0.5) if not self.discrete else np.zeros(0)
        self.optimizer = Adam(self.params, lr=lr, max_grad_norm=max_grad_norm)

    @classmethod
    def for_family(cls, family: str, rng, **kw) -> "StudentPolicy":
        return cls(envcore.obs_dim(family), envcore.action_dim(family),
                   envcore.is_discrete_action(family), rng, **kw)

    @property
    def params(self) -> list:
        return [*self.pi.params, self.log_std, *self.vf.params]

    def num_params(self) -> int:
        return sum(p.size for p in self.params)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        i = 0
        for p in self.params:
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size

    def descriptor(self) -> dict:
        return {"kind": "student", "obs_dim": self.obs_dim, "act_dim": self.act_dim,
                "discrete": self.discrete, "hidden": list(self.hidden),
                "gamma": self.gamma, "gae_lambda": self.gae_lambda}

    @classmethod
    def from_descriptor(cls, desc, flat=None) -> "StudentPolicy":
        pol = cls(desc["obs_dim"], desc["act_dim"], desc["discrete"], np.random.default_rng(0),
                  hidden=desc["hidden"], gamma=desc["gamma"], gae_lambda=desc["gae_lambda"])
        if flat is not None:
            pol.set_flat(flat)
        return pol

    def clamped_log_std(self) -> np.ndarray:
        return np.clip(self.log_std, *self.LOG_STD_BOUNDS)

    def probs(self, obs) -> np.ndarray:
        logits = self.pi(obs)
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)

    def value(self, obs) -> np.ndarray:
        return self.vf(obs)[..., 0]

    def act(self, obs, rng: np.random.Generator | None = None, deterministic: bool = False):
        """Return (env action, stored action, log-prob, value)."""
        out = self.pi(obs)
        v = float(self.vf(obs)[0])
        if self.discrete:
            z = out - out.max()
            logp_all = z - math.log(np.exp(z).sum())
            a = int(np.argmax(out)) if deterministic else int(rng.choice(self.act_dim, p=np.exp(logp_all)))
            return a, a, float(logp_all[a]), v
        log_std = self.clamped_log_std()
        u = out.copy() if deterministic else out + np.exp(log_std) * rng.standard_normal(self.act_dim)
        logp = float(np.sum(-0.5 * ((u - out) / np.exp(log_std)) ** 2 - log_std - 0.5 * LOG_2PI))
        return np.tanh(u), u, logp, v


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray      # true environment terminations
    dones: np.ndarray          # episode boundaries (terminal or truncated)
    values: np.ndarray
    log_probs: np.ndarray
    bootstrap: np.ndarray      # V(s_{t+1}) at truncations, else 0
    last_value: float = 0.0
    episode_returns: list = field(default_factory=list)

    def __len__(self):
        return len(self.rewards)

    def subset(self, idx) -> "RolloutBatch":
        return RolloutBatch(self.observations[idx], self.actions[idx], self.rewards[idx],
                            self.terminals[idx], self.dones[idx], self.values[idx],
                            self.log_probs[idx], self.bootstrap[idx], self.last_value)


def collect_rollout(policy: StudentPolicy, env, steps: int, rng: np.random.Generator,
                    deterministic: bool = False, reset_first: bool = False) -> RolloutBatch:
    """Run ``policy`` for ``steps`` ticks, resetting the env at episode ends."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if reset_first or env.done:
        obs = env.reset(int(rng.integers(2**31)))
    else:
        obs = env.observation()
    obs_l, act_l, rew, term, done, val, logp, boot = [], [], [], [], [], [], [], []
    ep_ret, returns = 0.0, []
    for _ in range(steps):
        a_env, a_store, lp, v = policy.act(obs, rng, deterministic)
        res = env.step(a_env)
        obs_l.append(obs)
        act_l.append(a_store)
        rew.append(res.reward)
        term.append(res.terminal)
        done.append(res.terminal or res.truncated)
        val.append(v)
        logp.append(lp)
        boot.append(float(policy.value(res.observation)) if res.truncated else 0.0)
        ep_ret += res.reward
        if res.terminal or res.truncated:
            returns.append(ep_ret)
            ep_ret = 0.0
            obs = env.reset(int(rng.integers(2**31)))
        else:
            obs = res.observation
    last_value = 0.0 if env.done else float(policy.value(obs))
    acts = np.array(act_l, dtype=np.int64 if policy.discrete else np.float64)
    return RolloutBatch(np.array(obs_l), acts, np.array(rew), np.array(term), np.array(done),
                        np.array(val), np.array(logp), np.array(boot), last_value, returns)


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0,
                bootstrap=None):
    """Generalized advantage estimation.

    ``values`` may have length n (then ``last_value`` bootstraps the final
    step) or n + 1.  ``dones[t]`` cuts the recursion after step t; the
    next-state value there is ``bootstrap[t]`` (0 for true terminals).
    Returns (advantages, returns).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    n = len(rewards)
    if n == 0:
        raise ValueError("empty batch")
    if len(values) == n + 1:
        last_value = float(values[-1])
        values = values[:n]
    dones = np.zeros(n, dtype=bool) if dones is None else np.asarray(dones, dtype=bool)
    bootstrap = np.zeros(n) if bootstrap is None else np.asarray(bootstrap, dtype=np.float64)
    adv = np.zeros(n)
    gae = 0.0
    for t in reversed(range(n)):
        if dones[t]:
            next_v, carry = bootstrap[t], 0.0
        else:
            next_v = values[t + 1] if t + 1 < n else last_value
            carry = gae
        delta = rewards[t] + gamma * next_v - values[t]
        gae = delta + gamma * lam * carry
        adv[t] = gae
    return adv, adv + values


def gae_for_batch(batch: RolloutBatch, gamma: float, lam: float):
    return compute_gae(batch.rewards, batch.values, batch.dones, gamma, lam,
                       batch.last_value, batch.bootstrap)


def ppo_loss_and_grads(policy: StudentPolicy, obs, actions, old_logp, advantages, returns,
                       config: PPOConfig):
    """Clipped-surrogate loss plus value loss minus entropy bonus, with exact gradients.

    Returns (total loss, grads aligned with ``policy.params``, metrics).
    """
    n = len(obs)
    adv = np.asarray(advantages, dtype=np.float64)
    if config.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    out, pi_acts = policy.pi.forward(obs)
    v_out, v_acts = policy.vf.forward(obs)
    values = v_out[:, 0]

    if policy.discrete:
        z = out - out.max(axis=1, keepdims=True)
        logp_all = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        p = np.exp(logp_all)
        idx = np.asarray(actions, dtype=np.int64)
        logp = logp_all[np.arange(n), idx]
        ent = -(p * logp_all).sum(axis=1)
    else:
        log_std = policy.clamped_log_std()
        std = np.exp(log_std)
        u = np.asarray(actions, dtype=np.float64).reshape(n, -1)
        zs = (u - out) / std
        logp = np.sum(-0.5 * zs ** 2 - log_std - 0.5 * LOG_2PI, axis=1)
        ent = np.full(n, np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))

    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio)
    surr1, surr2 = ratio * adv, clipped * adv
    pi_loss = -np.mean(np.minimum(surr1, surr2))
    v_loss = 0.5 * np.mean((values - returns) ** 2)
    entropy = np.mean(ent)
    loss = pi_loss + config.vf_coef * v_loss - config.ent_coef * entropy

    # d(loss)/d(logp): only the unclipped branch carries gradient
    active = surr1 <= surr2
    d_logp = -(active * surr1) / n

    if policy.discrete:
        onehot = np.zeros_like(p)
        onehot[np.arange(n), idx] = 1.0
        d_out = d_logp[:, None] * (onehot - p)
        # dH/dlogits_j = -p_j (log p_j + H)
        d_out += (config.ent_coef / n) * p * (logp_all + ent[:, None])
        d_log_std = np.zeros(0)
    else:
        d_out = d_logp[:, None] * (zs / std)
        d_ls = np.sum(d_logp[:, None] * (zs ** 2 - 1.0), axis=0) - config.ent_coef
        inside = (policy.log_std >= policy.LOG_STD_BOUNDS[0]) & (policy.log_std <= policy.LOG_STD_BOUNDS[1])
        d_log_std = d_ls * inside
    pi_grads, _ = policy.pi.backward(pi_acts, d_out)
    d_v = (config.vf_coef / n) * (values - returns)
    vf_grads, _ = policy.vf.backward(v_acts, d_v[:, None])
    metrics = {"policy_loss": float(pi_loss), "value_loss": float(v_loss), "entropy": float(entropy),
               "clip_frac": float(np.mean(np.abs(ratio - 1.0) > config.clip_ratio))}
    return float(loss), [*pi_grads, d_log_std, *vf_grads], metrics


def ppo_update(policy: StudentPolicy, batch: RolloutBatch, config: PPOConfig,
               rng: np.random.Generator, advantages=None, returns=None) -> dict:
    """``epochs x minibatches`` clipped-surrogate steps on ``batch``."""
    n = len(batch)
    if n < config.minibatches:
        raise ValueError(f"batch of {n} is smaller than {config.minibatches} minibatches")
    if advantages is None:
        advantages, returns = gae_for_batch(batch, policy.gamma, policy.gae_lambda)
    sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0}
    updates = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for j, idx in enumerate(np.array_split(perm, config.minibatches)):
            loss, grads, m = ppo_loss_and_grads(
                policy, batch.observations[idx], batch.actions[idx], batch.log_probs[idx],
                advantages[idx], returns[idx], config)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError("non-finite PPO loss", minibatch=updates)
            policy.optimizer.step(grads)
            for k in sums:
                sums[k] += m[k]
            updates += 1
    out = {k: v / updates for k, v in sums.items()}
    out["updates"] = updates
    return out


def train_in_env(policy: StudentPolicy, env, budget_steps: int, config: PPOConfig,
                 rng: np.random.Generator) -> dict:
    """Alternate rollout / GAE / PPO update until ``budget_steps`` env steps are spent."""
    rollout = config.rollout_steps or budget_steps
    if budget_steps < rollout:
        raise ValueError("budget must cover at least one rollout")
    env.reset(int(rng.integers(2**31)))
    updates, steps = 0, 0
    returns, last_batch, last_adv, last_ret, metrics = [], None, None, None, {}
    while steps + rollout <= budget_steps:
        batch = collect_rollout(policy, env, rollout, rng)
        adv, ret = gae_for_batch(batch, policy.gamma, policy.gae_lambda)
        metrics = ppo_update(policy, batch, config, rng, adv, ret)
        updates += metrics["updates"]
        steps += rollout
        returns.extend(batch.episode_returns)
        last_batch, last_adv, last_ret = batch, adv, ret
    return {"updates": updates, "steps": steps, "episode_returns": returns,
            "mean_return": float(np.mean(returns)) if returns else float("nan"),
            "batch": last_batch, "advantages": last_adv, "returns": last_ret,
            "policy_loss": metrics.get("policy_loss"), "value_loss": metrics.get("value_loss"),
            "entropy": metrics.get("entropy")}


def run_episode(policy: StudentPolicy, env, seed: int, deterministic: bool = True,
                rng: np.random.Generator | None = None) -> float:
    obs = env.reset(seed)
    total = 0.0
    while True:
        a, _, _, _ = policy.act(obs, rng, deterministic=deterministic)
        res = env.step(a)
        total += res.reward
        if res.terminal or res.truncated:
            return total
        obs = res.observation


def evaluate_policy(policy: StudentPolicy, env_params, family: str, episodes: int, seed: int,
                    env_seed: int | None = None, deterministic: bool = True) -> float:
    """Mean undiscounted return over ``episodes`` seeded episodes.

    ``env_seed`` fixes the instance (maze layout); it defaults to ``seed``.
    With ``deterministic=False`` actions are sampled from a generator seeded
    by ``seed``, so the estimate is still reproducible.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = envcore.make_env(family, env_params, seed if env_seed is None else env_seed)
    rng = None if deterministic else np.random.default_rng(seed)
    return float(np.mean([run_episode(policy, env, seed + i, deterministic, rng) for i in range(episodes)]))
