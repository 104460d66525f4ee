"""Reference teachers: domain randomisation and ACCEL-style level replay."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs.params import ParamSpace, ParamVector, mutate_params, sample_params
from .student import RolloutBatch, gae_for_batch

FRESH, REPLAYED = "fresh", "replayed-mutated"


def dr_next(space: ParamSpace, rng: np.random.Generator) -> ParamVector:
    return sample_params(space, rng)


@dataclass
class LevelEntry:
    params: ParamVector
    score: float
    visits: int = 0
    episode: int = 0


class LevelBuffer:
    """Score-ranked store of past levels; the lowest score is evicted when full."""

    def __init__(self, capacity: int = 256, replay_prob: float = 0.5, temperature: float = 0.3):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        if not 0.0 <= replay_prob <= 1.0:
            raise ValueError("replay_prob must lie in [0, 1]")
        self.capacity = int(capacity)
        self.replay_prob = float(replay_prob)
        self.temperature = float(temperature)
        self.entries: list[LevelEntry] = []

    def __len__(self):
        return len(self.entries)

    def add(self, params: ParamVector, score: float, episode: int = 0) -> None:
        if not np.isfinite(score):
            raise ValueError("level score must be finite")
        self.entries.append(LevelEntry(params, float(score), 0, int(episode)))
        if len(self.entries) > self.capacity:
            worst = min(range(len(self.entries)), key=lambda i: self.entries[i].score)
            self.entries.pop(worst)

    def rank_probs(self) -> np.ndarray:
        """P(i) proportional to (1 / rank_i) ** (1 / temperature), rank 1 = highest score."""
        scores = np.array([e.score for e in self.entries])
        order = np.argsort(-scores, kind="stable")
        ranks = np.empty(len(scores))
        ranks[order] = np.arange(1, len(scores) + 1)
        w = (1.0 / ranks) ** (1.0 / self.temperature)
        return w / w.sum()

    def clear(self) -> None:
        self.entries.clear()


def accel_next(buffer: LevelBuffer, space: ParamSpace, rng: np.random.Generator,
               edit_strength: float = 0.1):
    """Mutate a rank-sampled stored level with probability rho, else sample fresh.

    Returns (params, provenance dict).
    """
    if len(buffer) and rng.random() < buffer.replay_prob:
        i = int(rng.choice(len(buffer), p=buffer.rank_probs()))
        entry = buffer.entries[i]
        entry.visits += 1
        child = mutate_params(entry.params, rng, edit_strength)
        return child, {"kind": REPLAYED, "source": list(entry.params.values), "source_score": entry.score}
    return sample_params(space, rng), {"kind": FRESH}


def accel_score(returns, values=None, gamma: float = 0.999, lam: float = 0.95) -> float:
    """Positive value loss: mean of max(return_t - V_t, 0).

    Accepts either (returns, values) arrays or a RolloutBatch, whose GAE
    returns are computed with ``gamma`` and ``lam``.
    """
    if isinstance(returns, RolloutBatch):
        batch = returns
        _, returns = gae_for_batch(batch, gamma, lam)
        values = batch.values
    returns = np.asarray(returns, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if returns.size == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.maximum(returns - values, 0.0)))


def reset_on_episode(buffer: LevelBuffer | None, policy_name: str) -> None:
    """ACCEL-Edit forgets its levels at each teacher episode; ACCEL keeps them."""
    if buffer is not None and policy_name == "accel-edit":
        buffer.clear()
