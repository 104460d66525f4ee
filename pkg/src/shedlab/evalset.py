"""Fixed evaluation environments and the performance-vector representation.

A student policy is summarised by its mean return on each of ``m`` fixed
environments.  The grid construction places one representative at the
centre of each cell of a per-dim partition; under a per-dim Lipschitz
assumption on performance, the representative's return is within
``sum_i L_i * delta_i / 2`` of the return anywhere in its cell.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .envs import core as envcore
from .envs.params import CONTINUOUS, ParamSpace, ParamVector, sample_params
from .errors import CoverageViolationError, InvalidDeltaError, TooManyEnvironmentsError
from .student import evaluate_policy

SEPARATION = 1e-3


@dataclass(frozen=True)
class IntervalGrid:
    space: ParamSpace
    deltas: tuple          # per-dim spacing (1 level for discrete dims)
    midpoints: tuple       # per-dim tuple of representative values

    @property
    def sizes(self) -> tuple:
        return tuple(len(m) for m in self.midpoints)

    @property
    def n_combinations(self) -> int:
        return int(np.prod(self.sizes, dtype=object))

    def intervals(self, dim: int) -> list:
        """Open intervals (mid - delta, mid + delta) around each midpoint."""
        d = self.deltas[dim]
        return [(m - d, m + d) for m in self.midpoints[dim]]

    def combination(self, flat_index: int) -> ParamVector:
        idx = np.unravel_index(int(flat_index), self.sizes)
        return ParamVector(self.space, tuple(self.midpoints[i][j] for i, j in enumerate(idx)))

    def covering_midpoints(self, points: np.ndarray) -> np.ndarray:
        """Nearest midpoint per coordinate for continuous-only grids."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        out = np.empty_like(pts)
        for i, mids in enumerate(self.midpoints):
            mids = np.asarray(mids, dtype=np.float64)
            j = np.abs(pts[:, i, None] - mids[None, :]).argmin(axis=1)
            out[:, i] = mids[j]
            if np.any(np.abs(pts[:, i] - out[:, i]) >= self.deltas[i]):
                raise CoverageViolationError(f"dim {self.space.dims[i].name!r}: probe outside every interval")
        return out


def build_interval_grid(space: ParamSpace, deltas) -> IntervalGrid:
    """Midpoints ``low + (2j-1)/2 * delta`` for j = 1, 2, ... up to ``high - delta/2``.

    When the range is not a multiple of delta a last midpoint is pinned at
    ``high - delta/2`` so the intervals still reach ``high``.  Discrete dims
    use their level set directly (``delta`` ignored, may be None).
    """
    if len(deltas) != len(space.dims):
        raise InvalidDeltaError(f"need {len(space.dims)} deltas, got {len(deltas)}")
    mids, used = [], []
    for d, delta in zip(space.dims, deltas):
        if d.kind != CONTINUOUS:
            mids.append(tuple(d.levels))
            used.append(1.0)
            continue
        delta = float(delta)
        width = d.high - d.low
        if not 0.0 < delta <= width * (1 + 1e-12):
            raise InvalidDeltaError(f"dim {d.name!r}: delta must lie in (0, {width}], got {delta}")
        tol = 1e-9 * width
        last = d.high - delta / 2
        pts = []
        j = 1
        while d.low + (2 * j - 1) / 2 * delta <= last + tol:
            pts.append(d.low + (2 * j - 1) / 2 * delta)
            j += 1
        if last - pts[-1] > tol:
            pts.append(last)
        mids.append(tuple(pts))
        used.append(delta)
    return IntervalGrid(space, tuple(used), tuple(mids))


@dataclass(frozen=True)
class EvalSet:
    family: str
    params: tuple          # ParamVectors, order fixed
    env_seeds: tuple       # per-environment instance seeds (maze layouts)
    mode: str
    seed: int

    def __len__(self):
        return len(self.params)

    def __iter__(self):
        return iter(zip(self.params, self.env_seeds))

    def to_record(self) -> dict:
        return {"family": self.family, "mode": self.mode, "seed": self.seed, "m": len(self),
                "rows": [list(p.values) for p in self.params], "env_seeds": list(self.env_seeds)}

    @classmethod
    def from_record(cls, rec: dict) -> "EvalSet":
        space = envcore.param_space(rec["family"])
        params = tuple(space.vector(r) for r in rec["rows"])
        if len(params) != rec.get("m", len(params)):
            raise ValueError("record row count disagrees with m")
        return cls(rec["family"], params, tuple(int(s) for s in rec["env_seeds"]), rec["mode"], int(rec["seed"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "EvalSet":
        with open(path) as fh:
            return cls.from_record(json.load(fh))


def same_env(a: ParamVector, b: ParamVector) -> bool:
    """Identity test used for disjointness: exact on discrete dims, within
    ``SEPARATION * range`` (L-inf) on continuous ones."""
    for d, x, y in zip(a.space.dims, a.values, b.values):
        if d.kind == CONTINUOUS:
            if abs(x - y) >= SEPARATION * (d.high - d.low):
                return False
        elif x != y:
            return False
    return True


def collides(pv: ParamVector, others) -> bool:
    return any(same_env(pv, o) for o in others)


def default_deltas(space: ParamSpace, cells_per_dim: int = 4) -> list:
    return [None if d.kind != CONTINUOUS else (d.high - d.low) / cells_per_dim for d in space.dims]


def build_eval_set(space: ParamSpace, family: str, m: int, mode: str, rng: np.random.Generator,
                   seed: int = 0, deltas=None, exclude=()) -> EvalSet:
    """``m`` distinct environments: grid midpoint combinations ("grid") or uniform draws ("random").

    Vectors colliding with ``exclude`` or that cannot be instantiated are skipped.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    exclude = list(exclude)
    chosen: list[ParamVector] = []
    if mode == "grid":
        grid = build_interval_grid(space, deltas if deltas is not None else default_deltas(space))
        total = grid.n_combinations
        usable = [i for i in range(total)] if total <= 200_000 else None
        if usable is not None:
            order = rng.permutation(total)
            for i in order:
                pv = grid.combination(int(i))
                if not envcore.params_feasible(family, pv) or collides(pv, exclude) or collides(pv, chosen):
                    continue
                chosen.append(pv)
                if len(chosen) == m:
                    break
        else:
            tries = 0
            while len(chosen) < m and tries < 100 * m:
                tries += 1
                pv = grid.combination(int(rng.integers(total)))
                if envcore.params_feasible(family, pv) and not collides(pv, exclude) and not collides(pv, chosen):
                    chosen.append(pv)
        if len(chosen) < m:
            raise TooManyEnvironmentsError(f"only {len(chosen)} usable grid combinations, {m} requested")
    elif mode == "random":
        tries = 0
        while len(chosen) < m:
            tries += 1
            if tries > 1000 * m:
                raise TooManyEnvironmentsError(f"could not draw {m} distinct environments")
            pv = sample_params(space, rng)
            if envcore.params_feasible(family, pv) and not collides(pv, exclude) and not collides(pv, chosen):
                chosen.append(pv)
    else:
        raise ValueError(f"unknown eval-set mode {mode!r}")
    env_seeds = tuple(int(s) for s in rng.integers(0, 2**31 - 1, size=m))
    return EvalSet(family, tuple(chosen), env_seeds, mode, int(seed))


def perf_vector(policy, eval_set: EvalSet, episodes_per_env: int = 3, seed: int = 0,
                deterministic: bool = True) -> np.ndarray:
    """Mean return on each evaluation environment, in set order (greedy unless
    ``deterministic=False``, in which case actions are sampled reproducibly)."""
    if episodes_per_env < 1:
        raise ValueError("episodes_per_env must be >= 1")
    return np.array([
        evaluate_policy(policy, pv, eval_set.family, episodes_per_env, seed=seed + 1000 * i, env_seed=es,
                        deterministic=deterministic)
        for i, (pv, es) in enumerate(eval_set)])


def verify_representation_bound(perf_fn, grid: IntervalGrid, probe_count: int,
                                rng: np.random.Generator) -> float:
    """Largest |perf(probe) - perf(covering midpoint)| over uniform probes.

    ``perf_fn`` maps an (n, d) array of continuous parameter points to n values.
    """
    lows = np.array([d.low for d in grid.space.dims])
    highs = np.array([d.high for d in grid.space.dims])
    probes = rng.uniform(lows, highs, size=(int(probe_count), len(lows)))
    reps = grid.covering_midpoints(probes)
    return float(np.max(np.abs(np.asarray(perf_fn(probes)) - np.asarray(perf_fn(reps)))))


def analytic_bound(lipschitz, grid: IntervalGrid) -> float:
    return float(np.sum(np.asarray(lipschitz) * np.asarray(grid.deltas)))
