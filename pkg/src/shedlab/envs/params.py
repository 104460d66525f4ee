"""Environment design spaces and the points in them."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..errors import InvalidParameterError

CONTINUOUS = "continuous"
DISCRETE = "discrete"


@dataclass(frozen=True)
class Dim:
    name: str
    kind: str
    low: float = 0.0
    high: float = 1.0
    levels: tuple = ()

    def __post_init__(self):
        if self.kind == CONTINUOUS:
            if not float(self.low) < float(self.high):
                raise InvalidParameterError(self.name, f"dim {self.name!r}: need low < high, got [{self.low}, {self.high}]")
        elif self.kind == DISCRETE:
            if len(self.levels) == 0:
                raise InvalidParameterError(self.name, f"dim {self.name!r}: empty level set")
        else:
            raise InvalidParameterError(self.name, f"dim {self.name!r}: unknown kind {self.kind!r}")

    @property
    def width(self) -> float:
        return float(self.high - self.low) if self.kind == CONTINUOUS else float(len(self.levels) - 1)

    def contains(self, value) -> bool:
        if self.kind == CONTINUOUS:
            try:
                v = float(value)
            except (TypeError, ValueError):
                return False
            return bool(np.isfinite(v)) and self.low <= v <= self.high
        return value in self.levels

    def encode(self, value) -> float:
        """Map a value to [-1, 1]."""
        if self.kind == CONTINUOUS:
            return 2.0 * (float(value) - self.low) / (self.high - self.low) - 1.0
        n = len(self.levels)
        if n == 1:
            return 0.0
        return 2.0 * self.levels.index(value) / (n - 1) - 1.0

    def decode(self, x: float):
        """Inverse of ``encode``; clamps, and snaps discrete dims to the nearest level."""
        x = float(np.clip(x, -1.0, 1.0))
        if self.kind == CONTINUOUS:
            return float(np.clip(self.low + (x + 1.0) * 0.5 * (self.high - self.low), self.low, self.high))
        n = len(self.levels)
        idx = int(np.floor((x + 1.0) * 0.5 * (n - 1) + 0.5))
        return self.levels[min(max(idx, 0), n - 1)]


def continuous(name, low, high) -> Dim:
    return Dim(name, CONTINUOUS, float(low), float(high))


def discrete(name, levels) -> Dim:
    return Dim(name, DISCRETE, levels=tuple(levels))


@dataclass(frozen=True)
class ParamSpace:
    dims: tuple
    name: str = ""

    def __post_init__(self):
        if len(self.dims) < 1:
            raise InvalidParameterError(None, "a parameter space needs at least one dim")
        object.__setattr__(self, "dims", tuple(self.dims))

    def __len__(self):
        return len(self.dims)

    @property
    def names(self):
        return [d.name for d in self.dims]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def vector(self, values: Sequence | dict) -> "ParamVector":
        if isinstance(values, dict):
            unknown = set(values) - set(self.names)
            if unknown:
                raise InvalidParameterError(sorted(unknown)[0], f"unknown parameter(s) {sorted(unknown)}")
            missing = [n for n in self.names if n not in values]
            if missing:
                raise InvalidParameterError(missing[0], f"missing parameter(s) {missing}")
            values = [values[n] for n in self.names]
        return ParamVector(self, tuple(values))

    def encode(self, pv: "ParamVector") -> np.ndarray:
        return np.array([d.encode(v) for d, v in zip(self.dims, pv.values)])

    def decode(self, x) -> "ParamVector":
        x = np.asarray(x, dtype=np.float64).ravel()
        if x.size != len(self.dims):
            raise InvalidParameterError(None, f"expected {len(self.dims)} coordinates, got {x.size}")
        return ParamVector(self, tuple(d.decode(xi) for d, xi in zip(self.dims, x)))

    def center(self) -> "ParamVector":
        return self.decode(np.zeros(len(self.dims)))

    @property
    def all_discrete(self) -> bool:
        return all(d.kind == DISCRETE for d in self.dims)

    def to_record(self) -> dict:
        return {"name": self.name, "dims": [
            {"name": d.name, "kind": d.kind, "low": d.low, "high": d.high, "levels": list(d.levels)}
            if d.kind == DISCRETE else {"name": d.name, "kind": d.kind, "low": d.low, "high": d.high}
            for d in self.dims]}


@dataclass(frozen=True)
class ParamVector:
    space: ParamSpace = field(compare=False, repr=False)
    values: tuple

    def __post_init__(self):
        values = tuple(self.values)
        if len(values) != len(self.space.dims):
            raise InvalidParameterError(None, f"expected {len(self.space.dims)} values, got {len(values)}")
        clean = []
        for d, v in zip(self.space.dims, values):
            if not d.contains(v):
                raise InvalidParameterError(d.name, f"parameter {d.name!r}={v!r} outside its domain")
            clean.append(float(v) if d.kind == CONTINUOUS else v)
        object.__setattr__(self, "values", tuple(clean))

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.values[self.space.index(key)]
        return self.values[key]

    def as_dict(self) -> dict[str, Any]:
        return dict(zip(self.space.names, self.values))

    def encode(self) -> np.ndarray:
        return self.space.encode(self)


def sample_params(space: ParamSpace, rng: np.random.Generator) -> ParamVector:
    """Uniform over bounds (continuous) or level sets (discrete)."""
    vals = []
    for d in space.dims:
        if d.kind == CONTINUOUS:
            vals.append(float(rng.uniform(d.low, d.high)))
        else:
            vals.append(d.levels[int(rng.integers(len(d.levels)))])
    return ParamVector(space, tuple(vals))


def mutate_params(params: ParamVector, rng: np.random.Generator, edit_strength: float) -> ParamVector:
    """Random edit of a uniformly chosen non-empty subset of dims.

    Continuous dims move by U(-s, s) * range and are clamped; discrete dims
    step one level up or down, saturating at the ends.
    """
    if not edit_strength > 0:
        raise ValueError("edit_strength must be > 0")
    space = params.space
    n = len(space.dims)
    k = int(rng.integers(1, n + 1))
    chosen = set(int(i) for i in rng.choice(n, size=k, replace=False))
    vals = list(params.values)
    for i in sorted(chosen):
        d = space.dims[i]
        if d.kind == CONTINUOUS:
            offset = rng.uniform(-edit_strength, edit_strength) * (d.high - d.low)
            vals[i] = float(np.clip(vals[i] + offset, d.low, d.high))
        else:
            idx = d.levels.index(vals[i]) + (1 if rng.random() < 0.5 else -1)
            vals[i] = d.levels[min(max(idx, 0), len(d.levels) - 1)]
    return ParamVector(space, tuple(vals))
