"""Family registry: build environment instances from parameter vectors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParameterError
from .lander import LANDER_SPACE, LanderEnv
from .maze import MAZE_SPACE, MazeEnv
from .params import ParamSpace, ParamVector


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminal: bool
    truncated: bool

    def __iter__(self):
        return iter((self.observation, self.reward, self.terminal, self.truncated))


FAMILIES = {
    "lander": (LANDER_SPACE, LanderEnv),
    "maze": (MAZE_SPACE, MazeEnv),
}


def param_space(family: str) -> ParamSpace:
    try:
        return FAMILIES[family][0]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(FAMILIES)}") from None


def coerce_params(family: str, params) -> ParamVector:
    space = param_space(family)
    if isinstance(params, ParamVector):
        if params.space != space:
            raise InvalidParameterError(None, f"parameter vector is not from the {family} space")
        return params
    return space.vector(params)


def params_feasible(family: str, params) -> bool:
    """Whether an instance can be built at all (some maze level combinations cannot)."""
    pv = coerce_params(family, params)
    if family == "maze":
        from .maze import combo_feasible
        return combo_feasible(pv)
    return True


def make_env(family: str, params, seed: int):
    """A freshly reset instance of ``family`` with design ``params``."""
    pv = coerce_params(family, params)
    env = FAMILIES[family][1](pv, int(seed))
    env.reset(int(seed))
    return env


def step(env, action) -> StepResult:
    return env.step(action)


def reset(env, seed: int) -> np.ndarray:
    return env.reset(seed)


def is_discrete_action(family: str) -> bool:
    return family == "maze"


def obs_dim(family: str) -> int:
    return FAMILIES[family][1].obs_dim


def action_dim(family: str) -> int:
    cls = FAMILIES[family][1]
    return cls.n_actions if family == "maze" else cls.action_dim
