from .core import FAMILIES, StepResult, make_env, param_space, reset, step
from .lander import LANDER_SPACE, LanderEnv
from .maze import MAZE_SPACE, MazeEnv, MazeParams, generate_maze, maze_feasible
from .params import Dim, ParamSpace, ParamVector, continuous, discrete, mutate_params, sample_params

__all__ = [
    "FAMILIES", "StepResult", "make_env", "param_space", "reset", "step",
    "LANDER_SPACE", "LanderEnv", "MAZE_SPACE", "MazeEnv", "MazeParams", "generate_maze",
    "maze_feasible", "Dim", "ParamSpace", "ParamVector", "continuous", "discrete",
    "mutate_params", "sample_params",
]
