"""Point-mass lander with gravity, periodic wind and turbulence."""
from __future__ import annotations

import numpy as np

from ..errors import IllegalTransitionError, InvalidParameterError
from .params import ParamSpace, ParamVector, continuous

DT = 0.05
THRUST = 15.0          # max acceleration per axis at |action| = 1
WIND_SCALE = 0.1       # wind force -> horizontal acceleration
WIND_FREQ = 0.1        # phase advance per step (radians)
PAD_HALF_WIDTH = 1.0
SAFE_VX, SAFE_VY = 1.0, 2.0
X_LIMIT = 10.0
START_HEIGHT = 5.0
HORIZON = 200
LAND_BONUS, CRASH_PENALTY = 100.0, -100.0

LANDER_SPACE = ParamSpace((
    continuous("gravity", -12.0, -2.0),
    continuous("wind_power", 0.0, 20.0),
    continuous("turbulence", 0.0, 2.0),
), name="lander")


def check_lander_params(gravity, wind_power, turbulence):
    if not gravity < 0:
        raise InvalidParameterError("gravity", f"gravity must be < 0, got {gravity}")
    if not wind_power >= 0:
        raise InvalidParameterError("wind_power", f"wind_power must be >= 0, got {wind_power}")
    if not turbulence >= 0:
        raise InvalidParameterError("turbulence", f"turbulence must be >= 0, got {turbulence}")


class LanderEnv:
    """2-D point mass descending onto a pad at the origin.

    State (x, y, vx, vy); observation is the state itself.  Action is thrust
    in [-1, 1]^2.  Each tick applies the constant acceleration
    ``a = thrust*THRUST + (wind, gravity)`` over ``DT``:

        v' = v + a*DT
        x' = x + v*DT + a*DT**2/2

    Per-step reward is ``-DT * distance-to-pad``; touching down at y <= 0
    ends the episode with +100 (on the pad, slow) or -100 (anything else),
    as does leaving |x| <= 10.
    """

    family = "lander"
    obs_dim = 4
    action_dim = 2

    def __init__(self, params: ParamVector, seed: int):
        d = params.as_dict()
        check_lander_params(d["gravity"], d["wind_power"], d["turbulence"])
        self.params = params
        self.gravity = float(d["gravity"])
        self.wind_power = float(d["wind_power"])
        self.turbulence = float(d["turbulence"])
        self.horizon = HORIZON
        self.reset(seed)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.seed = int(seed)
        self.rng = np.random.default_rng(self.seed)
        self.state = np.array([self.rng.uniform(-3.0, 3.0), START_HEIGHT, 0.0, 0.0])
        self.phase = float(self.rng.uniform(0.0, 2.0 * np.pi))
        self.t = 0
        self.done = False
        return self.state.copy()

    def observation(self) -> np.ndarray:
        return self.state.copy()

    def wind_force(self) -> float:
        f = self.wind_power * np.sin(self.phase)
        if self.turbulence > 0:
            f += self.turbulence * self.rng.standard_normal()
        return float(f)

    def acceleration(self, action) -> np.ndarray:
        thrust = np.clip(np.asarray(action, dtype=np.float64).ravel(), -1.0, 1.0) * THRUST
        wind = self.wind_force() * WIND_SCALE if (self.wind_power > 0 or self.turbulence > 0) else 0.0
        return np.array([thrust[0] + wind, thrust[1] + self.gravity])

    def step(self, action):
        from .core import StepResult
        if self.done:
            raise IllegalTransitionError("step() on a finished lander episode; call reset()")
        a = np.asarray(action, dtype=np.float64).ravel()
        if a.size != 2 or not np.all(np.isfinite(a)):
            raise IllegalTransitionError(f"lander action must be 2 finite values, got {action!r}")
        acc = self.acceleration(a)
        pos, vel = self.state[:2], self.state[2:]
        new_pos = pos + vel * DT + 0.5 * acc * DT * DT
        new_vel = vel + acc * DT
        self.state = np.concatenate([new_pos, new_vel])
        self.phase += WIND_FREQ
        self.t += 1
        x, y, vx, vy = self.state
        reward = -DT * float(np.hypot(x, y))
        terminal = False
        if y <= 0.0:
            terminal = True
            safe = abs(x) <= PAD_HALF_WIDTH and abs(vx) <= SAFE_VX and abs(vy) <= SAFE_VY
            reward += LAND_BONUS if safe else CRASH_PENALTY
        elif abs(x) > X_LIMIT:
            terminal = True
            reward += CRASH_PENALTY
        truncated = (not terminal) and self.t >= self.horizon
        self.done = terminal or truncated
        return StepResult(self.state.copy(), reward, terminal, truncated)
