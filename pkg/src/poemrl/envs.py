"""Native desk-scale control environments with a uniform reset/step API.

Both environments are stateful and single-threaded: reset(seed) seeds an
internal generator, later reset() calls reuse it, and stepping a finished
episode raises until the next reset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


@dataclass(frozen=True)
class ContinuousSpace:
    dim: int
    low: float
    high: float


@dataclass(frozen=True)
class DiscreteSpace:
    n: int


ActionSpace = Union[ContinuousSpace, DiscreteSpace]


@dataclass(frozen=True)
class StepResult:
    obs: np.ndarray
    reward: float
    terminated: bool  # task-defined end
    truncated: bool  # time limit
    info: dict = field(default_factory=dict)


class MountainCarContinuous:
    """Underpowered car in a valley; continuous push in [-1, 1].

    Dynamics and rewards follow the classic control task: the engine costs
    0.1*a^2 per step and reaching x >= 0.45 pays +100, so doing nothing
    scores ~0 and the only way to win is building momentum.
    """

    observation_dim = 2
    action_space: ActionSpace = ContinuousSpace(1, -1.0, 1.0)
    max_episode_steps = 999
    # feature scaling for function approximators: velocity spans +-0.07,
    # position is already near unit range
    observation_scale = (1.0, 1.0 / 0.07)

    MIN_POSITION = -1.2
    MAX_POSITION = 0.6
    MAX_SPEED = 0.07
    GOAL_POSITION = 0.45
    POWER = 0.0015
    GRAVITY_SCALE = 0.0025

    def __init__(self):
        self._rng = None
        self._pos = 0.0
        self._vel = 0.0
        self._steps = 0
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if self._rng is None:
            raise RuntimeError("first reset must provide a seed")
        self._pos = self._rng.uniform(-0.6, -0.4)
        self._vel = 0.0
        self._steps = 0
        self._done = False
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array([self._pos, self._vel], dtype=np.float64)

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        self._vel += a * self.POWER - self.GRAVITY_SCALE * math.cos(3.0 * self._pos)
        self._vel = float(np.clip(self._vel, -self.MAX_SPEED, self.MAX_SPEED))
        self._pos += self._vel
        self._pos = float(np.clip(self._pos, self.MIN_POSITION, self.MAX_POSITION))
        if self._pos == self.MIN_POSITION and self._vel < 0.0:
            self._vel = 0.0
        self._steps += 1

        terminated = self._pos >= self.GOAL_POSITION
        truncated = not terminated and self._steps >= self.max_episode_steps
        reward = -0.1 * a * a + (100.0 if terminated else 0.0)
        self._done = terminated or truncated
        return StepResult(self._obs(), reward, terminated, truncated, {"steps": self._steps})


class SparseLander:
    """Point-mass 2D lander with a hard fuel budget and discrete engines.

    Actions: 0 noop, 1 main (+15 m/s^2 up, 3 fuel), 2 push left, 3 push
    right (+-4 m/s^2, 1 fuel). Once the tank is empty the engines are dead
    and gravity finishes the episode. Touching down inside |x| <= 0.5 with
    both speed components <= 1 m/s pays +100, any other contact (or
    drifting past |x| > 5) is a -100 crash.
    """

    observation_dim = 5
    action_space: ActionSpace = DiscreteSpace(4)
    max_episode_steps = 1000
    observation_scale = (0.2, 0.1, 0.2, 0.1, 1.0)

    DT = 0.05
    GRAVITY = 9.8
    MAIN_ACCEL = 15.0
    SIDE_ACCEL = 4.0
    FUEL_INIT = 600.0
    MAIN_FUEL = 3.0
    SIDE_FUEL = 1.0
    X_LIMIT = 5.0
    PAD_HALF_WIDTH = 0.5
    SAFE_SPEED = 1.0
    START_ALTITUDE = 10.0

    def __init__(self):
        self._rng = None
        self._x = 0.0
        self._y = 0.0
        self._vx = 0.0
        self._vy = 0.0
        self._fuel = 0.0
        self._steps = 0
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        if self._rng is None:
            raise RuntimeError("first reset must provide a seed")
        self._x = self._rng.uniform(-1.0, 1.0)
        self._y = self.START_ALTITUDE
        self._vx = self._rng.uniform(-0.5, 0.5)
        self._vy = self._rng.uniform(-0.5, 0.0)
        self._fuel = self.FUEL_INIT
        self._steps = 0
        self._done = False
        return self._obs()

    def _obs(self) -> np.ndarray:
        return np.array(
            [self._x, self._y, self._vx, self._vy, self._fuel / self.FUEL_INIT],
            dtype=np.float64,
        )

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("episode finished; call reset()")
        a = int(action)
        if not 0 <= a < self.action_space.n:
            raise ValueError(f"invalid action {a}")
        if self._fuel <= 0.0:
            a = 0  # engines dead

        ax, ay = 0.0, -self.GRAVITY
        main_fired = False
        if a == 1:
            ay += self.MAIN_ACCEL
            main_fired = True
            self._fuel = max(0.0, self._fuel - self.MAIN_FUEL)
        elif a == 2:
            ax = -self.SIDE_ACCEL
            self._fuel = max(0.0, self._fuel - self.SIDE_FUEL)
        elif a == 3:
            ax = self.SIDE_ACCEL
            self._fuel = max(0.0, self._fuel - self.SIDE_FUEL)

        # semi-implicit Euler: velocity first, then position
        self._vx += ax * self.DT
        self._vy += ay * self.DT
        self._x += self._vx * self.DT
        self._y += self._vy * self.DT
        self._steps += 1

        terminated = False
        reward = -0.3 * (abs(self._x) + abs(self._vx) + abs(self._vy)) * self.DT
        if main_fired:
            reward -= 0.03
        if self._y <= 0.0:
            terminated = True
            safe = (
                abs(self._x) <= self.PAD_HALF_WIDTH
                and abs(self._vy) <= self.SAFE_SPEED
                and abs(self._vx) <= self.SAFE_SPEED
            )
            reward += 100.0 if safe else -100.0
        elif abs(self._x) > self.X_LIMIT:
            terminated = True
            reward += -100.0
        truncated = not terminated and self._steps >= self.max_episode_steps
        self._done = terminated or truncated
        info = {"fuel": self._fuel, "steps": self._steps}
        return StepResult(self._obs(), reward, terminated, truncated, info)


ENV_REGISTRY = {
    "mountain_car_continuous": MountainCarContinuous,
    "sparse_lander": SparseLander,
}


def make_env(env_id: str):
    try:
        return ENV_REGISTRY[env_id]()
    except KeyError:
        raise ValueError(f"unknown env id {env_id!r}; known: {sorted(ENV_REGISTRY)}") from None
