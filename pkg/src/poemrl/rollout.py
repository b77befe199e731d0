"""Trajectory collection and generalized advantage estimation.

A rollout batch is a fixed number of environment steps with episodes
auto-reset inside it. Time-limit truncation bootstraps with the value of
the cut-off state; true termination zeroes the bootstrap.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import policy as pol
from .policy import ActorCritic, DiagGaussianHead


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: object
    log_prob_old: float
    reward: float
    value_old: float
    terminated: bool
    truncated: bool


@dataclass
class RolloutBatch:
    """Column-major rollout storage; advantages/returns appear after GAE."""

    obs: np.ndarray  # (n, obs_dim)
    actions: np.ndarray  # (n, action_dim) float or (n,) int
    log_probs_old: np.ndarray  # (n,)
    rewards: np.ndarray  # (n,)
    values_old: np.ndarray  # (n,)
    terminated: np.ndarray  # (n,) bool
    truncated: np.ndarray  # (n,) bool
    next_values: np.ndarray  # (n,) value of each successor state (0 if terminated)
    bootstrap_value: float  # value of the state after the final transition
    advantages: np.ndarray | None = None  # normalized, used by the loss
    advantages_raw: np.ndarray | None = None  # pre-normalization
    returns: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.rewards)

    def transitions(self) -> list[Transition]:
        out = []
        for i in range(len(self)):
            out.append(
                Transition(
                    self.obs[i],
                    self.actions[i],
                    float(self.log_probs_old[i]),
                    float(self.rewards[i]),
                    float(self.values_old[i]),
                    bool(self.terminated[i]),
                    bool(self.truncated[i]),
                )
            )
        return out

    def minibatch(self, idx: np.ndarray) -> "Minibatch":
        if self.advantages is None or self.returns is None:
            raise ValueError("run compute_gae before slicing minibatches")
        return Minibatch(
            obs=self.obs[idx],
            actions=self.actions[idx],
            log_probs_old=self.log_probs_old[idx],
            advantages=self.advantages[idx],
            returns=self.returns[idx],
        )


@dataclass
class Minibatch:
    obs: np.ndarray
    actions: np.ndarray
    log_probs_old: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.returns)


def collect(
    env,
    ac: ActorCritic,
    n_steps: int,
    rng: np.random.Generator,
    obs: np.ndarray | None = None,
) -> tuple[RolloutBatch, np.ndarray]:
    """Run the stochastic policy for exactly n_steps, auto-resetting episodes.

    Returns the batch and the observation to resume from next call. The env
    must have been reset (seeded) already when obs is passed; with obs=None
    a fresh episode is started from the env's internal generator.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if obs is None:
        obs = env.reset()

    gaussian = isinstance(ac.head, DiagGaussianHead)
    obs_buf = np.empty((n_steps, env.observation_dim), dtype=np.float64)
    if gaussian:
        act_buf = np.empty((n_steps, ac.head.action_dim), dtype=np.float64)
    else:
        act_buf = np.empty(n_steps, dtype=np.int64)
    logp_buf = np.empty(n_steps, dtype=np.float64)
    rew_buf = np.empty(n_steps, dtype=np.float64)
    val_buf = np.empty(n_steps, dtype=np.float64)
    term_buf = np.zeros(n_steps, dtype=bool)
    trunc_buf = np.zeros(n_steps, dtype=bool)
    next_val_buf = np.zeros(n_steps, dtype=np.float64)

    for t in range(n_steps):
        dist = pol.distribution(ac, obs)
        action = pol.sample(dist, rng)
        logp = pol.log_prob(dist, action)

        obs_buf[t] = obs
        act_buf[t] = action
        logp_buf[t] = logp
        val_buf[t] = pol.value(ac, obs)

        result = env.step(action)
        rew_buf[t] = result.reward
        term_buf[t] = result.terminated
        trunc_buf[t] = result.truncated

        if result.terminated:
            next_val_buf[t] = 0.0
            obs = env.reset()
        elif result.truncated:
            # time limit: bootstrap from the state the episode stopped in
            next_val_buf[t] = pol.value(ac, result.obs)
            obs = env.reset()
        else:
            obs = result.obs

    bootstrap = pol.value(ac, obs)
    for t in range(n_steps - 1):
        if not (term_buf[t] or trunc_buf[t]):
            next_val_buf[t] = val_buf[t + 1]
    if not (term_buf[-1] or trunc_buf[-1]):
        next_val_buf[-1] = bootstrap

    batch = RolloutBatch(
        obs=obs_buf,
        actions=act_buf,
        log_probs_old=logp_buf,
        rewards=rew_buf,
        values_old=val_buf,
        terminated=term_buf,
        truncated=trunc_buf,
        next_values=next_val_buf,
        bootstrap_value=float(bootstrap),
    )
    return batch, obs


def compute_gae(
    batch: RolloutBatch, gamma: float, lam: float, normalize: bool = True
) -> RolloutBatch:
    """GAE(lambda) advantages and returns-to-go (returns = adv + value)."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lam must be in [0, 1], got {lam}")

    n = len(batch)
    adv = np.zeros(n, dtype=np.float64)
    not_terminated = 1.0 - batch.terminated.astype(np.float64)
    done = batch.terminated | batch.truncated
    not_done = 1.0 - done.astype(np.float64)

    delta = batch.rewards + gamma * batch.next_values * not_terminated - batch.values_old
    running = 0.0
    for t in range(n - 1, -1, -1):
        running = delta[t] + gamma * lam * not_done[t] * running
        adv[t] = running

    returns = adv + batch.values_old
    if normalize and n > 1:
        adv_out = (adv - adv.mean()) / max(adv.std(), 1e-8)
    elif normalize:
        adv_out = adv - adv.mean()
    else:
        adv_out = adv
    return replace(batch, advantages=adv_out, advantages_raw=adv, returns=returns)
