"""Deterministic policy evaluation and Welch's two-sample t-test.

The t distribution's tail probability comes from the regularized incomplete
beta function, computed with the continued-fraction (modified Lentz)
expansion and the usual symmetry switch for numerical stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .envs import make_env
from .policy import ActorCritic

_MAX_CF_ITER = 300
_CF_EPS = 3e-16
_CF_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_CF_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # switch to the mirrored fraction where it converges fast
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, dof: float) -> float:
    """P(|T_dof| >= |t|) via I_x(dof/2, 1/2), x = dof / (dof + t^2)."""
    if dof <= 0.0:
        raise ValueError("dof must be positive")
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    dof: float
    mean_a: float
    mean_b: float
    n_a: int
    n_b: int


def welch_t_test(a, b) -> TTestResult:
    """Two-sample location test without the equal-variance assumption;
    two-tailed p, Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or len(a) < 2 or len(b) < 2:
        raise ValueError("both samples need at least 2 observations")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise ValueError("both samples have zero variance; the test is undefined")
    sa, sb = va / len(a), vb / len(b)
    se = math.sqrt(sa + sb)
    t = (a.mean() - b.mean()) / se
    dof = (sa + sb) ** 2 / (sa * sa / (len(a) - 1) + sb * sb / (len(b) - 1))
    return TTestResult(
        t_statistic=float(t),
        p_value=student_t_two_tailed_p(float(t), float(dof)),
        dof=float(dof),
        mean_a=float(a.mean()),
        mean_b=float(b.mean()),
        n_a=len(a),
        n_b=len(b),
    )


@dataclass(frozen=True)
class ComparisonRow:
    """One head-to-head comparison; t is negative when the mutation variant's
    mean is higher (the baseline is sample a)."""

    mean_poem: float
    mean_ppo: float
    t_statistic: float
    p_value: float
    dof: float
    significant: bool
    n_poem: int
    n_ppo: int


def compare_runs(rewards_poem, rewards_ppo, alpha: float) -> ComparisonRow:
    """Welch test of baseline vs mutation variant; significant only when the
    variant's mean is actually higher and p < alpha."""
    res = welch_t_test(rewards_ppo, rewards_poem)
    significant = bool(res.p_value < alpha and res.mean_b > res.mean_a)
    return ComparisonRow(
        mean_poem=res.mean_b,
        mean_ppo=res.mean_a,
        t_statistic=res.t_statistic,
        p_value=res.p_value,
        dof=res.dof,
        significant=significant,
        n_poem=res.n_b,
        n_ppo=res.n_a,
    )


@dataclass
class EvalReport:
    """Per-episode rewards from fixed-seed evaluation episodes."""

    per_episode_rewards: np.ndarray
    per_episode_steps: np.ndarray
    mean: float
    std: float
    seeds: list[int]
    step_series: list[np.ndarray] = field(default_factory=list)  # cumulative reward per step
    final_infos: list[dict] = field(default_factory=list)


def evaluate_policy(
    env_or_id,
    ac: ActorCritic,
    n_episodes: int,
    seed_base: int,
    deterministic: bool = True,
) -> EvalReport:
    """Run n_episodes, episode i seeded with seed_base + i; the deterministic
    flag plays the distribution's mode instead of sampling."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    make = (lambda: make_env(env_or_id)) if isinstance(env_or_id, str) else env_or_id

    rewards, steps, seeds, series, infos = [], [], [], [], []
    for i in range(n_episodes):
        seed = seed_base + i
        env = make()
        if env.observation_dim != ac.obs_dim():
            raise ValueError(
                f"env observations ({env.observation_dim}) do not match the "
                f"policy input ({ac.obs_dim()})"
            )
        obs = env.reset(seed=seed)
        rng = np.random.default_rng(seed)
        total = 0.0
        cumulative = []
        n_steps = 0
        info = {}
        while True:
            dist = pol.distribution(ac, obs)
            action = pol.sample(dist, rng, deterministic=deterministic)
            result = env.step(action)
            total += result.reward
            cumulative.append(total)
            n_steps += 1
            obs = result.obs
            info = result.info
            if result.terminated or result.truncated:
                info = dict(info, terminated=result.terminated, truncated=result.truncated)
                break
        rewards.append(total)
        steps.append(n_steps)
        seeds.append(seed)
        series.append(np.asarray(cumulative))
        infos.append(info)

    rewards_arr = np.asarray(rewards, dtype=np.float64)
    return EvalReport(
        per_episode_rewards=rewards_arr,
        per_episode_steps=np.asarray(steps, dtype=np.int64),
        mean=float(rewards_arr.mean()),
        std=float(rewards_arr.std(ddof=1)) if n_episodes > 1 else 0.0,
        seeds=seeds,
        step_series=series,
        final_infos=infos,
    )
