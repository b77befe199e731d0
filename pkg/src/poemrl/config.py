"""Run configuration: defaults, config-file parsing, and override layering.

Config files are flat UTF-8 ``key = value`` lines under bracketed section
headers ([run], [ppo], [poem]); ``#`` starts a comment. Values layer as
defaults < config file < POEMRL_* environment variables < CLI flags, and
unknown sections or keys are hard errors so a typo cannot silently skew a
comparison.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

from .envs import ENV_REGISTRY
from .poem import TRIGGER_OFF, PoemConfig
from .ppo import PpoConfig

ENV_VAR_PREFIX = "POEMRL_"
ALGOS = ("ppo", "poem")

# declared defaults; the per-env entries double as tuning centers
GLOBAL_DEFAULTS: dict[str, dict[str, str]] = {
    "run": {
        "env": "mountain_car_continuous",
        "algo": "poem",
        "seed": "0",
        "total_timesteps": "150000",
        "n_steps": "512",
        "hidden_sizes": "64,64",
        "log_std_init": "-2.0",
        "checkpoint_every": "10",
        "out_dir": "runs/run",
    },
    "ppo": {
        "learning_rate": "3e-4",
        "clip_epsilon": "0.2",
        "epochs": "10",
        "minibatch_size": "64",
        "gamma": "0.99",
        "lam": "0.95",
        "alpha_vf": "0.5",
        "alpha_ent": "0.0",
        "max_grad_norm": "0.5",
    },
    "poem": {
        "beta": "0.99",
        "delta": "0.01",
        "sigma_min": "0.005",
        "sigma_max": "0.05",
        "lambda_div": "0.01",
        "n_candidates": "1",
        "mutate_scope": "actor_only",
    },
}

# per-env defaults: training budgets, and a gentler mutation scale on the
# lander (its reward plateau gives parameter noise nothing to find, so large
# perturbations only add variance)
ENV_DEFAULTS: dict[str, dict[tuple[str, str], str]] = {
    "mountain_car_continuous": {("run", "total_timesteps"): "150000"},
    "sparse_lander": {
        ("run", "total_timesteps"): "250000",
        ("poem", "sigma_min"): "0.002",
        ("poem", "sigma_max"): "0.005",
    },
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    env_id: str
    algo: str
    seed: int
    total_timesteps: int
    n_steps: int
    hidden_sizes: tuple[int, ...]
    log_std_init: float
    checkpoint_every: int
    out_dir: str
    ppo: PpoConfig
    poem: PoemConfig

    def __post_init__(self):
        if self.env_id not in ENV_REGISTRY:
            raise ConfigError(f"unknown env {self.env_id!r}; known: {sorted(ENV_REGISTRY)}")
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; known: {ALGOS}")
        if self.n_steps < 1 or self.total_timesteps < self.n_steps:
            raise ConfigError("need total_timesteps >= n_steps >= 1")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0 (0 = final only)")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive integers")
        if self.algo == "ppo":
            # plain PPO never uses the diversity term or the mutation trigger
            object.__setattr__(
                self, "poem", replace(self.poem, lambda_div=0.0, delta=TRIGGER_OFF)
            )


def parse_config_text(text: str, source: str = "<config>") -> dict[tuple[str, str], str]:
    """Parse the flat key=value format into {(section, key): raw value}."""
    values: dict[tuple[str, str], str] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in GLOBAL_DEFAULTS:
                raise ConfigError(f"{source}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if section is None:
            raise ConfigError(f"{source}:{lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in GLOBAL_DEFAULTS[section]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{section}]")
        values[(section, key.lower())] = value
    return values


def env_var_overrides(environ=None) -> dict[tuple[str, str], str]:
    """POEMRL_<SECTION>_<KEY>=value entries from the environment."""
    environ = os.environ if environ is None else environ
    values: dict[tuple[str, str], str] = {}
    for name, value in environ.items():
        if not name.startswith(ENV_VAR_PREFIX):
            continue
        rest = name[len(ENV_VAR_PREFIX) :]
        section, _, key = rest.partition("_")
        section, key = section.lower(), key.lower()
        if section not in GLOBAL_DEFAULTS or key not in GLOBAL_DEFAULTS[section]:
            raise ConfigError(f"unrecognized override variable {name}")
        values[(section, key)] = value
    return values


def _to_int(raw: str, where: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected integer, got {raw!r}") from None


def _to_float(raw: str, where: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected number, got {raw!r}") from None


def build_run_config(values: dict[tuple[str, str], str]) -> RunConfig:
    """Typed RunConfig from a fully-layered string map."""

    def get(section: str, key: str) -> str:
        return values[(section, key)]

    hidden = tuple(
        _to_int(part.strip(), "run.hidden_sizes")
        for part in get("run", "hidden_sizes").split(",")
        if part.strip()
    )
    raw_norm = get("ppo", "max_grad_norm").lower()
    max_grad_norm = None if raw_norm in ("none", "off") else _to_float(raw_norm, "ppo.max_grad_norm")

    try:
        ppo_cfg = PpoConfig(
            clip_epsilon=_to_float(get("ppo", "clip_epsilon"), "ppo.clip_epsilon"),
            alpha_vf=_to_float(get("ppo", "alpha_vf"), "ppo.alpha_vf"),
            alpha_ent=_to_float(get("ppo", "alpha_ent"), "ppo.alpha_ent"),
            epochs=_to_int(get("ppo", "epochs"), "ppo.epochs"),
            minibatch_size=_to_int(get("ppo", "minibatch_size"), "ppo.minibatch_size"),
            learning_rate=_to_float(get("ppo", "learning_rate"), "ppo.learning_rate"),
            max_grad_norm=max_grad_norm,
            gamma=_to_float(get("ppo", "gamma"), "ppo.gamma"),
            lam=_to_float(get("ppo", "lam"), "ppo.lam"),
        )
        poem_cfg = PoemConfig(
            beta=_to_float(get("poem", "beta"), "poem.beta"),
            delta=_to_float(get("poem", "delta"), "poem.delta"),
            sigma_min=_to_float(get("poem", "sigma_min"), "poem.sigma_min"),
            sigma_max=_to_float(get("poem", "sigma_max"), "poem.sigma_max"),
            lambda_div=_to_float(get("poem", "lambda_div"), "poem.lambda_div"),
            n_candidates=_to_int(get("poem", "n_candidates"), "poem.n_candidates"),
            mutate_scope=get("poem", "mutate_scope"),
        )
        return RunConfig(
            env_id=get("run", "env"),
            algo=get("run", "algo"),
            seed=_to_int(get("run", "seed"), "run.seed"),
            total_timesteps=_to_int(get("run", "total_timesteps"), "run.total_timesteps"),
            n_steps=_to_int(get("run", "n_steps"), "run.n_steps"),
            hidden_sizes=hidden,
            log_std_init=_to_float(get("run", "log_std_init"), "run.log_std_init"),
            checkpoint_every=_to_int(get("run", "checkpoint_every"), "run.checkpoint_every"),
            out_dir=get("run", "out_dir"),
            ppo=ppo_cfg,
            poem=poem_cfg,
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None


def load_run_config(
    config_path: str | None = None,
    flag_overrides: dict[tuple[str, str], str] | None = None,
    environ=None,
) -> RunConfig:
    """Layer defaults, optional file, POEMRL_* variables, and CLI flags."""
    values = {(s, k): v for s, section in GLOBAL_DEFAULTS.items() for k, v in section.items()}

    file_values: dict[tuple[str, str], str] = {}
    if config_path is not None:
        with open(config_path, encoding="utf-8") as fh:
            file_values = parse_config_text(fh.read(), source=config_path)

    env_values = env_var_overrides(environ)
    flag_values = flag_overrides or {}

    # the effective env id decides env-specific defaults, highest layer wins
    env_id = values[("run", "env")]
    for layer in (file_values, env_values, flag_values):
        env_id = layer.get(("run", "env"), env_id)
    for key, value in ENV_DEFAULTS.get(env_id, {}).items():
        values[key] = value

    values.update(file_values)
    values.update(env_values)
    values.update(flag_values)
    return build_run_config(values)


def config_to_text(config: RunConfig) -> str:
    """Snapshot in the same format load_run_config reads."""
    norm = "none" if config.ppo.max_grad_norm is None else repr(config.ppo.max_grad_norm)
    lines = [
        "[run]",
        f"env = {config.env_id}",
        f"algo = {config.algo}",
        f"seed = {config.seed}",
        f"total_timesteps = {config.total_timesteps}",
        f"n_steps = {config.n_steps}",
        f"hidden_sizes = {','.join(str(h) for h in config.hidden_sizes)}",
        f"log_std_init = {config.log_std_init!r}",
        f"checkpoint_every = {config.checkpoint_every}",
        f"out_dir = {config.out_dir}",
        "",
        "[ppo]",
        f"learning_rate = {config.ppo.learning_rate!r}",
        f"clip_epsilon = {config.ppo.clip_epsilon!r}",
        f"epochs = {config.ppo.epochs}",
        f"minibatch_size = {config.ppo.minibatch_size}",
        f"gamma = {config.ppo.gamma!r}",
        f"lam = {config.ppo.lam!r}",
        f"alpha_vf = {config.ppo.alpha_vf!r}",
        f"alpha_ent = {config.ppo.alpha_ent!r}",
        f"max_grad_norm = {norm}",
        "",
        "[poem]",
        f"beta = {config.poem.beta!r}",
        f"delta = {config.poem.delta!r}",
        f"sigma_min = {config.poem.sigma_min!r}",
        f"sigma_max = {config.poem.sigma_max!r}",
        f"lambda_div = {config.poem.lambda_div!r}",
        f"n_candidates = {config.poem.n_candidates}",
        f"mutate_scope = {config.poem.mutate_scope}",
        "",
    ]
    return "\n".join(lines)


@dataclass(frozen=True)
class TuneSpec:
    """Bounded random search around the base config's values."""

    n_trials: int = 20
    bound: float = 0.10  # relative deviation per hyperparameter
    trial_timesteps: int = 50_000
    eval_episodes: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.n_trials < 1:
            raise ConfigError("n_trials must be >= 1")
        if self.bound < 0.0:
            raise ConfigError("bound must be nonnegative")
        if self.trial_timesteps < 1 or self.eval_episodes < 1:
            raise ConfigError("trial_timesteps and eval_episodes must be >= 1")
