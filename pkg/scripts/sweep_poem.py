"""POEM-only sweep on mountain car: vary one mutation knob per batch."""

import sys
import time
from pathlib import Path

import numpy as np

from poemrl import harness
from poemrl.config import load_run_config

ROOT = Path("/tmp/sweep")
SEEDS = [0, 1, 2, 3, 4]

VARIANTS = {
    "base":       {},
    "delta_05":   {("poem", "delta"): "0.05"},
    "sig_02":     {("poem", "sigma_max"): "0.02"},
    "cand_4":     {("poem", "n_candidates"): "4"},
    "ldiv_1":     {("poem", "lambda_div"): "0.1"},
    "net_64":     {("run", "hidden_sizes"): "64,64"},
    "d05c4":      {("poem", "delta"): "0.05", ("poem", "n_candidates"): "4"},
    "d05s02":     {("poem", "delta"): "0.05", ("poem", "sigma_max"): "0.02"},
    "d05c4s02":   {("poem", "delta"): "0.05", ("poem", "n_candidates"): "4",
                   ("poem", "sigma_max"): "0.02"},
    "gamma_999":  {("ppo", "gamma"): "0.999"},
    "gamma_9999": {("ppo", "gamma"): "0.9999", ("ppo", "lam"): "0.9"},
    "epochs_4":   {("ppo", "epochs"): "4"},
    "clip_01":    {("ppo", "clip_epsilon"): "0.1"},
    "g999_e4":    {("ppo", "gamma"): "0.999", ("ppo", "epochs"): "4"},
    "n64_s02":    {("run", "hidden_sizes"): "64,64", ("poem", "sigma_max"): "0.02"},
    "n64_g999":   {("run", "hidden_sizes"): "64,64", ("ppo", "gamma"): "0.999"},
    "n64_s02g":   {("run", "hidden_sizes"): "64,64", ("poem", "sigma_max"): "0.02",
                   ("ppo", "gamma"): "0.999"},
    "n64_smin":   {("run", "hidden_sizes"): "64,64", ("poem", "sigma_min"): "0.002",
                   ("poem", "sigma_max"): "0.02"},
}


def run_variant(name):
    extra = VARIANTS[name]
    configs = []
    for seed in SEEDS:
        flags = {
            ("run", "algo"): "poem",
            ("run", "seed"): str(seed),
            ("run", "total_timesteps"): "150000",
            ("run", "n_steps"): "512",
            ("run", "hidden_sizes"): "32",
            ("run", "log_std_init"): "-2.0",
            ("ppo", "alpha_ent"): "0.0",
            ("run", "checkpoint_every"): "0",
            ("run", "out_dir"): str(ROOT / name / f"seed_{seed}"),
        }
        flags.update(extra)
        configs.append(load_run_config(flag_overrides=flags, environ={}))
    t0 = time.time()
    harness.run_many(configs, jobs=2)
    means = []
    for cfg in configs:
        rep = harness.evaluate(Path(cfg.out_dir) / "checkpoint_final.bin",
                               n_episodes=15, seed_base=10_000 + cfg.seed)
        means.append(rep.mean)
    means = np.array(means)
    print(f"{name:10s}: means={np.round(means, 1).tolist()} "
          f">=80: {(means >= 80).sum()}/5  pooled={means.mean():7.2f}  "
          f"({time.time()-t0:.0f}s)", flush=True)


if __name__ == "__main__":
    for name in sys.argv[1:] or list(VARIANTS):
        run_variant(name)
