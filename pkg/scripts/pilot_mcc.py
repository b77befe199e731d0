"""Pilot: criterion-4 shape check. Train PPO and POEM on mountain car,
5 seeds each, evaluate 15 deterministic episodes, print pooled stats."""

import sys
import time
from pathlib import Path

import numpy as np

from poemrl import harness
from poemrl.config import load_run_config

ROOT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/tmp/pilot_mcc")
TIMESTEPS = sys.argv[2] if len(sys.argv) > 2 else "150000"
SEEDS = [int(s) for s in (sys.argv[3].split(",") if len(sys.argv) > 3 else range(5))]


def main():
    configs = []
    for algo in ("ppo", "poem"):
        for seed in SEEDS:
            configs.append(load_run_config(flag_overrides={
                ("run", "algo"): algo,
                ("run", "seed"): str(seed),
                ("run", "total_timesteps"): TIMESTEPS,
                ("run", "out_dir"): str(ROOT / algo / f"seed_{seed}"),
                ("run", "checkpoint_every"): "0",
            }))
    t0 = time.time()
    results = harness.run_many(configs, jobs=2)
    print(f"trained {len(results)} runs in {time.time()-t0:.0f}s", flush=True)

    means = {"ppo": [], "poem": []}
    for cfg, res in zip(configs, results):
        rep = harness.evaluate(ROOT / cfg.out_dir.split("/")[-2] / f"seed_{cfg.seed}" / "checkpoint_final.bin",
                               n_episodes=15, seed_base=10_000 + cfg.seed)
        means[cfg.algo].append(rep.mean)
        print(f"{cfg.algo} seed {cfg.seed}: mean={rep.mean:8.2f} steps={rep.per_episode_steps.mean():6.1f}", flush=True)

    from poemrl.stats import welch_t_test
    a, b = np.array(means["ppo"]), np.array(means["poem"])
    print("ppo  means:", np.round(a, 2).tolist())
    print("poem means:", np.round(b, 2).tolist())
    print("poem runs >= 80:", int((b >= 80).sum()), "/", len(b))
    if a.var() + b.var() > 0:
        r = welch_t_test(a, b)
        print(f"welch t={r.t_statistic:.4f} p={r.p_value:.6f}")
    print("pooled poem > pooled ppo:", b.mean() > a.mean())


if __name__ == "__main__":
    main()
