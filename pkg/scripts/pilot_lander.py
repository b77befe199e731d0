"""Pilot: criterion-5 shape check on the lander, 3 seeds per algorithm."""

import sys
import time
from pathlib import Path

import numpy as np

from poemrl import harness
from poemrl.config import load_run_config

ROOT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("/tmp/pilot_lander")
TIMESTEPS = sys.argv[2] if len(sys.argv) > 2 else "250000"
SEEDS = [int(s) for s in (sys.argv[3].split(",") if len(sys.argv) > 3 else range(3))]


def main():
    configs = []
    for algo in ("ppo", "poem"):
        for seed in SEEDS:
            configs.append(load_run_config(flag_overrides={
                ("run", "env"): "sparse_lander",
                ("run", "algo"): algo,
                ("run", "seed"): str(seed),
                ("run", "total_timesteps"): TIMESTEPS,
                ("run", "out_dir"): str(ROOT / algo / f"seed_{seed}"),
                ("run", "checkpoint_every"): "0",
            }))
    t0 = time.time()
    harness.run_many(configs, jobs=2)
    print(f"trained {len(configs)} runs in {time.time()-t0:.0f}s", flush=True)

    means = {"ppo": [], "poem": []}
    for cfg in configs:
        rep = harness.evaluate(Path(cfg.out_dir) / "checkpoint_final.bin",
                               n_episodes=15, seed_base=10_000 + cfg.seed)
        means[cfg.algo].append(rep.mean)
        closed = all(i.get("terminated") or i.get("truncated") for i in rep.final_infos)
        landed = sum(1 for r in rep.per_episode_rewards if r > 50)
        print(f"{cfg.algo} seed {cfg.seed}: mean={rep.mean:8.2f} landings={landed}/15 "
              f"steps={rep.per_episode_steps.mean():6.1f} closed={closed}", flush=True)

    a, b = np.array(means["ppo"]), np.array(means["poem"])
    print("ppo  means:", np.round(a, 2).tolist())
    print("poem means:", np.round(b, 2).tolist())
    print(f"non-inferiority (poem >= ppo - 10): {b.mean() >= a.mean() - 10} "
          f"({b.mean():.1f} vs {a.mean():.1f})")


if __name__ == "__main__":
    main()
