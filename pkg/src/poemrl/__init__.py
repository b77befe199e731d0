"""poemrl: from-scratch PPO plus a stagnation-triggered evolutionary-mutation
variant (POEM), with native control environments, deterministic evaluation,
and Welch-test comparison tooling."""

__version__ = "0.1.0"
