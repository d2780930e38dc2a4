"""How often Greedy-First abandons greedy when the intercept breaks diversity."""

from banditlab.presets import replicate
from banditlab.harness import ExperimentConfig, run_batch

cfg = replicate("fig1c")
cfg = ExperimentConfig.from_dict({**cfg.to_dict(), "n_runs": 30, "T": 600})
summary = run_batch(cfg)
for name in summary.policies:
    print(f"{name:<20} R_T = {summary.mean[name][-1]:8.3f}")
print("greedy_first switches:", summary.switch_count("greedy_first"), "of", cfg.n_runs)
print("switch-time histogram:", summary.switch_histogram("greedy_first", bins=6))
