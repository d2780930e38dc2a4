"""Compare greedy, Greedy-First and OFUL on a small two-arm problem."""

from banditlab.harness import ExperimentConfig, run_batch
from banditlab.policies import PolicyConfig


def main():
    cfg = ExperimentConfig(
        name="quickstart", K=2, d=3, T=500, n_runs=20, sigma=0.5, master_seed=1,
        policies=[PolicyConfig("greedy"), PolicyConfig("greedy_first", t0=48),
                  PolicyConfig("oful"), PolicyConfig("uniform_random")],
    )
    summary = run_batch(cfg)
    for name in summary.policies:
        print(f"{name:<16} R_T = {summary.mean[name][-1]:8.3f} +/- {summary.ci[name][-1]:.3f}")
    print(f"greedy_first switched in {summary.switch_count('greedy_first')} of {cfg.n_runs} runs")


if __name__ == "__main__":
    main()
