"""Named experiment configurations for the synthetic, K > 2, sensitivity and CSV regimes."""

from __future__ import annotations

from .environments import load_csv_covariates
from .harness import ExperimentConfig
from .policies import PolicyConfig

DESK = {"n_runs": 200, "T": 2000}
FULL = {"n_runs": 1000, "T": 10_000}

SENSITIVITY_GRIDS = {"h": [1.0, 5.0, 10.0], "q": [1, 5, 10], "t0": [32, 64, 128]}

PRESETS = ("fig1a", "fig1b", "fig1c", "fig1d", "fig2_greedy_scan", "fig3_k5_d3", "fig3_k5_d7",
           "fig4_sensitivity_h", "fig4_sensitivity_q", "fig4_sensitivity_t0", "fig5_csv")
EXTRA_PRESETS = ("fig1a_exp_link", "gap_plateau")


def default_t0(K: int, d: int) -> int:
    return 8 * K * d


def comparison_policies(K: int, d: int, incorrect_prior: bool = False) -> list[PolicyConfig]:
    """The six algorithms compared in the synthetic experiments.

    Under the incorrect-prior regime OFUL and both Thompson samplers estimate
    the noise scale, and the prior-dependent sampler assumes beta ~ 10 N(0, I).
    """
    unknown = {"estimate_sigma": True} if incorrect_prior else {}
    prior_var = 100.0 if incorrect_prior else 1.0
    return [
        PolicyConfig("greedy"),
        PolicyConfig("greedy_first", t0=default_t0(K, d)),
        PolicyConfig("ols_bandit"),
        PolicyConfig("oful", **unknown),
        PolicyConfig("ts_prior_free", **unknown),
        PolicyConfig("ts_prior_dependent", prior_var=prior_var, **unknown),
    ]


def _synthetic(name, *, intercept, incorrect, K=2, d=3, sigma_rule="fixed"):
    d_eff = d + int(intercept)
    return ExperimentConfig(name=name, K=K, d=d, intercept=intercept,
                            prior="incorrect" if incorrect else "correct",
                            sigma_rule=sigma_rule, sigma=0.5,
                            policies=comparison_policies(K, d_eff, incorrect), **DESK)


def _sensitivity(param):
    base = _synthetic(f"fig4_sensitivity_{param}", intercept=True, incorrect=False)
    K, d_eff = base.K, base.d + 1
    pols = []
    for v in SENSITIVITY_GRIDS[param]:
        kw = {"t0": default_t0(K, d_eff), param: v}
        pols.append(PolicyConfig("greedy_first", name=f"greedy_first_{param}={v:g}", **kw))
    base.policies = pols
    return base


def replicate(preset_name: str, full: bool = False, csv_path: str | None = None,
              normalize_csv: bool = False) -> ExperimentConfig:
    """The experiment configuration for a named figure regime (desk scale unless ``full``)."""
    if preset_name == "fig1a":
        cfg = _synthetic("fig1a", intercept=False, incorrect=False)
    elif preset_name == "fig1b":
        cfg = _synthetic("fig1b", intercept=False, incorrect=True)
    elif preset_name == "fig1c":
        cfg = _synthetic("fig1c", intercept=True, incorrect=False)
    elif preset_name == "fig1d":
        cfg = _synthetic("fig1d", intercept=True, incorrect=True)
    elif preset_name == "fig2_greedy_scan":
        cfg = ExperimentConfig(name="fig2_greedy_scan", K=5, d=2, sigma_rule="snr",
                               policies=[PolicyConfig("greedy")], sweep={"d": list(range(2, 11))}, **DESK)
    elif preset_name in ("fig3_k5_d3", "fig3_k5_d7"):
        d = int(preset_name[-1])
        cfg = _synthetic(preset_name, intercept=False, incorrect=False, K=5, d=d, sigma_rule="snr")
    elif preset_name.startswith("fig4_sensitivity_") and preset_name[17:] in SENSITIVITY_GRIDS:
        cfg = _sensitivity(preset_name[17:])
    elif preset_name == "fig5_csv":
        if csv_path is None:
            raise ValueError("fig5_csv needs a covariate file (csv_path / --csv PATH)")
        d = load_csv_covariates(csv_path, normalize=normalize_csv).dim
        context = {"kind": "csv", "path": str(csv_path), "normalize": normalize_csv}
        cfg = ExperimentConfig(name="fig5_csv", K=2, d=d, context=context,
                               policies=comparison_policies(2, d), sweep={"K": [2, 3]}, **DESK)
        # t0 = 8Kd depends on K, so leave it to the policy default within the sweep.
        cfg.policies[1] = PolicyConfig("greedy_first")
    elif preset_name == "fig1a_exp_link":
        cfg = ExperimentConfig(name="fig1a_exp_link", K=2, d=3, link="exp",
                               policies=[PolicyConfig("greedy"), PolicyConfig("modified_greedy")], **DESK)
    elif preset_name == "gap_plateau":
        cfg = ExperimentConfig(name="gap_plateau", K=2, d=3, gap_kappa0=0.5,
                               policies=[PolicyConfig("greedy")], **DESK)
    else:
        raise ValueError(f"unknown preset {preset_name!r}; known: {', '.join(PRESETS + EXTRA_PRESETS)}")
    if full:
        cfg.n_runs, cfg.T = FULL["n_runs"], FULL["T"]
    return cfg
