"""Greedy and exploration-based linear contextual bandits: policies, environments, audits and experiments."""

from .diversity import (DiversityReport, TheoryConstants, ball_second_moment, check_sufficient_conditions,
                        estimate_lambda0, margin_probability, theory_constants)
from .environments import (AlphaMarginSynthetic, CsvCovariates, GibbsHypercube, InterceptAugmented,
                           ParameterPrior, TruncatedGaussian, UniformBall, gap_filter,
                           load_csv_covariates, sample_alpha_margin_context, sample_context,
                           sample_instance)
from .export import export, read_csv
from .harness import BatchSummary, ExperimentConfig, Trajectory, run_batch, run_episode
from .linalg import gaussian_sample, gram_rank_one_update, min_eigen_sym, ols_solve
from .model import (ArmState, LinkFunction, ProblemInstance, StepRecord, arm_update,
                    instantaneous_regret, link_forward, link_inverse)
from .policies import PolicyConfig, PolicyEnv, make_policy
from .presets import replicate

__version__ = "0.1.0"
