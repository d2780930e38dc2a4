import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from banditlab.diversity import (CBAR_MAX, ball_second_moment, ball_volume, cbar, check_sufficient_conditions,
                                 estimate_lambda0, margin_curve, theory_constants)
from banditlab.linalg import min_eigen_sym
from banditlab.environments import (CsvCovariates, GibbsHypercube, InterceptAugmented,
                                    TruncatedGaussian, UniformBall)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_uniform_interval_oracle():
    rep = estimate_lambda0(UniformBall(1, 1.0), 200_000, 100, rng(1))
    assert abs(rep.lambda0_hat - 1 / 6) <= 3 * rep.mc_stderr + 1e-3


def test_rademacher_oracle():
    rep = estimate_lambda0(GibbsHypercube.rademacher(2), 200_000, 100, rng(2))
    assert abs(rep.lambda0_hat - 0.5) <= 3 * rep.mc_stderr + 1e-3
    assert rep.full_moment_min_eig == pytest.approx(1.0, abs=0.01)


def test_intercept_has_no_diversity():
    rep = estimate_lambda0(InterceptAugmented(TruncatedGaussian.box_preset(3)), 50_000, 100, rng(3))
    assert rep.lambda0_hat < 0.02


def test_degenerate_distribution_warns():
    with pytest.warns(RuntimeWarning):
        rep = estimate_lambda0(CsvCovariates(np.ones((3, 2))), 1000, 100, rng())
    assert rep.lambda0_hat == 0.0


def test_budget_validation():
    with pytest.raises(ValueError):
        estimate_lambda0(UniformBall(2), 999, 100)
    with pytest.raises(ValueError):
        estimate_lambda0(UniformBall(2), 1000, 99)


def test_report_serializes():
    rep = estimate_lambda0(UniformBall(2), 2000, 100, rng())
    d = rep.to_dict()
    assert d["n_directions"] == 100 + 4 and len(d["worst_direction"]) == 2
    assert '"lambda0_hat"' in rep.to_json()


def test_estimate_reproducible():
    a = estimate_lambda0(UniformBall(3), 5000, 100, rng(7))
    b = estimate_lambda0(UniformBall(3), 5000, 100, rng(7))
    assert a == b


def test_lambda0_below_full_moment():
    # Restricting to a half-space can only shrink the second moment.
    rep = estimate_lambda0(TruncatedGaussian.box_preset(3), 50_000, 100, rng(4))
    assert rep.lambda0_hat <= rep.full_moment_min_eig


@pytest.mark.parametrize("d", [1, 3, 5])
def test_ball_second_moment_identity(d):
    n = 400_000
    x = UniformBall(d, 1.0).sample(rng(d), n)
    target = ball_second_moment(d, 1.0)
    prods = (x[:, :, None] * x[:, None, :]).reshape(n, -1)
    est, se = prods.mean(axis=0), prods.std(axis=0) / math.sqrt(n)
    expected = (target * np.eye(d)).ravel()
    # Bonferroni over the d^2 entries at a 0.1% family-wise level
    z = norm.ppf(1 - 0.001 / (2 * d * d))
    assert np.all(np.abs(est - expected) <= z * se + 1e-12)


def test_ball_volume_known_values():
    assert ball_volume(1, 1.0) == pytest.approx(2.0)
    assert ball_volume(2, 1.0) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)
    assert ball_volume(4, 0.0) == 0.0


def test_sufficient_conditions_uniform_ball():
    rep = check_sufficient_conditions(UniformBall(3, 1.0))
    assert rep.checkable and all(rep.conditions.values())
    assert rep.lam == pytest.approx(0.2)
    assert rep.implied_lambda0_lb == pytest.approx(0.1)


def test_sufficient_conditions_bound_is_valid_for_rademacher():
    dist = GibbsHypercube.rademacher(3)
    rep = check_sufficient_conditions(dist)
    # exact half-space moments by enumerating the 8 support points
    U = rng(5).standard_normal((500, 3))
    exact = min(min_eigen_sym(((dist.points @ u >= 0) * dist.probs * dist.points.T) @ dist.points)
                for u in U)
    assert rep.a_over_b == pytest.approx(1.0)
    assert rep.implied_lambda0_lb <= exact + 1e-12


def test_sufficient_conditions_asymmetric_gibbs_ratio():
    J = np.array([[0.0, 0.5], [0.5, 0.0]])
    rep = check_sufficient_conditions(GibbsHypercube(J))
    # the Ising weight is even in x, so p(x) = p(-x)
    assert rep.a_over_b == pytest.approx(1.0)


def test_sufficient_conditions_truncated_gaussians():
    box = check_sufficient_conditions(TruncatedGaussian.box_preset(3))
    assert box.checkable and box.lam == pytest.approx(0.1934, abs=1e-3)
    ball = check_sufficient_conditions(TruncatedGaussian(np.eye(2), truncation="l2", bound=1.0))
    assert ball.checkable and ball.lam > 0 and "M=" in ball.note


def test_sufficient_conditions_unsupported_and_manual():
    rep = check_sufficient_conditions(InterceptAugmented(UniformBall(2)))
    assert not rep.checkable and "not checkable" in rep.note
    manual = check_sufficient_conditions(InterceptAugmented(UniformBall(2)), a_over_b=0.5, moment_lb=0.2)
    assert manual.implied_lambda0_lb == pytest.approx(0.05)
    assert not check_sufficient_conditions(UniformBall(2), a_over_b=0.5).checkable


def test_margin_curve_monotone():
    x = TruncatedGaussian.box_preset(3).sample(rng(6), 20_000)
    probs = [m.probability for m in margin_curve(x, [1.0, -1.0, 0.5], np.linspace(0.01, 2, 30))]
    assert all(a <= b for a, b in zip(probs, probs[1:]))


def test_cbar_endpoints():
    assert f"{cbar(2):.2f}" == f"{CBAR_MAX:.2f}" == "51.84"
    values = [cbar(d) for d in (2, 5, 10, 100, 1000, 10 ** 6, 10 ** 100, 10 ** 100_000)]
    assert all(a > b > 1 / 3 for a, b in zip(values, values[1:]))
    # the (log d)^-1/2 term dominates the approach to 1/3, so convergence is very slow
    assert values[-1] - 1 / 3 < 0.01
    with pytest.raises(ValueError):
        cbar(1)


@pytest.mark.parametrize("lambda0,xmax,sigma,d", [(0.1, 1.0, 0.5, 3), (0.25, 2.0, 1.0, 2), (1.0, 0.5, 0.1, 10)])
def test_constants_hand_computation(lambda0, xmax, sigma, d):
    c = theory_constants(lambda0, xmax, 1.0, sigma, d)
    assert abs(c.C1 - lambda0 / (40 * xmax ** 2)) <= 1e-12
    assert abs(c.lam - lambda0 / 4) <= 1e-12
    assert abs(c.C2 - (lambda0 / 4) ** 2 / (2 * d * sigma ** 2 * xmax ** 2)) <= 1e-12


def test_switch_probability_decays_in_t0():
    deltas = [theory_constants(0.1, 1.0, 1.0, 0.5, 3, t0=t0).switch_delta for t0 in (1, 100, 10_000)]
    assert deltas[0] > deltas[1] > deltas[2]


def test_constants_validation():
    with pytest.raises(ValueError):
        theory_constants(0.0, 1.0, 1.0, 0.5, 3)
    with pytest.raises(ValueError):
        theory_constants(0.1, 1.0, 1.0, 0.5, 1)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 10), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(0.05, 3), st.integers(2, 50))
def test_constants_positive_and_bound_decreasing_in_lambda0(lambda0, xmax, bmax, sigma, d):
    a = theory_constants(lambda0, xmax, bmax, sigma, d)
    b = theory_constants(2 * lambda0, xmax, bmax, sigma, d)
    assert a.C_GB > b.C_GB > 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert math.isfinite(a.switch_delta)
