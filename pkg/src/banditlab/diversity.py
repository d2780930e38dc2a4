"""Covariate-diversity auditing, margin curves and the regret-bound constants."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln
from scipy.stats import norm

from .environments import (ContextDistribution, GibbsHypercube, TruncatedGaussian,
                           UniformBall)
from .linalg import min_eigen_sym

CBAR_MAX = 51.84


@dataclass
class DiversityReport:
    """Estimated lambda_0 = inf_u lambda_min(E[X X^T 1{X^T u >= 0}]).

    The infimum is taken over a finite direction set, so ``lambda0_hat`` is an
    upper estimate of the true constant (up to Monte Carlo error).
    """

    lambda0_hat: float
    worst_direction: list
    n_samples: int
    n_directions: int
    mc_stderr: float
    full_moment_min_eig: float
    note: str = "upper estimate of lambda0 over a finite direction set"

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _directions(d, n_random, rng):
    g = rng.standard_normal((n_random, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    eye = np.eye(d)
    return np.vstack([g, eye, -eye])


def estimate_lambda0(dist: ContextDistribution, n_samples: int = 100_000, n_directions: int = 200,
                     rng: np.random.Generator | None = None, n_blocks: int = 50,
                     chunk: int = 20_000) -> DiversityReport:
    """Monte Carlo audit of the covariate-diversity constant.

    One sample pool is drawn and reused for every direction (``n_directions``
    uniform unit vectors plus the +/- coordinate axes). Ties X^T u = 0 count
    as inside the half-space. The standard error is a block jackknife at the
    minimizing direction.
    """
    if n_samples < 1000 or n_directions < 100:
        raise ValueError("need n_samples >= 1000 and n_directions >= 100")
    rng = np.random.default_rng() if rng is None else rng
    X = dist.sample(rng, n_samples)
    d = X.shape[1]
    U = _directions(d, n_directions, rng)

    if np.all(X == X[0]):
        warnings.warn("degenerate context distribution: all samples are equal", RuntimeWarning)
        return DiversityReport(0.0, U[0].tolist(), n_samples, len(U), 0.0, 0.0)

    n_blocks = min(n_blocks, n_samples)
    edges = np.linspace(0, n_samples, n_blocks + 1).astype(int)
    block_sums = np.zeros((n_blocks, len(U), d * d))
    for b in range(n_blocks):
        for start in range(edges[b], edges[b + 1], chunk):
            xs = X[start:min(start + chunk, edges[b + 1])]
            ind = (xs @ U.T >= 0).astype(float)
            outer = (xs[:, :, None] * xs[:, None, :]).reshape(len(xs), d * d)
            block_sums[b] += ind.T @ outer
    total = block_sums.sum(axis=0)
    means = (total / n_samples).reshape(len(U), d, d)
    lams = np.array([min_eigen_sym(m) for m in means])
    j = int(np.argmin(lams))

    sizes = np.diff(edges)
    loo = np.array([min_eigen_sym(((total[j] - block_sums[b, j]) / (n_samples - sizes[b])).reshape(d, d))
                    for b in range(n_blocks)])
    se = math.sqrt((n_blocks - 1) / n_blocks * float(np.sum((loo - loo.mean()) ** 2)))
    full = min_eigen_sym(X.T @ X / n_samples)
    return DiversityReport(max(0.0, float(lams[j])), U[j].tolist(), n_samples, len(U), se, full)


# ---------------------------------------------------------------------------
# Sufficient conditions


@dataclass
class SufficientConditionReport:
    """Outcome of checking the symmetric-set sufficient conditions for diversity."""

    family: str
    checkable: bool
    a_over_b: float | None = None
    lam: float | None = None
    implied_lambda0_lb: float | None = None
    conditions: dict = field(default_factory=lambda: {"a": False, "b": False, "c": False})
    note: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def ball_volume(d: int, R: float) -> float:
    if R == 0:
        return 0.0
    return math.exp(0.5 * d * math.log(math.pi) + d * math.log(R) - gammaln(0.5 * d + 1.0))


def ball_second_moment(d: int, R: float) -> float:
    """Per-coordinate second moment R^2 / (d + 2) of the uniform law on the d-ball of radius R."""
    if d < 1 or R < 0:
        raise ValueError("need d >= 1 and R >= 0")
    return R * R / (d + 2)


def ball_second_moment_integral(d: int, R: float) -> float:
    """Unnormalized integral of x_1^2 over the ball: R^2 / (d + 2) * vol(B_R^d)."""
    return ball_second_moment(d, R) * ball_volume(d, R)


def truncated_gaussian_uniform_bound(cov, xmax: float) -> float:
    """Density-floor bound: (2 pi)^{-d/2} |cov|^{-1/2} e^{-xmax^2 / (2 lmin(cov))} xmax^2/(d+2) vol(B)."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    sign, logdet = np.linalg.slogdet(cov)
    lmin = min_eigen_sym(cov)
    log_val = (-0.5 * d * math.log(2 * math.pi) - 0.5 * logdet - xmax * xmax / (2 * lmin))
    return math.exp(log_val) * ball_second_moment_integral(d, xmax)


def gaussian_tail_radius(cov) -> float:
    """Radius M = sqrt(log(2) (2d + 8) lmax(cov)) beyond which truncation keeps half of cov."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    return math.sqrt(math.log(2) * (2 * d + 8) * float(np.linalg.eigvalsh(cov)[-1]))


def _box_truncated_variances(cov, bound):
    sd = np.sqrt(np.diag(cov))
    b = bound / sd
    mass = 2 * norm.cdf(b) - 1
    return sd * sd * (1 - 2 * b * norm.pdf(b) / mass)


def check_sufficient_conditions(dist: ContextDistribution, a_over_b: float | None = None,
                 moment_lb: float | None = None) -> SufficientConditionReport:
    """Check the symmetric-set sufficient conditions for covariate diversity.

    For built-in families the density ratio bound ``a/b`` and the second-moment
    bound ``lam`` are computed analytically; for anything else the caller must
    supply both. The implied lower bound on lambda_0 is ``a lam / (2 b)``.
    """
    family = dist.kind
    note = ""
    if a_over_b is None and moment_lb is None:
        if isinstance(dist, UniformBall):
            R, d = dist.radius, dist.dim
            a_over_b = 1.0
            moment_lb = R ** (d + 2) / ((d + 2) * dist.xmax ** d) if R > 0 else 0.0
        elif isinstance(dist, GibbsHypercube):
            n = len(dist.points)
            # points are ordered so that index n-1-k is the negation of index k
            ratio = dist.probs / dist.probs[::-1]
            a_over_b = float(ratio.min())
            moment_lb = min_eigen_sym(dist.second_moment())
            assert n == 2 ** dist.dim
        elif isinstance(dist, TruncatedGaussian) and dist.truncation == "l2":
            a_over_b = 1.0
            lam_uni = truncated_gaussian_uniform_bound(dist.cov, dist.xmax)
            M = gaussian_tail_radius(dist.cov)
            lam_half = min_eigen_sym(dist.cov) / 2 if dist.xmax >= M else 0.0
            moment_lb = max(lam_half, lam_uni)
            note = f"M={M:.6g}; xmax {'>=' if dist.xmax >= M else '<'} M"
        elif (isinstance(dist, TruncatedGaussian) and dist.truncation == "linf"
              and np.count_nonzero(dist.cov - np.diag(np.diag(dist.cov))) == 0):
            a_over_b = 1.0
            moment_lb = float(_box_truncated_variances(dist.cov, dist.bound).min())
            note = "diagonal covariance, box truncation: exact coordinate variances"
        else:
            return SufficientConditionReport(family, False, note="not checkable: unsupported family")
    elif a_over_b is None or moment_lb is None:
        return SufficientConditionReport(family, False, note="not checkable: need both a/b and lambda")
    conditions = {"a": True, "b": a_over_b > 0, "c": moment_lb > 0}
    implied = a_over_b * moment_lb / 2 if all(conditions.values()) else 0.0
    return SufficientConditionReport(family, True, float(a_over_b), float(moment_lb),
                                     float(implied), conditions, note)


# ---------------------------------------------------------------------------
# Margins


class MarginEstimate(NamedTuple):
    probability: float
    stderr: float


def margin_probability(dist: ContextDistribution, beta_diff, kappa: float, n_samples: int,
                       rng: np.random.Generator) -> MarginEstimate:
    """Monte Carlo estimate of P(0 < |X^T beta_diff| <= kappa) with its binomial standard error."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    X = dist.sample(rng, n_samples)
    return margin_curve(X, beta_diff, [kappa])[0]


def margin_curve(X, beta_diff, kappas) -> list[MarginEstimate]:
    """Margin probabilities on a shared sample for a grid of kappa values (monotone in kappa)."""
    m = np.abs(np.asarray(X) @ np.asarray(beta_diff, dtype=float))
    n = len(m)
    out = []
    for k in kappas:
        p = float(np.mean((m > 0) & (m <= k)))
        out.append(MarginEstimate(p, math.sqrt(p * (1 - p) / n)))
    return out


# ---------------------------------------------------------------------------
# Constants of the regret analysis


def cbar(d: int) -> float:
    """1/3 + 7/2 (log d)^-1/2 + 38/3 (log d)^-1 + 67/4 (log d)^-3/2, defined for d >= 2."""
    if d < 2:
        raise ValueError("Cbar requires d >= 2")
    L = math.log(d)
    return 1 / 3 + 3.5 * L ** -0.5 + (38 / 3) / L + 16.75 * L ** -1.5


@dataclass
class TheoryConstants:
    C1: float
    lam: float
    C2: float
    Cbar: float
    C_GB: float
    switch_delta: float
    lambda0: float
    xmax: float
    bmax: float
    sigma: float
    d: int
    C0: float
    t0: float

    def to_dict(self) -> dict:
        return asdict(self)


def theory_constants(lambda0: float, xmax: float, bmax: float, sigma: float, d: int,
                     C0: float = 1.0, t0: float = 1.0) -> TheoryConstants:
    """Constants of the greedy regret bound and the Greedy-First switch probability.

    C_GB adds the log T coefficient 128 C0 Cbar xmax^4 sigma^2 d (log d)^1.5 / lambda0^2
    to the constant term (the same quantity plus 160 bmax xmax^3 d / lambda0).
    """
    for name, v in (("lambda0", lambda0), ("xmax", xmax), ("bmax", bmax), ("sigma", sigma),
                    ("C0", C0), ("t0", t0)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    if d < 2:
        raise ValueError("theory constants need d >= 2 (log d appears in denominators)")
    C1 = 0.1 * lambda0 / (4 * xmax ** 2)
    lam = lambda0 / 4
    C2 = lam ** 2 / (2 * d * sigma ** 2 * xmax ** 2)
    cb = cbar(d)
    log_coef = 128 * C0 * cb * xmax ** 4 * sigma ** 2 * d * math.log(d) ** 1.5 / lambda0 ** 2
    const = log_coef + 160 * bmax * xmax ** 3 * d / lambda0
    delta = d / C1 * math.exp(-t0 * C1)
    return TheoryConstants(C1, lam, C2, cb, log_coef + const, delta,
                           lambda0, xmax, bmax, sigma, d, C0, t0)
