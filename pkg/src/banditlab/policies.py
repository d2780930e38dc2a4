"""Decision policies sharing one select/update contract.

Every policy is built from a :class:`PolicyConfig` plus a :class:`PolicyEnv`
(what the learner is allowed to know about the problem) and two random
streams: ``rng`` for its own randomness (posterior draws, uniform play) and
``tie_rng`` for breaking exact ties. Greedy-type policies only ever touch
``tie_rng``, so two such policies given equal tie streams act identically
until their rules diverge.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .linalg import EPS_INV_REL
from .model import ArmState, LinkFunction, link_inverse

KINDS = ("greedy", "modified_greedy", "greedy_first", "heuristic_greedy_first", "ols_bandit",
         "oful", "ts_prior_free", "ts_prior_dependent", "oracle", "uniform_random")

INITIAL_SIGMA = 1.0


@dataclass
class PolicyConfig:
    """Policy kind plus its parameters. ``None`` means "derive from the experiment".

    ``lambda0=None`` lets the harness audit the context distribution,
    ``t0=None`` means 8 K d, ``S=None`` means the instance's bmax, and
    ``sigma=None`` means the true noise scale unless ``estimate_sigma`` is set.
    """

    kind: str
    name: str | None = None
    lambda0: float | None = None
    t0: int | None = None
    normalize_by_t0: bool = True
    h: float = 5.0
    q: int = 1
    ridge: float = 1.0
    delta: float = 0.01
    S: float | None = None
    sigma: float | None = None
    estimate_sigma: bool = False
    prior_mean: float = 0.0
    prior_var: float = 1.0
    link: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.name is None:
            self.name = self.kind
        if self.lambda0 is not None and self.lambda0 < 0:
            raise ValueError("lambda0 must be non-negative")
        if self.t0 is not None and self.t0 < 0:
            raise ValueError("t0 must be non-negative")
        if self.h <= 0 or self.q < 1:
            raise ValueError("ols_bandit needs h > 0 and q >= 1")
        if self.ridge <= 0 or not 0 < self.delta < 1:
            raise ValueError("need ridge > 0 and 0 < delta < 1")
        if self.prior_var <= 0:
            raise ValueError("prior_var must be positive")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.link is not None:
            LinkFunction.from_name(self.link)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown policy config keys: {sorted(unknown)}")
        if "kind" not in data:
            raise ValueError("policy config needs a 'kind'")
        return cls(**data)


@dataclass
class PolicyEnv:
    """Problem facts handed to a policy: sizes, norm bounds, noise, link and (oracle only) truth."""

    K: int
    d: int
    xmax: float = 1.0
    bmax: float = 1.0
    sigma: float = 1.0
    link: LinkFunction = field(default_factory=LinkFunction.identity)
    betas: np.ndarray | None = None


def argmax_random_tie(values: np.ndarray, rng: np.random.Generator) -> int:
    """Index of the maximum, uniform among exact ties (``rng`` is used only on a tie)."""
    best = int(np.argmax(values))
    top = values[best]
    if np.count_nonzero(values == top) == 1:
        return best
    return int(rng.choice(np.flatnonzero(values == top)))


def forced_arm(t: int, K: int, q: int) -> int | None:
    """Arm forced at (1-based) round ``t`` of the OLS Bandit schedule, or None.

    Arm i (0-based) is forced at rounds (2^n - 1) K q + j for j in (i q, (i + 1) q].
    """
    if t < 1:
        return None
    block = K * q
    n = 0
    while True:
        start = ((1 << n) - 1) * block
        if start >= t:
            return None
        off = t - start
        if off <= block:
            return (off - 1) // q
        n += 1


def forced_schedule(i: int, K: int, q: int, T: int) -> list[int]:
    """All rounds up to ``T`` at which arm ``i`` is forced."""
    out = []
    n = 0
    while ((1 << n) - 1) * K * q < T:
        start = ((1 << n) - 1) * K * q
        out.extend(t for t in range(start + i * q + 1, start + (i + 1) * q + 1) if t <= T)
        n += 1
    return out


class Policy:
    """Base class: K greedy-style arm states plus the select/update contract."""

    def __init__(self, config: PolicyConfig, env: PolicyEnv, init_estimates=None,
                 rng: np.random.Generator | None = None, tie_rng: np.random.Generator | None = None):
        self.config = config
        self.env = env
        self.K, self.d = env.K, env.d
        self.rng = rng if rng is not None else np.random.default_rng()
        self.tie_rng = tie_rng if tie_rng is not None else self.rng
        if init_estimates is None:
            init_estimates = np.zeros((self.K, self.d))
        init_estimates = np.asarray(init_estimates, dtype=float)
        if init_estimates.shape != (self.K, self.d):
            raise ValueError("init_estimates must have shape (K, d)")
        self.arms = [ArmState(self.d, init_estimates[i]) for i in range(self.K)]
        self.switch_time = 0

    @property
    def estimates(self) -> np.ndarray:
        return np.array([a.estimate for a in self.arms])

    def set_estimates(self, betas) -> None:
        """Overwrite the current estimates (used to inject known parameters in tests)."""
        for a, b in zip(self.arms, np.asarray(betas, dtype=float)):
            a.init_estimate = b.copy()
            a.estimate = b.copy()

    def select(self, x, t: int) -> int:  # pragma: no cover - abstract
        raise NotImplementedError

    def update(self, x, arm: int, y: float, t: int) -> None:
        self.arms[arm].update(x, y)

    def _greedy_choice(self, x) -> int:
        vals = np.array([a.estimate @ x for a in self.arms])
        return argmax_random_tie(vals, self.tie_rng)


class GreedyPolicy(Policy):
    """Play the arm with the largest estimated reward; no exploration."""

    def select(self, x, t):
        return self._greedy_choice(x)


class ModifiedGreedyPolicy(GreedyPolicy):
    """Greedy on transformed rewards z = psi^{-1}(y).

    Selection compares x^T beta_hat directly: psi is strictly increasing, so
    the argmax is the same as that of psi(x^T beta_hat) and nothing overflows.
    """

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        self.link = LinkFunction.from_name(config.link) if config.link else env.link

    def update(self, x, arm, y, t):
        self.arms[arm].update(x, float(link_inverse(self.link, y)))


class OLSBanditPolicy(Policy):
    """Forced sampling on a doubling schedule with a forced-estimate filter of width h/2."""

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        self.forced = [ArmState(self.d) for _ in range(self.K)]
        self.offset = 0  # rounds before the OLS Bandit phase began
        self._last_forced = None

    def _ols_select(self, x, t):
        t_rel = t - self.offset
        arm = forced_arm(t_rel, self.K, self.config.q)
        self._last_forced = (t, arm)
        if arm is not None:
            return arm
        tilde = np.array([f.estimate @ x for f in self.forced])
        keep = tilde >= tilde.max() - self.config.h / 2
        vals = np.array([a.estimate @ x for a in self.arms])
        vals[~keep] = -np.inf
        return argmax_random_tie(vals, self.tie_rng)

    def _ols_update(self, x, arm, y, t):
        if self._last_forced is not None and self._last_forced[0] == t:
            forced = self._last_forced[1]
        else:
            forced = forced_arm(t - self.offset, self.K, self.config.q)
        if forced == arm:
            self.forced[arm].update(x, y)
        self.arms[arm].update(x, y)

    def select(self, x, t):
        return self._ols_select(x, t)

    def update(self, x, arm, y, t):
        self._ols_update(x, arm, y, t)


class GreedyFirstPolicy(OLSBanditPolicy):
    """Greedy while every arm's Gram matrix keeps lambda_min >= lambda0 t / 4, then OLS Bandit for good.

    The check runs after each update for t > t0. The certified lower bound
    1/trace(G^-1) settles most checks; the exact Jacobi eigenvalue is computed
    only when that bound falls below the threshold.
    """

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        self.t0 = config.t0 if config.t0 is not None else 8 * self.K * self.d
        if config.kind == "greedy_first" and config.lambda0 is None:
            raise ValueError("greedy_first needs lambda0 (the harness fills it in from the auditor)")
        self.lambda0 = config.lambda0

    def select(self, x, t):
        if self.switch_time == 0:
            return self._greedy_choice(x)
        return self._ols_select(x, t)

    def update(self, x, arm, y, t):
        if self.switch_time == 0:
            self.arms[arm].update(x, y)
            if self.greedy_first_check(t) == "switch":
                self._switch(t)
        else:
            self._ols_update(x, arm, y, t)

    def _switch(self, t):
        self.switch_time = t
        self.offset = t
        self.forced = [ArmState(self.d) for _ in range(self.K)]

    def min_gram_eigenvalue(self, threshold: float = math.inf) -> float:
        """min_i lambda_min(G_i), exact unless every arm's lower bound already clears ``threshold``."""
        lbs = [a.min_eig_lower_bound for a in self.arms]
        if min(lbs) >= threshold:
            return min(lbs)
        return min(a.min_eig for a in self.arms)

    def greedy_first_check(self, t: int) -> str:
        if self.switch_time != 0 or t <= self.t0:
            return "continue"
        threshold = self.lambda0 * t / 4
        if self.min_gram_eigenvalue(threshold) < threshold:
            return "switch"
        return "continue"


class HeuristicGreedyFirstPolicy(GreedyFirstPolicy):
    """Greedy-First that sets its own lambda0 from the Gram matrices after t0 greedy rounds.

    lambda' = min_i lambda_min(G_i) / 2, divided by t0 when ``normalize_by_t0``
    is set so that it is a per-round quantity. A zero lambda' sends the policy
    straight to OLS Bandit.
    """

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        self.lambda_prime = None

    def update(self, x, arm, y, t):
        if self.switch_time == 0 and self.lambda_prime is None:
            self.arms[arm].update(x, y)
            if t >= self.t0:
                if self.heuristic_init() == "ols_bandit":
                    self._switch(t)
            return
        super().update(x, arm, y, t)

    def heuristic_init(self) -> str:
        lam = 0.5 * min(a.min_eig for a in self.arms)
        if self.config.normalize_by_t0 and self.t0 > 0:
            lam /= self.t0
        trace = max(float(np.trace(a.gram)) for a in self.arms)
        self.lambda_prime = lam if lam > EPS_INV_REL * max(trace, 1.0) else 0.0
        self.lambda0 = self.lambda_prime
        return "continue" if self.lambda_prime > 0 else "ols_bandit"


class _SigmaTracker:
    """Noise scale: fixed, or the pooled residual variance RSS / (n - K d) of per-arm fits."""

    def __init__(self, config, env):
        self.estimate = config.estimate_sigma
        self.fixed = config.sigma if config.sigma is not None else env.sigma
        self.value = INITIAL_SIGMA if self.estimate else self.fixed

    def refresh(self, arms, K, d):
        if not self.estimate:
            return
        n = sum(a.n for a in arms)
        if n <= K * d:
            return
        rss = sum(a.residual_sum_squares() for a in arms)
        self.value = max(math.sqrt(rss / (n - K * d)), 1e-8)


class _RidgeArm:
    """Ridge statistics V = ridge I + sum x x^T and b = sum z x with a Sherman-Morrison inverse."""

    def __init__(self, d, ridge):
        self.n = 0
        self.V_inv = np.eye(d) / ridge
        self.b = np.zeros(d)
        self.beta = np.zeros(d)

    def update(self, x, z):
        u = self.V_inv @ x
        self.V_inv -= np.outer(u, u) / (1.0 + x @ u)
        self.b += z * x
        self.beta = self.V_inv @ self.b
        self.n += 1


class OFULPolicy(Policy):
    """Optimism in the face of uncertainty with a per-arm ridge confidence ellipsoid.

    index_i = x^T beta_ridge_i + rho_i sqrt(x^T V_i^-1 x),
    rho_i = sigma sqrt(d log((1 + n_i xmax^2 / ridge) / delta)) + sqrt(ridge) S.
    """

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        self.ridge = [_RidgeArm(self.d, config.ridge) for _ in range(self.K)]
        self.S = config.S if config.S is not None else (env.bmax if env.bmax is not None else 1.0)
        self.sigma = _SigmaTracker(config, env)
        self.rho_override = None

    def radius(self, i: int) -> float:
        if self.rho_override is not None:
            return self.rho_override
        c = self.config
        n = self.ridge[i].n
        xm2 = self.env.xmax ** 2 if math.isfinite(self.env.xmax) else 1.0
        return (self.sigma.value * math.sqrt(self.d * math.log((1 + n * xm2 / c.ridge) / c.delta))
                + math.sqrt(c.ridge) * self.S)

    def index(self, x) -> np.ndarray:
        return np.array([r.beta @ x + self.radius(i) * math.sqrt(max(x @ r.V_inv @ x, 0.0))
                         for i, r in enumerate(self.ridge)])

    def select(self, x, t):
        return argmax_random_tie(self.index(x), self.tie_rng)

    def update(self, x, arm, y, t):
        self.ridge[arm].update(x, y)
        self.arms[arm].update(x, y)
        self.sigma.refresh(self.arms, self.K, self.d)


class TSPriorFreePolicy(OFULPolicy):
    """Thompson sampling from N(beta_ridge_i, v_t^2 V_i^-1) with v_t = sigma sqrt(9 d ln(t / delta)).

    Only x^T beta_tilde_i matters for the choice, so each arm's draw is taken
    as the equivalent univariate normal N(x^T beta_ridge_i, v_t^2 x^T V_i^-1 x).
    """

    def scale(self, t: int) -> float:
        t = max(t, 1)
        return self.sigma.value * math.sqrt(9 * self.d * math.log(t / self.config.delta))

    def select(self, x, t):
        v = self.scale(t)
        means = np.array([r.beta @ x for r in self.ridge])
        sds = np.array([math.sqrt(max(x @ r.V_inv @ x, 0.0)) for r in self.ridge])
        return argmax_random_tie(means + v * sds * self.rng.standard_normal(self.K), self.tie_rng)


class TSPriorDependentPolicy(Policy):
    """Thompson sampling from the exact conjugate posterior under prior N(mu0 1, s0 I) and noise sigma^2.

    Draws are univariate, as in :class:`TSPriorFreePolicy`.
    """

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        self.sigma = _SigmaTracker(config, env)
        self.prior_mean = np.full(self.d, float(config.prior_mean))
        self.prior_prec = np.eye(self.d) / config.prior_var
        self._post = [None] * self.K
        self._post_sigma = None

    def posterior(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        s = self.sigma.value
        if self._post_sigma != s:
            self._post = [None] * self.K
            self._post_sigma = s
        if self._post[i] is None:
            a = self.arms[i]
            s2 = s * s
            cov = np.linalg.inv(self.prior_prec + a.gram / s2)
            cov = 0.5 * (cov + cov.T)
            mean = cov @ (self.prior_prec @ self.prior_mean + a.moment / s2)
            self._post[i] = (mean, cov)
        return self._post[i]

    def select(self, x, t):
        draws = np.empty(self.K)
        z = self.rng.standard_normal(self.K)
        for i in range(self.K):
            mean, cov = self.posterior(i)
            draws[i] = mean @ x + math.sqrt(max(x @ cov @ x, 0.0)) * z[i]
        return argmax_random_tie(draws, self.tie_rng)

    def update(self, x, arm, y, t):
        self.arms[arm].update(x, y)
        self._post[arm] = None
        self.sigma.refresh(self.arms, self.K, self.d)


class OraclePolicy(Policy):
    """Plays argmax_i x^T beta_i with the true parameters."""

    def __init__(self, config, env, *args, **kw):
        super().__init__(config, env, *args, **kw)
        if env.betas is None:
            raise ValueError("the oracle needs the true parameters")
        self.betas = np.asarray(env.betas, dtype=float)

    def select(self, x, t):
        return argmax_random_tie(self.betas @ x, self.tie_rng)

    def update(self, x, arm, y, t):
        pass


class UniformRandomPolicy(Policy):
    """Plays a uniformly random arm every round."""

    def select(self, x, t):
        return int(self.rng.integers(self.K))

    def update(self, x, arm, y, t):
        pass


_CLASSES = {
    "greedy": GreedyPolicy,
    "modified_greedy": ModifiedGreedyPolicy,
    "greedy_first": GreedyFirstPolicy,
    "heuristic_greedy_first": HeuristicGreedyFirstPolicy,
    "ols_bandit": OLSBanditPolicy,
    "oful": OFULPolicy,
    "ts_prior_free": TSPriorFreePolicy,
    "ts_prior_dependent": TSPriorDependentPolicy,
    "oracle": OraclePolicy,
    "uniform_random": UniformRandomPolicy,
}


def make_policy(config: PolicyConfig, env: PolicyEnv, init_estimates=None,
                rng: np.random.Generator | None = None,
                tie_rng: np.random.Generator | None = None) -> Policy:
    return _CLASSES[config.kind](config, env, init_estimates, rng, tie_rng)


def select(policy: Policy, x, t: int) -> int:
    return policy.select(np.asarray(x, dtype=float), t)


def update(policy: Policy, x, chosen: int, y: float, t: int) -> Policy:
    policy.update(np.asarray(x, dtype=float), chosen, y, t)
    return policy


def greedy_first_check(policy: GreedyFirstPolicy, t: int) -> str:
    return policy.greedy_first_check(t)


def heuristic_init(policy: HeuristicGreedyFirstPolicy) -> str:
    return policy.heuristic_init()
