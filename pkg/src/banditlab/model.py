"""Bandit instances, per-arm learning state, reward links and regret."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import EPS_INV_REL, min_eigen_sym

GH_NODES = 65
_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(GH_NODES)
_GH_W = _GH_W / _GH_W.sum()

# ArmState refreshes its inverse by Cholesky during warm-up (n < SM_WARMUP * d),
# every SM_REFRESH updates, and whenever trace(G) trace(G^-1) exceeds SM_MAX_COND;
# in between it applies Sherman-Morrison rank-one steps.
SM_WARMUP = 8
SM_REFRESH = 32
SM_MAX_COND = 1e6


@dataclass(frozen=True)
class LinkFunction:
    """Strictly increasing reward transform psi with its Lipschitz certificate.

    ``gamma`` and ``theta`` satisfy |psi(x) - psi(y)| <= gamma e^{theta max(|x|,|y|)} |x - y|.
    For the cubic link the certificate only holds on |z| <= ``zmax``.
    """

    kind: str = "identity"
    gamma: float = 1.0
    theta: float = 0.0
    zmax: float = math.inf

    def __post_init__(self):
        if self.kind not in ("identity", "exp", "cubic"):
            raise ValueError(f"unknown link kind {self.kind!r}")

    @classmethod
    def identity(cls) -> "LinkFunction":
        return cls("identity", 1.0, 0.0)

    @classmethod
    def exp(cls) -> "LinkFunction":
        return cls("exp", 1.0, 1.0)

    @classmethod
    def cubic(cls, zmax: float = 10.0) -> "LinkFunction":
        return cls("cubic", 3.0 * zmax * zmax, 0.0, zmax)

    @classmethod
    def from_name(cls, name: str) -> "LinkFunction":
        try:
            return {"identity": cls.identity, "exp": cls.exp, "cubic": cls.cubic}[name]()
        except KeyError:
            raise ValueError(f"unknown link {name!r}") from None

    @property
    def is_linear(self) -> bool:
        return self.kind == "identity"

    def forward(self, z):
        return link_forward(self, z)

    def inverse(self, y):
        return link_inverse(self, y)

    def lipschitz_factor(self, bmax: float, xmax: float, sigma: float) -> float:
        """The factor 2 gamma e^{theta bmax xmax} e^{theta^2 sigma^2 / 2}."""
        th = self.theta
        return 2.0 * self.gamma * math.exp(th * bmax * xmax) * math.exp(th * th * sigma * sigma / 2.0)


def link_forward(link: LinkFunction, z):
    if not np.all(np.isfinite(z)):
        raise ValueError("link input must be finite")
    if link.kind == "identity":
        return z
    if link.kind == "exp":
        return np.exp(z)
    return z * z * z


def link_inverse(link: LinkFunction, y):
    if not np.all(np.isfinite(y)):
        raise ValueError("link output must be finite")
    if link.kind == "identity":
        return y
    if link.kind == "exp":
        if np.any(np.asarray(y) <= 0):
            raise ValueError(f"exp link inverse needs y > 0, got {y}")
        return np.log(y)
    return np.cbrt(y)


@dataclass
class ProblemInstance:
    """Ground truth for one bandit problem: Y = psi(x^T beta_i + eps), eps ~ N(0, sigma^2)."""

    betas: np.ndarray
    sigma: float
    link: LinkFunction = field(default_factory=LinkFunction.identity)
    xmax: float = math.inf
    bmax: float | None = None

    def __post_init__(self):
        self.betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if self.betas.shape[0] < 2:
            raise ValueError("need at least two arms")
        if not np.all(np.isfinite(self.betas)):
            raise ValueError("arm parameters must be finite")
        # sigma == 0 is allowed for noiseless checks.
        if not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        norms = np.linalg.norm(self.betas, axis=1)
        if self.bmax is None:
            self.bmax = float(norms.max())
        elif np.any(norms > self.bmax * (1 + 1e-12)):
            raise ValueError("some arm parameter exceeds bmax")

    @property
    def K(self) -> int:
        return self.betas.shape[0]

    @property
    def d(self) -> int:
        return self.betas.shape[1]


class ArmState:
    """Sufficient statistics of one arm: Gram matrix, moment vector and OLS estimate.

    ``estimate`` is the OLS solution once the Gram matrix is identifiable and
    ``init_estimate`` before that. The inverse Gram matrix is cached so that
    most updates cost one rank-one correction instead of a factorization. ``min_eig`` is computed on demand and cached
    until the next update.
    """

    def __init__(self, d: int, init_estimate=None, eps_rel: float = EPS_INV_REL):
        self.d = d
        self.n = 0
        self.gram = np.zeros((d, d))
        self.moment = np.zeros(d)
        self.sum_sq = 0.0
        self.init_estimate = np.zeros(d) if init_estimate is None else np.array(init_estimate, dtype=float)
        if self.init_estimate.shape != (d,):
            raise ValueError("init_estimate has wrong dimension")
        self.estimate = self.init_estimate.copy()
        self.identified = False
        self.eps_rel = eps_rel
        self._min_eig = 0.0
        self._min_eig_lb = 0.0
        self._gram_inv = None
        self._tr_inv = math.inf
        self._trace = 0.0

    def copy(self) -> "ArmState":
        new = ArmState.__new__(ArmState)
        new.__dict__.update(self.__dict__)
        for key in ("gram", "moment", "init_estimate", "estimate", "_gram_inv"):
            val = getattr(self, key)
            setattr(new, key, None if val is None else val.copy())
        return new

    def update(self, x, z: float) -> None:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise ValueError(f"dimension mismatch: state {self.d}, x {x.shape}")
        if not math.isfinite(z):
            raise ValueError("observation must be finite")
        self.n += 1
        self.gram += x[:, None] * x
        self._trace += float(x @ x)
        self.moment += z * x
        self.sum_sq += z * z
        self._min_eig = None
        self._refresh(x)

    def _refresh(self, x=None) -> None:
        eps = self.eps_rel * max(self._trace, 1e-300)
        if self.d == 1:
            g = self.gram[0, 0]
            self._min_eig = g
            self._min_eig_lb = g
            if g > eps:
                self._set_estimate(self.moment / g)
            else:
                self._set_estimate(None)
            return
        if x is not None and self._fast_update(x, eps):
            return
        self._gram_inv = None
        chol_inv = None
        if self.n >= self.d:
            try:
                chol_inv = np.linalg.inv(np.linalg.cholesky(self.gram))
            except np.linalg.LinAlgError:
                pass
        if chol_inv is None:
            self._min_eig_lb = 0.0
            self._set_estimate(None)
            return
        self._tr_inv = float(np.sum(chol_inv * chol_inv))
        self._min_eig_lb = 1.0 / self._tr_inv
        if self._min_eig_lb <= eps and self.min_eig <= eps:
            self._set_estimate(None)
            return
        self._gram_inv = chol_inv.T @ chol_inv
        self._set_estimate(self._gram_inv @ self.moment)

    def _fast_update(self, x, eps) -> bool:
        """Sherman-Morrison step on the cached inverse; False asks for a full Cholesky refresh."""
        gi = self._gram_inv
        if gi is None or self.n < SM_WARMUP * self.d or self.n % SM_REFRESH == 0:
            return False
        u = gi @ x
        denom = 1.0 + float(x @ u)
        gi -= (u[:, None] * u) / denom
        tr_inv = self._tr_inv - float(u @ u) / denom
        self._tr_inv = tr_inv
        if tr_inv <= 0 or tr_inv * self._trace > SM_MAX_COND:
            return False
        self._min_eig_lb = 1.0 / tr_inv
        if self._min_eig_lb <= eps:
            return False
        self._set_estimate(gi @ self.moment)
        return True

    def _set_estimate(self, beta) -> None:
        self.identified = beta is not None
        self.estimate = self.init_estimate.copy() if beta is None else beta

    @property
    def min_eig(self) -> float:
        if self._min_eig is None:
            self._min_eig = min_eigen_sym(self.gram)
        return self._min_eig

    @property
    def min_eig_lower_bound(self) -> float:
        """A cheap certified lower bound on ``min_eig`` (1 / trace(gram^-1))."""
        if self._min_eig is not None:
            return self._min_eig
        return self._min_eig_lb

    def residual_sum_squares(self) -> float:
        b = self.estimate
        return max(0.0, self.sum_sq - 2.0 * b @ self.moment + b @ self.gram @ b)


def arm_update(state: ArmState, x, z: float) -> ArmState:
    """Functional form of :meth:`ArmState.update`; the input state is left untouched."""
    new = state.copy()
    new.update(x, z)
    return new


def _expected_link(link: LinkFunction, mean, sigma: float):
    mean = np.asarray(mean, dtype=float)
    if link.is_linear:
        return mean
    if sigma == 0:
        return link_forward(link, mean)
    if link.kind == "exp":
        return np.exp(mean + 0.5 * sigma * sigma)
    vals = link_forward(link, mean[..., None] + sigma * _GH_X)
    return vals @ _GH_W


def expected_rewards(inst: ProblemInstance, contexts) -> np.ndarray:
    """E_eps[psi(x^T beta_i + eps)] for every context row and arm, shape (n, K)."""
    x = np.atleast_2d(np.asarray(contexts, dtype=float))
    return _expected_link(inst.link, x @ inst.betas.T, inst.sigma)


def instantaneous_regret(inst: ProblemInstance, x, chosen: int) -> float:
    """Expected regret of playing ``chosen`` at context ``x``.

    For the linear link the noise cancels. Otherwise it is
    E[psi(x^T beta_best + eps) - psi(x^T beta_chosen + eps)] in closed form for
    the exponential link and by 65-node Gauss-Hermite quadrature elsewhere.
    """
    if not 0 <= chosen < inst.K:
        raise ValueError(f"arm index {chosen} out of range")
    x = np.asarray(x, dtype=float)
    if x.shape != (inst.d,):
        raise ValueError("context dimension mismatch")
    means = inst.betas @ x
    best = int(np.argmax(means))
    if best == chosen:
        return 0.0
    pair = _expected_link(inst.link, means[[best, chosen]], inst.sigma)
    return max(0.0, float(pair[0] - pair[1]))


@dataclass(frozen=True)
class StepRecord:
    """One round of an episode. ``switched`` marks the round a Greedy-First policy switched."""

    t: int
    context: np.ndarray
    chosen: int
    reward: float
    regret: float
    switched: bool = False
