"""Context distributions, arm-parameter priors and instance sampling.

Every context family draws vectorized batches: ``dist.sample(rng, n)``
returns an ``(n, d)`` array, ``dist.sample(rng)`` a single ``(d,)`` vector.
All families respect ``||x||_2 <= dist.xmax``.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import cholesky_psd
from .model import LinkFunction, ProblemInstance

MAX_GIBBS_DIM = 20
MIN_ACCEPTANCE = 0.01


class ContextDistribution:
    """Base class for i.i.d. context samplers."""

    kind = "abstract"
    dim: int
    xmax: float

    def sample(self, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
        if n is None:
            return self._draw(rng, 1)[0]
        if n < 0:
            raise ValueError("n must be non-negative")
        return self._draw(rng, n)

    def _draw(self, rng, n):  # pragma: no cover - abstract
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "xmax": self.xmax}


def _rejection(propose, accept, rng, n, dim, what):
    out = np.empty((n, dim))
    filled = 0
    rate = 0.5
    proposed = accepted = 0
    while filled < n:
        batch = max(64, int(1.2 * (n - filled) / rate) + 1)
        cand = propose(rng, batch)
        keep = cand[accept(cand)]
        proposed += batch
        accepted += len(keep)
        if proposed >= 10_000 and accepted / proposed < 1e-4:
            raise RuntimeError(f"{what}: rejection acceptance too low ({accepted}/{proposed})")
        rate = max(accepted / proposed, 1e-4)
        take = min(len(keep), n - filled)
        out[filled:filled + take] = keep[:take]
        filled += take
    return out


class TruncatedGaussian(ContextDistribution):
    """``scale * N(0, cov)`` conditioned on an l2 ball or an l-infinity box.

    ``truncation='l2'`` keeps draws with ||x||_2 <= bound; ``'linf'`` keeps
    ||x||_inf <= bound, so xmax = bound * sqrt(d).
    """

    kind = "truncated_gaussian"

    def __init__(self, cov, scale: float = 1.0, truncation: str = "l2", bound: float = 1.0):
        cov = np.atleast_2d(np.asarray(cov, dtype=float))
        if truncation not in ("l2", "linf"):
            raise ValueError("truncation must be 'l2' or 'linf'")
        if bound <= 0 or scale <= 0:
            raise ValueError("bound and scale must be positive")
        self.base_cov = cov
        self.scale = float(scale)
        self.cov = scale * scale * cov
        self.truncation = truncation
        self.bound = float(bound)
        self.dim = cov.shape[0]
        self._chol = cholesky_psd(self.cov)
        self.xmax = self.bound if truncation == "l2" else self.bound * math.sqrt(self.dim)

    @classmethod
    def box_preset(cls, d: int) -> "TruncatedGaussian":
        """0.5 * N(0, I_d) truncated to ||x||_inf <= 1."""
        return cls(np.eye(d), scale=0.5, truncation="linf", bound=1.0)

    def _propose(self, rng, n):
        return rng.standard_normal((n, self.dim)) @ self._chol.T

    def _accept(self, x):
        if self.truncation == "l2":
            return np.einsum("ij,ij->i", x, x) <= self.bound * self.bound
        return np.max(np.abs(x), axis=1) <= self.bound

    def _draw(self, rng, n):
        return _rejection(self._propose, self._accept, rng, n, self.dim, "truncated gaussian")

    def describe(self):
        return {**super().describe(), "scale": self.scale, "cov": self.base_cov.tolist(),
                "truncation": self.truncation, "bound": self.bound}


class UniformBall(ContextDistribution):
    """Uniform distribution on the l2 ball of the given radius."""

    kind = "uniform_ball"

    def __init__(self, dim: int, radius: float = 1.0):
        if dim < 1 or radius < 0:
            raise ValueError("need dim >= 1 and radius >= 0")
        self.dim = dim
        self.radius = float(radius)
        self.xmax = self.radius

    def _draw(self, rng, n):
        g = rng.standard_normal((n, self.dim))
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        r = self.radius * rng.random((n, 1)) ** (1.0 / self.dim)
        return g / norms * r

    def describe(self):
        return {**super().describe(), "radius": self.radius}


class GibbsHypercube(ContextDistribution):
    """P(x) proportional to exp(sum_ij J_ij x_i x_j) on {-1, +1}^d, sampled by exact enumeration."""

    kind = "gibbs_hypercube"

    def __init__(self, J):
        J = np.atleast_2d(np.asarray(J, dtype=float))
        d = J.shape[0]
        if J.shape != (d, d):
            raise ValueError("J must be square")
        if d > MAX_GIBBS_DIM:
            raise ValueError(f"exact Gibbs enumeration supports d <= {MAX_GIBBS_DIM}")
        self.J = J
        self.dim = d
        self.xmax = math.sqrt(d)
        self.points = np.array(list(itertools.product((-1.0, 1.0), repeat=d)))
        logw = np.einsum("ni,ij,nj->n", self.points, J, self.points)
        w = np.exp(logw - logw.max())
        self.probs = w / w.sum()

    @classmethod
    def rademacher(cls, d: int) -> "GibbsHypercube":
        return cls(np.zeros((d, d)))

    def second_moment(self) -> np.ndarray:
        return np.einsum("n,ni,nj->ij", self.probs, self.points, self.points)

    def _draw(self, rng, n):
        idx = rng.choice(len(self.points), size=n, p=self.probs)
        return self.points[idx]

    def describe(self):
        return {**super().describe(), "J": self.J.tolist()}


class InterceptAugmented(ContextDistribution):
    """Prepends a constant 1 to every draw of ``base``."""

    kind = "intercept_augmented"

    def __init__(self, base: ContextDistribution):
        self.base = base
        self.dim = base.dim + 1
        self.xmax = math.sqrt(1.0 + base.xmax ** 2)

    def _draw(self, rng, n):
        return np.hstack([np.ones((n, 1)), self.base.sample(rng, n)])

    def describe(self):
        return {**super().describe(), "base": self.base.describe()}


class CsvCovariates(ContextDistribution):
    """Resamples rows of an in-memory covariate table uniformly with replacement."""

    kind = "csv_backed"

    def __init__(self, rows, columns=None, normalization: dict | None = None, source: str | None = None):
        rows = np.atleast_2d(np.array(rows, dtype=float))
        if rows.size == 0:
            raise ValueError("covariate pool is empty")
        self.rows = rows
        self.rows.setflags(write=False)
        self.dim = rows.shape[1]
        self.columns = list(columns) if columns is not None else [f"x{i}" for i in range(self.dim)]
        self.normalization = normalization
        self.source = source
        self.xmax = float(np.linalg.norm(rows, axis=1).max())

    def _draw(self, rng, n):
        return self.rows[rng.integers(len(self.rows), size=n)]

    def describe(self):
        return {**super().describe(), "source": self.source, "columns": self.columns,
                "n_rows": len(self.rows), "normalization": self.normalization}


class AlphaMarginSynthetic(ContextDistribution):
    """Rewrites the component along ``direction`` so that P(0 < |x.u| <= k) = k^alpha for k <= 1."""

    kind = "alpha_margin_synthetic"

    def __init__(self, alpha: float, direction, base: ContextDistribution):
        if not 0 < alpha <= 4:
            raise ValueError("alpha must lie in (0, 4]")
        u = np.asarray(direction, dtype=float)
        if u.shape != (base.dim,) or abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError("direction must be a unit vector matching the base dimension")
        self.alpha = float(alpha)
        self.direction = u
        self.base = base
        self.dim = base.dim
        self.xmax = math.sqrt(base.xmax ** 2 + 1.0)

    def _draw(self, rng, n):
        return _alpha_margin_transform(self.alpha, self.direction, self.base.sample(rng, n), rng)

    def describe(self):
        return {**super().describe(), "alpha": self.alpha, "direction": self.direction.tolist(),
                "base": self.base.describe()}


def _alpha_margin_transform(alpha, u, x, rng):
    n = x.shape[0]
    m = x @ u
    # 1 - U lies in (0, 1], keeping |m'| strictly positive.
    mag = (1.0 - rng.random(n)) ** (1.0 / alpha)
    sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    return x + np.outer(sign * mag - m, u)


def sample_alpha_margin_context(alpha: float, direction, base: ContextDistribution,
                                rng: np.random.Generator) -> np.ndarray:
    return AlphaMarginSynthetic(alpha, direction, base).sample(rng)


class GapFiltered(ContextDistribution):
    """``base`` conditioned on |x^T beta_diff| > kappa0, by rejection."""

    kind = "gap_filtered"

    def __init__(self, base: ContextDistribution, beta_diff, kappa0: float, acceptance: float):
        self.base = base
        self.beta_diff = np.asarray(beta_diff, dtype=float)
        self.kappa0 = float(kappa0)
        self.acceptance = acceptance
        self.dim = base.dim
        self.xmax = base.xmax

    def _accept(self, x):
        return np.abs(x @ self.beta_diff) > self.kappa0

    def _draw(self, rng, n):
        return _rejection(self.base.sample, self._accept, rng, n, self.dim, "gap filter")

    def estimate_acceptance(self, rng: np.random.Generator, n_proposals: int) -> float:
        return float(np.mean(self._accept(self.base.sample(rng, n_proposals))))

    def describe(self):
        return {**super().describe(), "kappa0": self.kappa0, "beta_diff": self.beta_diff.tolist(),
                "acceptance": self.acceptance, "base": self.base.describe()}


def gap_filter(dist: ContextDistribution, beta_diff, kappa0: float,
               n_pilot: int = 10_000, rng: np.random.Generator | None = None) -> GapFiltered:
    """Wrap ``dist`` so that no context falls within ``kappa0`` of the hyperplane x^T beta_diff = 0.

    The acceptance probability is estimated from ``n_pilot`` proposals (seeded
    deterministically unless ``rng`` is given) and must be at least 1%.
    """
    if kappa0 <= 0:
        raise ValueError("kappa0 must be positive")
    beta_diff = np.asarray(beta_diff, dtype=float)
    if beta_diff.shape != (dist.dim,):
        raise ValueError("beta_diff dimension mismatch")
    filt = GapFiltered(dist, beta_diff, kappa0, acceptance=float("nan"))
    rng = np.random.default_rng(0) if rng is None else rng
    filt.acceptance = filt.estimate_acceptance(rng, n_pilot)
    if filt.acceptance < MIN_ACCEPTANCE:
        raise ValueError(f"gap filter acceptance too low: estimated {filt.acceptance:.4g}")
    return filt


def sample_context(dist: ContextDistribution, rng: np.random.Generator) -> np.ndarray:
    return dist.sample(rng)


# ---------------------------------------------------------------------------
# CSV covariates


def load_csv_covariates(path, normalize: bool = False, xmax: float | None = None) -> CsvCovariates:
    """Read a numeric CSV (header row first) into a resampling context distribution.

    With ``normalize`` every column is centred and divided by its max-abs
    value; if ``xmax`` is given, all rows are then scaled by one common factor
    so that ||x||_2 <= xmax. The parameters are kept in ``.normalization``.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(f"{path}: row {lineno} has {len(rec)} cells, expected {len(header)}")
            vals = []
            for col, cell in enumerate(rec):
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(f"{path}: non-numeric cell {cell!r} at row {lineno}, column {col + 1}") from None
                if not math.isfinite(v):
                    raise ValueError(f"{path}: non-finite cell at row {lineno}, column {col + 1}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array(rows)
    if len(data) < data.shape[1] + 1:
        raise ValueError(f"{path}: need at least d+1 = {data.shape[1] + 1} rows, got {len(data)}")

    normalization = None
    if normalize:
        means = data.mean(axis=0)
        centred = data - means
        scales = np.abs(centred).max(axis=0)
        scales[scales == 0] = 1.0
        data = centred / scales
        factor = 1.0
        if xmax is not None:
            top = float(np.linalg.norm(data, axis=1).max())
            if top > xmax:
                factor = xmax / top
                data = data * factor
        normalization = {"means": means.tolist(), "scales": scales.tolist(), "factor": factor}
    return CsvCovariates(data, columns=header, normalization=normalization, source=str(path))


def save_csv_covariates(path, rows, columns=None) -> None:
    """Write rows in the covariate CSV format; floats are written with full precision."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    columns = columns or [f"x{i}" for i in range(rows.shape[1])]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for r in rows:
            writer.writerow([repr(float(v)) for v in r])


# ---------------------------------------------------------------------------
# Arm-parameter priors


@dataclass(frozen=True)
class InterceptSpec:
    """Intercepts b1, b2 ~ N(mean, var); arm 1 gets +b1 and arm 2 gets -b2."""

    mean: float = 0.1
    var: float = 0.01


@dataclass(frozen=True)
class ParameterPrior:
    """Mixture of isotropic Gaussians: with probability ``w`` beta = scale * N(loc * 1_d, I_d).

    ``components`` holds ``(w, loc, scale)`` triples.
    """

    components: tuple = ((1.0, 0.0, 1.0),)
    intercept: InterceptSpec | None = None

    def __post_init__(self):
        weights = [c[0] for c in self.components]
        if not self.components or any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise ValueError("mixture weights must be non-negative and sum to 1")

    @classmethod
    def gaussian(cls, loc: float = 0.0, scale: float = 1.0, intercept=None) -> "ParameterPrior":
        return cls(((1.0, loc, scale),), intercept)

    @classmethod
    def scaled_gaussian(cls, factor: float, intercept=None) -> "ParameterPrior":
        return cls.gaussian(0.0, factor, intercept)

    @classmethod
    def mixture(cls, intercept=None) -> "ParameterPrior":
        """Half 0.5 * N(1_d, I_d), half 0.5 * N(-1_d, I_d)."""
        return cls(((0.5, 1.0, 0.5), (0.5, -1.0, 0.5)), intercept)

    def moments(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        """Mean vector and covariance of one beta draw (ignoring any intercept)."""
        mean = sum(w * s * loc for w, loc, s in self.components)
        within = sum(w * s * s for w, loc, s in self.components)
        # Component means all lie along 1_d, which adds a rank-one term.
        spread = sum(w * (s * loc - mean) ** 2 for w, loc, s in self.components)
        cov = within * np.eye(d) + spread * np.ones((d, d))
        return np.full(d, mean), cov

    def sample(self, K: int, d: int, rng: np.random.Generator) -> np.ndarray:
        weights = np.array([c[0] for c in self.components])
        comp = rng.choice(len(self.components), size=K, p=weights)
        z = rng.standard_normal((K, d))
        out = np.empty((K, d))
        for k in range(K):
            _, loc, scale = self.components[comp[k]]
            out[k] = scale * (loc + z[k])
        return out

    def describe(self) -> dict:
        return {"components": [list(c) for c in self.components],
                "intercept": None if self.intercept is None else vars(self.intercept)}


def sample_instance(prior: ParameterPrior, K: int, d: int, sigma: float,
                    link: LinkFunction | None = None, rng: np.random.Generator | None = None,
                    xmax: float = math.inf) -> ProblemInstance:
    """Draw K arm parameters. With an intercept spec the instance dimension becomes d + 1,
    the intercept sitting in coordinate 0 to match :class:`InterceptAugmented`."""
    if K < 2 or d < 1:
        raise ValueError("need K >= 2 and d >= 1")
    if rng is None:
        raise ValueError("an explicit rng is required")
    link = link or LinkFunction.identity()
    betas = prior.sample(K, d, rng)
    if prior.intercept is not None:
        if K != 2:
            raise ValueError("the intercept regime is defined for two arms only")
        spec = prior.intercept
        b0 = spec.mean + math.sqrt(spec.var) * rng.standard_normal(2)
        betas = np.hstack([np.array([[b0[0]], [-b0[1]]]), betas])
    return ProblemInstance(betas, sigma, link, xmax=xmax)


# ---------------------------------------------------------------------------
# Named presets


def snr_sigma(d: int, scale: float = 0.25) -> float:
    """Noise scale that keeps signal-to-noise fixed across dimensions: scale * sqrt(d)."""
    return scale * math.sqrt(d)


def build_context(spec, d: int | None = None) -> ContextDistribution:
    """Build a context distribution from a preset name or a dict spec.

    Names: ``box_gaussian``, ``uniform_ball``, ``rademacher``, ``csv:PATH``.
    Dicts carry ``kind`` plus that family's parameters.
    """
    if isinstance(spec, str):
        if spec.startswith("csv:"):
            return load_csv_covariates(spec[4:], normalize=False)
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind")
    dim = spec.pop("dim", d)
    if kind in ("box_gaussian", "truncated_gaussian") and not spec:
        return TruncatedGaussian.box_preset(dim)
    if kind == "truncated_gaussian":
        cov = np.asarray(spec.pop("cov", np.eye(dim)), dtype=float)
        return TruncatedGaussian(cov, **spec)
    if kind == "uniform_ball":
        return UniformBall(dim, **spec)
    if kind == "rademacher":
        return GibbsHypercube.rademacher(dim)
    if kind in ("gibbs", "gibbs_hypercube"):
        return GibbsHypercube(spec.get("J", np.zeros((dim, dim))))
    if kind in ("csv", "csv_backed"):
        return load_csv_covariates(spec["path"], normalize=spec.get("normalize", False),
                                   xmax=spec.get("xmax"))
    if kind in ("alpha_margin", "alpha_margin_synthetic"):
        base = build_context(spec.get("base", "box_gaussian"), dim)
        direction = spec.get("direction")
        if direction is None:
            direction = np.eye(base.dim)[0]
        return AlphaMarginSynthetic(spec["alpha"], direction, base)
    if kind in ("intercept", "intercept_augmented"):
        return InterceptAugmented(build_context(spec.get("base", "box_gaussian"), dim))
    raise ValueError(f"unknown context distribution {kind!r}")
