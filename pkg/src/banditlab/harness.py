"""Seeded episodes, batches of replications and their aggregate statistics.

Randomness layout for one replication (``run_index``) of a batch:

* ``episode_seed = mix64(master_seed, run_index)`` (splitmix64 finalizer), so a
  run's result does not depend on which worker ran it or in what order;
* independent named streams derived from the episode seed for the instance,
  the contexts, the noise array, the initial estimates and tie-breaking;
* one stream per policy keyed by a CRC32 of its name, so adding a policy
  leaves every other policy's trajectory unchanged.

All policies in a run see the same context rows and the same T x K noise
array (indexed by round and arm, not by the arm played).
"""

from __future__ import annotations

import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from .diversity import estimate_lambda0
from .environments import (ContextDistribution, InterceptAugmented, InterceptSpec,
                           ParameterPrior, build_context, gap_filter, sample_instance, snr_sigma)
from .model import LinkFunction, ProblemInstance, StepRecord, expected_rewards, link_forward
from .policies import PolicyConfig, PolicyEnv, make_policy

MASK64 = (1 << 64) - 1
STREAMS = {"instance": 1, "context": 2, "noise": 3, "init": 4, "tie": 5, "policy": 6}
MAX_INSTANCE_REDRAWS = 100
LAMBDA0_AUDIT = {"n_samples": 20_000, "n_directions": 200}


def mix64(master_seed: int, index: int) -> int:
    """splitmix64 finalizer applied to master_seed + golden-ratio * (index + 1)."""
    z = (master_seed + 0x9E3779B97F4A7C15 * (index + 1)) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream(episode_seed: int, name: str, label: str | None = None) -> np.random.Generator:
    key = (STREAMS[name],) if label is None else (STREAMS[name], zlib.crc32(label.encode()))
    return np.random.default_rng(np.random.SeedSequence(episode_seed, spawn_key=key))


# ---------------------------------------------------------------------------
# Episodes


@dataclass
class Trajectory:
    """Per-round record of one policy in one episode, stored column-wise."""

    policy: str
    chosen: np.ndarray
    rewards: np.ndarray
    regret: np.ndarray
    switch_time: int = 0
    lambda0: float | None = None
    snapshots: dict = field(default_factory=dict)
    contexts: np.ndarray | None = None

    @property
    def T(self) -> int:
        return len(self.chosen)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret)

    @property
    def final_regret(self) -> float:
        return float(self.regret.sum())

    def steps(self):
        """Yield :class:`StepRecord` objects for t = 1..T."""
        for k in range(self.T):
            yield StepRecord(k + 1, None if self.contexts is None else self.contexts[k],
                             int(self.chosen[k]), float(self.rewards[k]), float(self.regret[k]),
                             self.switch_time == k + 1)


def _policy_env(inst: ProblemInstance, xmax: float) -> PolicyEnv:
    return PolicyEnv(inst.K, inst.d, xmax, inst.bmax, inst.sigma, inst.link, inst.betas)


def run_episode(instance: ProblemInstance, context_stream, policy_config: PolicyConfig, T: int,
                episode_seed: int, *, noise=None, init_estimates=None, snapshots=(),
                inject_estimates=None, expected=None, rewards=None) -> Trajectory:
    """Run one policy for T rounds.

    ``context_stream`` is either a (T, d) array of contexts or a
    :class:`ContextDistribution` sampled from the episode's context stream.
    ``noise`` (T x K, already scaled by sigma), ``init_estimates`` and the
    reward tables default to draws from the episode seed. ``snapshots`` lists
    rounds after which each arm's Gram eigenvalue and estimate are recorded.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if isinstance(context_stream, ContextDistribution):
        xmax = context_stream.xmax
        X = context_stream.sample(stream(episode_seed, "context"), T)
    else:
        X = np.asarray(context_stream, dtype=float)
        xmax = instance.xmax if math.isfinite(instance.xmax) else float(np.linalg.norm(X, axis=1).max())
    if X.shape != (T, instance.d):
        raise ValueError(f"contexts must have shape ({T}, {instance.d}), got {X.shape}")
    K = instance.K
    if expected is None:
        expected = expected_rewards(instance, X)
    if rewards is None:
        if noise is None:
            noise = instance.sigma * stream(episode_seed, "noise").standard_normal((T, K))
        try:
            rewards = link_forward(instance.link, X @ instance.betas.T + noise)
        except ValueError as exc:
            raise ValueError(f"reward link failed: {exc}") from None
    if init_estimates is None:
        init_estimates = stream(episode_seed, "init").standard_normal((K, instance.d))

    policy = make_policy(policy_config, _policy_env(instance, xmax), init_estimates,
                         rng=stream(episode_seed, "policy", policy_config.name),
                         tie_rng=stream(episode_seed, "tie"))
    if inject_estimates is not None:
        policy.set_estimates(inject_estimates)
    snap_set = set(snapshots)
    snaps = {}
    chosen = np.empty(T, dtype=np.int64)
    select, update = policy.select, policy.update
    for k in range(T):
        t = k + 1
        x = X[k]
        a = select(x, t)
        chosen[k] = a
        y = float(rewards[k, a])
        try:
            update(x, a, y, t)
        except ValueError as exc:
            raise ValueError(f"step {t}: {exc}") from None
        if t in snap_set:
            snaps[t] = {"min_eig": [arm.min_eig for arm in policy.arms],
                        "n": [arm.n for arm in policy.arms],
                        "identified": [arm.identified for arm in policy.arms],
                        "estimates": policy.estimates}
    idx = np.arange(T)
    regret = np.maximum(expected.max(axis=1) - expected[idx, chosen], 0.0)
    lam = getattr(policy, "lambda0", None)
    return Trajectory(policy_config.name, chosen, rewards[idx, chosen], regret,
                      policy.switch_time, lam, snaps, X)


# ---------------------------------------------------------------------------
# Experiment configuration


@dataclass
class ExperimentConfig:
    """A batch of replications.

    ``prior`` is ``correct`` (beta ~ N(0, I)), ``incorrect`` (a two-component
    mixture at +-1) or ``fixed`` (``fixed_betas``). ``sigma_rule`` is ``fixed``
    (use ``sigma``) or ``snr`` (0.25 sqrt(d)). ``gap_kappa0`` conditions the
    contexts away from every pairwise decision boundary. ``sweep`` maps one of
    K, d or T to a list of values; :func:`expand_sweep` turns it into configs.
    """

    name: str = "experiment"
    K: int = 2
    d: int = 3
    T: int = 2000
    n_runs: int = 200
    context: str | dict = "box_gaussian"
    prior: str = "correct"
    fixed_betas: list | None = None
    intercept: bool = False
    link: str = "identity"
    sigma_rule: str = "fixed"
    sigma: float = 0.5
    policies: list = field(default_factory=lambda: [PolicyConfig("greedy")])
    master_seed: int = 0
    output_dir: str | None = None
    gap_kappa0: float | None = None
    snapshots: list = field(default_factory=list)
    c0: float = 1.0
    sweep: dict | None = None

    def __post_init__(self):
        self.policies = [p if isinstance(p, PolicyConfig) else PolicyConfig.from_dict(p)
                         for p in self.policies]
        if self.T < 1 or self.n_runs < 1:
            raise ValueError("T and n_runs must be at least 1")
        if self.K < 2 or self.d < 1:
            raise ValueError("need K >= 2 and d >= 1")
        if self.prior not in ("correct", "incorrect", "fixed"):
            raise ValueError(f"unknown prior {self.prior!r}")
        if self.prior == "fixed":
            if self.fixed_betas is None:
                raise ValueError("prior 'fixed' needs fixed_betas")
            shape = np.shape(self.fixed_betas)
            if shape != (self.K, self.d + int(self.intercept)):
                raise ValueError(f"fixed_betas must have shape (K, d{' + 1' if self.intercept else ''})")
        if self.sigma_rule not in ("fixed", "snr"):
            raise ValueError(f"unknown sigma_rule {self.sigma_rule!r}")
        if self.sigma_rule == "fixed" and not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.intercept and self.K != 2 and self.prior != "fixed":
            raise ValueError("the intercept regime is defined for two arms")
        LinkFunction.from_name(self.link)
        names = [p.name for p in self.policies]
        if len(set(names)) != len(names):
            raise ValueError(f"policy names must be unique, got {names}")
        if not self.policies:
            raise ValueError("need at least one policy")
        if self.sweep is not None:
            bad = set(self.sweep) - {"K", "d", "T"}
            if bad or len(self.sweep) != 1:
                raise ValueError("sweep must map exactly one of K, d, T to a list of values")

    @property
    def noise_sigma(self) -> float:
        return snr_sigma(self.d) if self.sigma_rule == "snr" else self.sigma

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [p.to_dict() for p in v] if f.name == "policies" else v
        return json.loads(json.dumps(out, default=_jsonable))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ValueError(f"{path}: top level must be an object")
        return cls.from_dict(data)


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")


def expand_sweep(config: ExperimentConfig) -> list[ExperimentConfig]:
    """One config per sweep value (the config itself when there is no sweep)."""
    if not config.sweep:
        return [config]
    (key, values), = config.sweep.items()
    out = []
    for v in values:
        data = config.to_dict()
        data["sweep"] = None
        data[key] = v
        data["name"] = f"{config.name}_{key}{v}"
        if config.output_dir:
            data["output_dir"] = str(Path(config.output_dir) / f"{key}{v}")
        out.append(ExperimentConfig.from_dict(data))
    return out


def _prior(config: ExperimentConfig) -> ParameterPrior:
    icpt = InterceptSpec() if config.intercept else None
    if config.prior == "incorrect":
        return ParameterPrior.mixture(icpt)
    return ParameterPrior.gaussian(intercept=icpt)


def base_context(config: ExperimentConfig) -> ContextDistribution:
    """The covariate distribution before any intercept column or gap filter."""
    return build_context(config.context, config.d)


@lru_cache(maxsize=64)
def _audit_lambda0(desc: str, seed: int) -> tuple[float, float]:
    spec = json.loads(desc)
    dist = build_context(spec["context"], spec["d"])
    if spec["intercept"]:
        dist = InterceptAugmented(dist)
    rep = estimate_lambda0(dist, rng=np.random.default_rng(seed), **LAMBDA0_AUDIT)
    return rep.lambda0_hat, rep.mc_stderr


def auto_lambda0(config: ExperimentConfig) -> float | None:
    """Audited lambda0 of the experiment's contexts, or None when it is not certifiably positive.

    None happens for instance with an intercept column, where the half-space
    {x : x_0 <= 0} carries no mass and the diversity constant is 0.
    """
    desc = json.dumps({"context": config.context, "d": config.d, "intercept": config.intercept},
                      sort_keys=True)
    lam, se = _audit_lambda0(desc, mix64(config.master_seed, 2**32))
    return lam if lam > 3 * se and lam > 0 else None


def resolved_policies(config: ExperimentConfig) -> list[PolicyConfig]:
    """Policy configs with lambda0 filled in where the experiment leaves it to the auditor.

    A greedy_first policy without lambda0 gets the audited value. If the
    audit cannot certify a positive lambda0, lambda0 is unknown and the
    policy estimates it from its first t0 greedy rounds instead (it becomes
    a heuristic_greedy_first under the same name).
    """
    out = []
    for p in config.policies:
        if p.kind == "greedy_first" and p.lambda0 is None:
            lam = auto_lambda0(config)
            if lam is None:
                p = PolicyConfig.from_dict({**p.to_dict(), "kind": "heuristic_greedy_first"})
            else:
                p = PolicyConfig.from_dict({**p.to_dict(), "lambda0": lam})
        out.append(p)
    return out


def _gap_wrap(dist, betas, kappa0):
    K = betas.shape[0]
    for i in range(K):
        for j in range(i + 1, K):
            dist = gap_filter(dist, betas[i] - betas[j], kappa0)
    return dist


def draw_problem(config: ExperimentConfig, episode_seed: int):
    """The run's instance and context distribution (instance redrawn if a gap filter is too tight)."""
    dist = base_context(config)
    if config.intercept:
        dist = InterceptAugmented(dist)
    sigma = config.noise_sigma
    link = LinkFunction.from_name(config.link)
    rng = stream(episode_seed, "instance")
    if config.prior == "fixed":
        inst = ProblemInstance(np.asarray(config.fixed_betas, dtype=float), sigma, link, dist.xmax)
        if config.gap_kappa0:
            dist = _gap_wrap(dist, inst.betas, config.gap_kappa0)
        return inst, dist
    prior = _prior(config)
    for _ in range(MAX_INSTANCE_REDRAWS):
        inst = sample_instance(prior, config.K, config.d, sigma, link, rng, xmax=dist.xmax)
        if not config.gap_kappa0:
            return inst, dist
        try:
            return inst, _gap_wrap(dist, inst.betas, config.gap_kappa0)
        except ValueError:
            continue
    raise RuntimeError("could not draw an instance compatible with the gap filter")


@dataclass
class RunResult:
    run_index: int
    episode_seed: int
    betas: np.ndarray
    regret: dict
    actions: dict
    switch_time: dict
    snapshots: dict


def run_single(config: ExperimentConfig, run_index: int, policies=None) -> RunResult:
    """Replication ``run_index`` of a batch: one instance, shared contexts and noise, every policy."""
    policies = resolved_policies(config) if policies is None else policies
    seed = mix64(config.master_seed, run_index)
    inst, dist = draw_problem(config, seed)
    T, K = config.T, inst.K
    X = dist.sample(stream(seed, "context"), T)
    noise = inst.sigma * stream(seed, "noise").standard_normal((T, K))
    init = stream(seed, "init").standard_normal((K, inst.d))
    expected = expected_rewards(inst, X)
    rewards = link_forward(inst.link, X @ inst.betas.T + noise)
    regret, actions, switches, snaps = {}, {}, {}, {}
    for p in policies:
        tr = run_episode(inst, X, p, T, seed, init_estimates=init, snapshots=config.snapshots,
                         expected=expected, rewards=rewards)
        regret[p.name] = tr.regret
        actions[p.name] = tr.chosen.astype(np.int8 if K < 128 else np.int32)
        switches[p.name] = tr.switch_time
        if tr.snapshots:
            snaps[p.name] = tr.snapshots
    return RunResult(run_index, seed, inst.betas, regret, actions, switches, snaps)


# ---------------------------------------------------------------------------
# Batches


@dataclass
class BatchSummary:
    """Aggregates over replications.

    ``mean`` and ``ci`` map a policy name to per-round arrays of the mean
    cumulative regret and its 95% half-width 1.96 * sd / sqrt(n_runs), where
    the spread is over runs (instance and noise jointly).
    """

    config: dict
    policies: list
    T: int
    n_runs: int
    mean: dict
    ci: dict
    cumulative: dict
    actions: dict
    switch_times: dict
    betas: list
    snapshots: list
    lambda0: dict
    elapsed: float = 0.0

    def final(self, name: str) -> np.ndarray:
        return self.cumulative[name][:, -1]

    def at(self, name: str, t: int) -> np.ndarray:
        """Per-run cumulative regret after round t."""
        return self.cumulative[name][:, t - 1]

    def switch_count(self, name: str) -> int:
        return int(np.count_nonzero(self.switch_times[name]))

    def switch_histogram(self, name: str, bins: int = 20) -> dict:
        st = self.switch_times[name]
        st = st[st > 0]
        counts, edges = np.histogram(st, bins=bins, range=(0, self.T))
        return {"counts": counts.tolist(), "edges": edges.tolist()}

    def to_dict(self) -> dict:
        """JSON-ready summary (means, CIs, final regrets, switch statistics, config echo)."""
        return {
            "config": self.config,
            "master_seed": self.config.get("master_seed"),
            "T": self.T,
            "n_runs": self.n_runs,
            "lambda0": self.lambda0,
            "policies": {
                name: {
                    "mean": self.mean[name].tolist(),
                    "ci": self.ci[name].tolist(),
                    "final_regret": self.final(name).tolist(),
                    "switch_count": self.switch_count(name),
                    "switch_times": self.switch_times[name].tolist(),
                    "switch_histogram": self.switch_histogram(name),
                } for name in self.policies
            },
        }


def _worker(args):
    config_dict, idx, policies = args
    return run_single(ExperimentConfig.from_dict(config_dict), idx,
                      [PolicyConfig.from_dict(p) for p in policies])


def aggregate(config: ExperimentConfig, results: list[RunResult], policies) -> BatchSummary:
    results = sorted(results, key=lambda r: r.run_index)
    names = [p.name for p in policies]
    n = len(results)
    cum, mean, ci, acts, sw = {}, {}, {}, {}, {}
    for name in names:
        c = np.cumsum(np.vstack([r.regret[name] for r in results]), axis=1)
        cum[name] = c
        mean[name] = c.mean(axis=0)
        ci[name] = (1.96 * c.std(axis=0, ddof=1) / math.sqrt(n)) if n > 1 else np.zeros(config.T)
        acts[name] = np.vstack([r.actions[name] for r in results])
        sw[name] = np.array([r.switch_time[name] for r in results], dtype=np.int64)
    lam = {p.name: p.lambda0 if p.kind == "greedy_first" else "estimated from the first t0 rounds"
           for p in policies if p.kind in ("greedy_first", "heuristic_greedy_first")}
    return BatchSummary(config.to_dict(), names, config.T, n, mean, ci, cum, acts, sw,
                        [r.betas for r in results], [r.snapshots for r in results], lam)


def run_batch(config: ExperimentConfig, workers: int = 1, progress=None) -> BatchSummary:
    """Run ``n_runs`` replications and aggregate them; writes files if ``output_dir`` is set.

    ``workers > 1`` spreads runs over processes; the result is identical to
    the serial one because every run is seeded by its own index.
    """
    if config.sweep:
        raise ValueError("config has a sweep; run expand_sweep(config) first")
    start = time.perf_counter()
    policies = resolved_policies(config)
    if workers > 1:
        cd = config.to_dict()
        pd = [p.to_dict() for p in policies]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_worker, [(cd, i, pd) for i in range(config.n_runs)]))
    else:
        results = []
        for i in range(config.n_runs):
            results.append(run_single(config, i, policies))
            if progress:
                progress(i + 1, config.n_runs)
    summary = aggregate(config, results, policies)
    summary.elapsed = time.perf_counter() - start
    if config.output_dir:
        write_outputs(summary, config.output_dir)
    return summary


def write_outputs(summary: BatchSummary, output_dir) -> list[Path]:
    from .export import export, write_runs_csv

    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = [export(summary, fmt, out / f"summary.{fmt}") for fmt in ("csv", "json", "svg")]
    paths.append(write_runs_csv(summary, out / "runs.csv"))
    return paths
