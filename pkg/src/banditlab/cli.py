"""Command-line entry point: ``banditlab {simulate,replicate,diversity,constants}``.

Exit status is 0 on success, 1 for configuration errors (bad arguments,
unknown keys or presets, unreadable config) and 2 for failures while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import diversity, presets
from .environments import build_context
from .harness import ExperimentConfig, expand_sweep, run_batch

log = logging.getLogger("banditlab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="banditlab", description="Greedy contextual bandit experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_run_options(sp):
        sp.add_argument("--full", action="store_true", help="full scale: 1000 runs, T = 10000")
        sp.add_argument("--workers", type=_positive_int, default=1, help="worker processes (default 1)")
        sp.add_argument("--output", help="output directory (overrides the config)")
        sp.add_argument("--n-runs", type=_positive_int, help="override the number of replications")
        sp.add_argument("--T", type=_positive_int, help="override the horizon")
        sp.add_argument("--seed", type=int, help="override master_seed")

    sim = sub.add_parser("simulate", help="run an experiment described by a JSON config file")
    sim.add_argument("--config", required=True, help="JSON experiment config")
    add_run_options(sim)

    rep = sub.add_parser("replicate", help="run a named figure preset")
    rep.add_argument("preset", help=", ".join(presets.PRESETS + presets.EXTRA_PRESETS))
    rep.add_argument("--csv", help="covariate file for fig5_csv")
    rep.add_argument("--normalize", action="store_true", help="normalize CSV covariates")
    add_run_options(rep)

    div = sub.add_parser("diversity", help="audit a context distribution for covariate diversity")
    div.add_argument("--dist", required=True, help="preset name (box_gaussian, uniform_ball, "
                     "rademacher, intercept) or csv:PATH")
    div.add_argument("--d", type=_positive_int, default=3, help="dimension for named presets")
    div.add_argument("--samples", type=_positive_int, default=100_000)
    div.add_argument("--directions", type=_positive_int, default=200)
    div.add_argument("--seed", type=int, default=0)

    con = sub.add_parser("constants", help="constants of the greedy regret bound and switch probability")
    for name in ("lambda0", "xmax", "bmax", "sigma"):
        con.add_argument(f"--{name}", type=float, required=True)
    con.add_argument("--d", type=int, required=True)
    con.add_argument("--c0", type=float, default=1.0)
    con.add_argument("--t0", type=float, default=1.0)
    return p


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    data = cfg.to_dict()
    if args.full:
        data["n_runs"], data["T"] = presets.FULL["n_runs"], presets.FULL["T"]
    if args.n_runs:
        data["n_runs"] = args.n_runs
    if args.T:
        data["T"] = args.T
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.output:
        data["output_dir"] = args.output
    return ExperimentConfig.from_dict(data)


def _report(summary) -> None:
    print(f"{summary.config['name']}: n_runs={summary.n_runs} T={summary.T} "
          f"({summary.elapsed:.1f}s)")
    width = max(len(n) for n in summary.policies)
    for name in summary.policies:
        m, c = summary.mean[name][-1], summary.ci[name][-1]
        line = f"  {name:<{width}}  R_T = {m:10.3f} +/- {c:.3f}"
        if name in summary.lambda0:
            line += f"  switches = {summary.switch_count(name)}"
        print(line)
    if summary.config.get("output_dir"):
        print(f"  wrote {summary.config['output_dir']}")


def _run(cfg: ExperimentConfig, workers: int) -> None:
    progress = None
    if log.isEnabledFor(logging.INFO):
        def progress(i, n):
            if i % max(1, n // 10) == 0:
                log.info("%s: %d/%d runs", cfg.name, i, n)
    for sub_cfg in expand_sweep(cfg):
        _report(run_batch(sub_cfg, workers=workers, progress=progress))


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"banditlab: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            cfg = _apply_overrides(ExperimentConfig.from_json(args.config), args)
        elif args.command == "replicate":
            cfg = presets.replicate(args.preset, csv_path=args.csv, normalize_csv=args.normalize)
            if not args.output and cfg.output_dir is None:
                args.output = f"results/{cfg.name}"
            cfg = _apply_overrides(cfg, args)
        elif args.command == "diversity":
            dist = build_context(args.dist, args.d)
            if args.samples < 1000 or args.directions < 100:
                raise ValueError("need --samples >= 1000 and --directions >= 100")
        elif args.command == "constants":
            consts = diversity.theory_constants(args.lambda0, args.xmax, args.bmax, args.sigma,
                                                args.d, args.c0, args.t0)
    except (ValueError, TypeError, KeyError, FileNotFoundError) as exc:
        print(f"banditlab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command in ("simulate", "replicate"):
            _run(cfg, args.workers)
        elif args.command == "diversity":
            rep = diversity.estimate_lambda0(dist, args.samples, args.directions,
                                             np.random.default_rng(args.seed))
            out = rep.to_dict()
            out["sufficient_condition"] = diversity.check_sufficient_conditions(dist).to_dict()
            print(json.dumps(out, indent=1))
        else:
            print(json.dumps(consts.to_dict(), indent=1))
    except Exception as exc:  # noqa: BLE001 - any failure while running maps to exit 2
        print(f"banditlab: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
