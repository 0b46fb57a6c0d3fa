"""
Command-line interface: simulate, fit, grid and check.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure,
3 acceptance failure.
"""

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from cli.acceptance import FAST_SUITES, run_suites
from core.abm_sim import sample_latents, simulate
from core.errors import BCMInferError, ConfigurationError
from core.experiment_runner import MethodSettings, fit_posterior, run_grid
from core.metrics import posterior_mean, score
from models.inference import Method
from models.opinion import LatentParams, ModelConfig, Variant
from utils.config import Config, load_experiment_spec
from utils.export import (
    write_abc_accepted,
    write_elbo_trace,
    write_hmc_chain,
    write_posterior_samples,
)
from utils.trajectory_io import read_trajectory, write_trajectory

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_ACCEPTANCE = 3


class UsageError(Exception):
    """Bad command-line arguments."""


class _Parser(argparse.ArgumentParser):
    """ArgumentParser that reports usage errors instead of exiting with status 2."""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bcminfer", description="Simulate and infer bounded-confidence opinion models")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only warnings and errors")
    parser.add_argument("--config-dir", help="Configuration directory (default: $BCMINFER_CONFIG_DIR)")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    # simulate
    p = sub.add_parser("simulate", help="Simulate a trajectory and write it as JSON lines")
    p.add_argument("--variant", required=True, help="BCMb, BCMS, BCMI, BCMU or BCMG")
    p.add_argument("--n-agents", type=int, default=100)
    p.add_argument("--n-steps", type=int, default=128)
    p.add_argument("--interactions-per-step", type=int, default=None)
    p.add_argument("--mu", type=float, default=None, help="mu+ = mu- (default: simulation.mu)")
    p.add_argument("--feed-len", type=int, default=None, help="BCM-I feed length F")
    p.add_argument("--xi", type=float, default=None, help="BCM-G probability of update dynamics")
    p.add_argument("--graph-density", type=float, default=None)
    p.add_argument("--leader-fraction", type=float, default=0.2, help="BCM-S share of leaders")
    p.add_argument("--eps-plus", type=float, help="Sampled from the grid when omitted")
    p.add_argument("--eps-minus", type=float)
    p.add_argument("--eps-plus-L", type=float)
    p.add_argument("--eps-minus-L", type=float)
    p.add_argument("--k-attend", type=int)
    p.add_argument("--beta", type=int, choices=(0, 1))
    p.add_argument("--gamma", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="Trajectory file to write")

    # fit
    p = sub.add_parser("fit", help="Fit one method to a trajectory file")
    p.add_argument("trajectory", help="Trajectory file written by simulate")
    p.add_argument("--method", required=True, help="svi, hmc (or mcmc) or abc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-limit", type=float, default=None, help="Seconds (default: none)")
    p.add_argument("--out", required=True, help="Output directory for CSVs")
    p.add_argument("--parallelism", type=int, default=None, help="ABC worker threads")
    p.add_argument("--epochs", type=int, help="SVI epochs")
    p.add_argument("--n-samples", type=int, help="HMC draws after burn-in")
    p.add_argument("--n-burnin", type=int, help="HMC burn-in iterations")
    p.add_argument("--n-sims", type=int, help="ABC simulations")

    # grid
    p = sub.add_parser("grid", help="Run an experiment grid from a YAML spec")
    p.add_argument("spec", help="Experiment spec file")
    p.add_argument("--seed", type=int, default=None, help="Override master_seed")
    p.add_argument("--time-limit", type=float, default=None, help="Override time_limit_seconds")
    p.add_argument("--out", default=None, help="Override output_dir")
    p.add_argument("--parallelism", type=int, default=None, help="Override parallelism")
    p.add_argument("--method", action="append", help="Restrict to these methods (repeatable)")
    p.add_argument("--no-wall-time", action="store_true", help="Write 0.0 wall times (byte-identical reruns)")
    p.add_argument("--no-resume", action="store_true", help="Recompute cells that already have ok rows")
    p.add_argument("--no-figures", action="store_true", help="Skip SVG rendering")

    # check
    p = sub.add_parser("check", help="Run acceptance suites")
    p.add_argument("--suite", type=int, action="append", choices=FAST_SUITES, help="Suite number (repeatable)")
    p.add_argument("--seed", type=int, default=0)

    return parser


# === Commands ===

def _latents_from_args(args, config: ModelConfig) -> LatentParams:
    rng = np.random.default_rng(np.random.SeedSequence(entropy=args.seed, spawn_key=(2,)))
    latents = sample_latents(config.variant, config, rng, args.leader_fraction)
    overrides = {
        name: getattr(args, name)
        for name in ("eps_plus", "eps_minus", "eps_plus_L", "eps_minus_L", "k_attend", "gamma")
        if getattr(args, name) is not None
    }
    if args.beta is not None:
        overrides["beta"] = bool(args.beta)
    if overrides:
        latents = dataclasses.replace(latents, **overrides)
    latents.validate_for(config)
    return latents


def cmd_simulate(args, settings: Config) -> int:
    variant = Variant.parse(args.variant)
    mu = args.mu if args.mu is not None else float(settings.get("simulation.mu", 0.02))
    config = ModelConfig(
        variant=variant,
        n_agents=args.n_agents,
        n_steps=args.n_steps,
        interactions_per_step=(
            args.interactions_per_step
            or int(settings.get("simulation.interactions_per_step", 10))
        ),
        mu_plus=mu,
        mu_minus=mu,
        feed_len=args.feed_len,
        xi=args.xi,
        graph_density=(
            args.graph_density if args.graph_density is not None
            else float(settings.get("simulation.graph_density", 0.1))
        ),
        seed=args.seed,
    )
    latents = _latents_from_args(args, config)
    logger.info(f"Simulating {variant.value}: N={config.n_agents}, T={config.n_steps}, seed={config.seed}")
    trajectory = simulate(config, latents, int(settings.get("simulation.rewire_retries", 100)))
    path = write_trajectory(trajectory, args.out)
    logger.info(f"Wrote {len(trajectory.events)} events to {path}")
    return EXIT_OK


def cmd_fit(args, settings: Config) -> int:
    method = Method.parse(args.method)
    trajectory = read_trajectory(args.trajectory)
    out_dir = Path(args.out)

    methods = MethodSettings.build(None, settings)
    svi_overrides = {"seed": args.seed}
    if args.epochs is not None:
        svi_overrides["n_epochs"] = args.epochs
    hmc_overrides = {"seed": args.seed}
    if args.n_samples is not None:
        hmc_overrides["n_samples"] = args.n_samples
    if args.n_burnin is not None:
        hmc_overrides["n_burnin"] = args.n_burnin
    abc_overrides = {"seed": args.seed}
    if args.n_sims is not None:
        abc_overrides["n_sims"] = args.n_sims
    if args.parallelism is not None:
        abc_overrides["parallelism"] = args.parallelism
    methods = dataclasses.replace(
        methods,
        svi=dataclasses.replace(methods.svi, **svi_overrides),
        hmc=dataclasses.replace(methods.hmc, **hmc_overrides),
        abc=dataclasses.replace(methods.abc, **abc_overrides),
    )

    posterior = fit_posterior(method, trajectory, methods, args.time_limit)
    write_posterior_samples(posterior, out_dir / "posterior_samples.csv")
    if method == Method.SVI:
        write_elbo_trace(posterior.diagnostics["svi_result"], out_dir / "elbo_trace.csv")
    elif method == Method.HMC:
        write_hmc_chain(posterior, out_dir / "hmc_chain.csv")
    else:
        write_abc_accepted(posterior, out_dir / "abc_accepted.csv")

    estimate = posterior_mean(posterior)
    if trajectory.truth is not None:
        scores = score(trajectory.truth, estimate, trajectory.config)
        frame = pd.DataFrame([dataclasses.asdict(s) for s in scores])
        frame.to_csv(out_dir / "scores.csv", index=False)
        for s in scores:
            logger.info(f"{s.name}: truth={s.truth} estimate={s.estimate} error={s.error:.4f}")
    logger.info(f"Wrote {method.value} outputs to {out_dir}")
    return EXIT_OK


def cmd_grid(args, settings: Config) -> int:
    spec = load_experiment_spec(args.spec, settings)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.time_limit is not None:
        overrides["time_limit_seconds"] = args.time_limit
    if args.out is not None:
        overrides["output_dir"] = Path(args.out)
    if args.parallelism is not None:
        overrides["parallelism"] = args.parallelism
    if args.method:
        overrides["methods"] = [Method.parse(m) for m in args.method]
    if args.no_wall_time:
        overrides["record_wall_time"] = False
    if overrides:
        spec = dataclasses.replace(spec, **overrides)

    outputs = run_grid(spec, settings, resume=not args.no_resume, render_figures=not args.no_figures)
    counts = ", ".join(f"{k}={v}" for k, v in sorted(outputs.status_counts.items())) or "nothing to run"
    logger.info(f"Grid done: {outputs.n_cells} cells ({outputs.n_skipped} skipped), {counts}; {outputs.results_csv}")
    return EXIT_OK


def cmd_check(args, settings: Config) -> int:
    results = run_suites(args.suite, seed=args.seed)
    for r in results:
        print(f"[{'PASS' if r.passed else 'FAIL'}] {r.number:2d} {r.name} ({r.elapsed:.1f}s) {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "grid": cmd_grid,
    "check": cmd_check,
}


def configure_logging(level: str):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def main(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, run one command and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    try:
        settings = Config(args.config_dir)
    except OSError as e:
        print(f"bcminfer: cannot use config directory: {e}", file=sys.stderr)
        return EXIT_USAGE
    level = "DEBUG" if args.verbose else "WARNING" if args.quiet else settings.log_level
    configure_logging(level)

    try:
        return COMMANDS[args.command](args, settings)
    except ConfigurationError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_USAGE
    except BCMInferError as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    except Exception:
        logger.exception(f"{args.command} failed")
        return EXIT_RUNTIME
