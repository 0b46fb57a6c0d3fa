"""
Experiment grid runner.

Expands an ExperimentSpec into cells, simulates a ground-truth trajectory
per cell, fits every requested method under a wall-clock limit and scores
the posterior means. Results go through a single writer into the results
database, from which results.csv and the plot data are regenerated.
"""

import dataclasses
import hashlib
import itertools
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from core.abm_sim import sample_latents, simulate
from core.errors import BCMInferError, ConfigurationError, TimeLimitExceeded
from core.mcmc import fit_hmc
from core.metrics import ParamScore, posterior_mean, score, unscored
from core.rejection_abc import fit_abc
from core.svi import fit_svi, sample_posterior
from models.experiment import (
    ExperimentCell,
    ExperimentResult,
    ExperimentSpec,
    GRID_AXES,
    ResultRow,
    RunStatus,
)
from models.inference import (
    AbcHyperparams,
    HmcHyperparams,
    Method,
    PgabmConfig,
    PosteriorSamples,
    SviHyperparams,
)
from models.opinion import LatentParams, ModelConfig, Trajectory, Variant
from utils.database import ResultsDatabase
from utils.export import results_frame, write_plot_data, write_results
from utils.plotting import render_plot_dir

logger = logging.getLogger(__name__)

DEFAULT_LEADER_FRACTION = 0.2


# === Seeds ===

def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any printable parts (blake2b of their joined repr)."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


def cell_seed(master_seed: int, cell_key: str) -> int:
    """Seed of one cell: hash of the master seed and the cell key (coordinates and replicate)."""
    return derive_seed(master_seed, cell_key)


# === Cells ===

def expand_cells(spec: ExperimentSpec) -> List[ExperimentCell]:
    """
    Cartesian product of grid axes, fixed latent axes and replicates.

    Axes that do not apply to the variant (F outside BCM-I, xi outside
    BCM-G, leader_frac outside BCM-S) are ignored.
    """
    variant = spec.variant
    applicable = {
        "F": variant == Variant.BCMI,
        "xi": variant == Variant.BCMG,
        "leader_frac": variant == Variant.BCMS,
    }
    axis_names = [a for a in GRID_AXES if a in spec.axes and applicable.get(a, True)]
    latent_names = [name for name, values in spec.latents.items() if values != "sample"]

    cells = []
    for axis_values in itertools.product(*(spec.axes[a] for a in axis_names)):
        coords = dict(zip(axis_names, axis_values))
        for latent_values in itertools.product(*(spec.latents[n] for n in latent_names)):
            latents = tuple(zip(latent_names, latent_values))
            for replicate in range(spec.replicates):
                cell = ExperimentCell(
                    variant=variant,
                    n_steps=int(coords["T"]),
                    n_agents=int(coords["N"]),
                    replicate=replicate,
                    seed=0,
                    feed_len=int(coords["F"]) if "F" in coords else None,
                    xi=float(coords["xi"]) if "xi" in coords else None,
                    leader_frac=(
                        float(coords.get("leader_frac", DEFAULT_LEADER_FRACTION))
                        if variant == Variant.BCMS else None
                    ),
                    mu=float(coords.get("mu", 0.02)),
                    interactions_per_step=spec.interactions_per_step,
                    graph_density=spec.graph_density,
                    rewire_retries=spec.rewire_retries,
                    latents=latents,
                )
                cells.append(dataclasses.replace(cell, seed=cell_seed(spec.master_seed, cell.key)))
    return cells


def cell_model_config(cell: ExperimentCell) -> ModelConfig:
    return ModelConfig(
        variant=cell.variant,
        n_agents=cell.n_agents,
        n_steps=cell.n_steps,
        interactions_per_step=cell.interactions_per_step,
        mu_plus=cell.mu,
        mu_minus=cell.mu,
        feed_len=cell.feed_len,
        xi=cell.xi,
        graph_density=cell.graph_density,
        seed=cell.seed,
    )


def cell_latents(cell: ExperimentCell, config: ModelConfig) -> LatentParams:
    """Ground truth of a cell: sampled from the grids, then fixed latent axes applied."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=cell.seed, spawn_key=(2,)))
    leader_fraction = cell.leader_frac if cell.leader_frac is not None else DEFAULT_LEADER_FRACTION
    latents = sample_latents(cell.variant, config, rng, leader_fraction)
    if cell.latents:
        latents = dataclasses.replace(latents, **dict(cell.latents))
    latents.validate_for(config)
    return latents


# === Fitting ===

@dataclass
class MethodSettings:
    """Hyperparameters of every method for one run."""

    pgabm: PgabmConfig = field(default_factory=PgabmConfig)
    svi: SviHyperparams = field(default_factory=SviHyperparams)
    hmc: HmcHyperparams = field(default_factory=HmcHyperparams)
    abc: AbcHyperparams = field(default_factory=AbcHyperparams)

    @classmethod
    def build(cls, spec: Optional[ExperimentSpec] = None, config=None) -> "MethodSettings":
        """Configuration defaults (when given) overridden by the svi / hmc / abc sections of an ExperimentSpec."""
        svi = dict(spec.svi) if spec else {}
        hmc = dict(spec.hmc) if spec else {}
        abc = dict(spec.abc) if spec else {}
        if config is None:
            return cls(PgabmConfig(), SviHyperparams(**svi), HmcHyperparams(**hmc), AbcHyperparams(**abc))
        return cls(
            PgabmConfig.from_config(config),
            SviHyperparams.from_config(config, **svi),
            HmcHyperparams.from_config(config, **hmc),
            AbcHyperparams.from_config(config, **abc),
        )

    def seeded(self, seed: int) -> "MethodSettings":
        """Copy with per-method seeds derived from one run seed."""
        return MethodSettings(
            pgabm=self.pgabm,
            svi=dataclasses.replace(self.svi, seed=derive_seed(seed, Method.SVI.value)),
            hmc=dataclasses.replace(self.hmc, seed=derive_seed(seed, Method.HMC.value)),
            abc=dataclasses.replace(self.abc, seed=derive_seed(seed, Method.ABC.value)),
        )


def fit_posterior(
    method: Method,
    trajectory: Trajectory,
    settings: MethodSettings,
    time_limit: Optional[float] = None,
) -> PosteriorSamples:
    """Run one inference method and return its posterior samples."""
    variant = trajectory.variant
    if method == Method.SVI:
        result = fit_svi(trajectory, variant, settings.pgabm, settings.svi, time_limit)
        posterior = sample_posterior(
            result.params, variant, trajectory.config,
            n=settings.svi.n_posterior_samples, seed=settings.svi.seed,
        )
        posterior.diagnostics.update(svi_result=result, wall_time=result.wall_time)
        return posterior
    if method == Method.HMC:
        return fit_hmc(trajectory, variant, settings.pgabm, settings.hmc, time_limit)
    if method == Method.ABC:
        return fit_abc(trajectory, variant, settings.abc, time_limit)
    raise ConfigurationError(f"Unknown method: {method}")


def _rows(cell: ExperimentCell, method: Method, scores: List[ParamScore],
          wall_time: float, status: RunStatus) -> List[ResultRow]:
    return [
        ResultRow(
            variant=cell.variant.value,
            method=method.value,
            seed=cell.seed,
            T=cell.n_steps,
            N=cell.n_agents,
            F=cell.feed_len,
            xi=cell.xi,
            leader_frac=cell.leader_frac,
            mu=cell.mu,
            param_name=s.name,
            truth=s.truth,
            estimate=s.estimate,
            error=s.error,
            wall_time_s=wall_time,
            status=status.value,
        )
        for s in scores
    ]


def run_single(
    cell: ExperimentCell,
    methods: List[Method],
    settings: Optional[MethodSettings] = None,
    time_limit: Optional[float] = None,
    record_wall_time: bool = True,
) -> List[ExperimentResult]:
    """
    Simulate one cell and score every method on it.

    Method failures never propagate: a passed deadline is recorded as
    timeout, any other exception as failed.

    Returns:
        One ExperimentResult per method, in the given order
    """
    settings = (settings or MethodSettings()).seeded(cell.seed)
    config = cell_model_config(cell)
    truth = cell_latents(cell, config)
    logger.info(f"Cell {cell.key}: simulating {config.n_events} events")
    trajectory = simulate(config, truth, cell.rewire_retries)

    results = []
    for method in methods:
        start = time.monotonic()
        estimate = None
        message = ""
        try:
            posterior = fit_posterior(method, trajectory, settings, time_limit)
            estimate = posterior_mean(posterior)
            scores = score(truth, estimate, config)
            status = RunStatus.OK
        except TimeLimitExceeded as e:
            scores = unscored(truth, config)
            status = RunStatus.TIMEOUT
            message = str(e)
            logger.warning(f"Cell {cell.key}: {method.value} timed out after {e.elapsed:.1f}s")
        except Exception as e:
            scores = unscored(truth, config)
            status = RunStatus.FAILED
            message = f"{type(e).__name__}: {e}"
            logger.exception(f"Cell {cell.key}: {method.value} failed")
        elapsed = time.monotonic() - start
        wall_time = elapsed if record_wall_time else 0.0

        results.append(ExperimentResult(
            variant=cell.variant,
            ground_truth=truth,
            method=method,
            posterior_mean=estimate,
            errors={s.name: s.error for s in scores if s.error is not None},
            wall_time=wall_time,
            status=status,
            rows=_rows(cell, method, scores, wall_time, status),
            message=message,
        ))
        logger.info(f"Cell {cell.key}: {method.value} {status.value} in {elapsed:.1f}s")
    return results


# === Grids ===

@dataclass
class GridOutputs:
    """Files produced by a grid run."""

    output_dir: Path
    results_csv: Path
    plot_files: List[Path] = field(default_factory=list)
    n_cells: int = 0
    n_skipped: int = 0
    status_counts: Dict[str, int] = field(default_factory=dict)


def _prepare_output_dir(output_dir: Path) -> Path:
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise BCMInferError(f"Cannot create output directory {output_dir}: {e}") from e
    if not os.access(output_dir, os.W_OK):
        raise BCMInferError(f"Output directory {output_dir} is not writable")
    return output_dir


def run_grid(
    spec: ExperimentSpec,
    config=None,
    resume: bool = True,
    render_figures: bool = True,
) -> GridOutputs:
    """
    Run every cell of a grid and write results.csv, plot data and figures.

    Args:
        spec: Experiment definition
        config: Optional Config supplying method defaults
        resume: Skip cells whose every method already has ok rows
        render_figures: Also write SVG figures next to the plot data

    Returns:
        GridOutputs describing the written files
    """
    output_dir = _prepare_output_dir(Path(spec.output_dir).expanduser())
    db = ResultsDatabase(output_dir / "results.db")
    settings = MethodSettings.build(spec, config)
    cells = expand_cells(spec)
    methods = list(spec.methods)

    try:
        done = db.completed_cells(m.value for m in methods) if resume else set()
        pending = [c for c in cells if c.key not in done]
        n_skipped = len(cells) - len(pending)
        if n_skipped:
            logger.warning(f"Skipping {n_skipped} completed cells in {output_dir}")
        logger.info(
            f"Grid {spec.variant.value}: {len(cells)} cells x {len(methods)} methods, "
            f"{len(pending)} to run, parallelism {spec.parallelism}"
        )

        status_counts: Dict[str, int] = {}

        def store(cell_results: List[ExperimentResult], cell: ExperimentCell):
            for result in cell_results:
                db.replace_rows(cell.key, result.method.value, result.rows)
                status_counts[result.status.value] = status_counts.get(result.status.value, 0) + 1

        def run_cell(cell: ExperimentCell) -> Tuple[ExperimentCell, List[ExperimentResult]]:
            return cell, run_single(cell, methods, settings, spec.time_limit_seconds, spec.record_wall_time)

        start = time.monotonic()
        if spec.parallelism > 1:
            executor = ThreadPoolExecutor(max_workers=spec.parallelism)
            try:
                futures = [executor.submit(run_cell, cell) for cell in pending]
                # results are written from this thread only
                for future in as_completed(futures):
                    cell, cell_results = future.result()
                    store(cell_results, cell)
            finally:
                executor.shutdown(wait=True, cancel_futures=True)
        else:
            for cell in pending:
                cell, cell_results = run_cell(cell)
                store(cell_results, cell)

        rows = db.get_all_rows()
    finally:
        db.close()

    results_csv = write_results(rows, output_dir / "results.csv")
    plot_files = write_plot_data(results_frame(rows), output_dir)
    if render_figures:
        plot_files += render_plot_dir(output_dir)
    logger.info(
        f"Grid finished in {time.monotonic() - start:.1f}s: {len(rows)} result rows in {results_csv}"
    )
    return GridOutputs(
        output_dir=output_dir,
        results_csv=results_csv,
        plot_files=plot_files,
        n_cells=len(cells),
        n_skipped=n_skipped,
        status_counts=status_counts,
    )
