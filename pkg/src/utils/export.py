"""
CSV writers for fits and experiment grids.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np
import pandas as pd

from core.errors import BCMInferError, SchemaError
from core.metrics import aggregate_errors
from models.experiment import GRID_AXES, RESULT_COLUMNS, ResultRow
from models.inference import Method, PosteriorSamples, SviResult

logger = logging.getLogger(__name__)

PLOT_AXES = ("T", "N", "F", "xi", "leader_frac", "mu")
SCATTER_COLUMNS = ("variant", "method", "param_name", "truth", "estimate")


def _write(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    except OSError as e:
        raise BCMInferError(f"Cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(frame)} rows to {path}")
    return path


# === Fit outputs ===

def elbo_trace_frame(result: SviResult) -> pd.DataFrame:
    return pd.DataFrame({"epoch": np.arange(len(result.elbo_trace)), "elbo": result.elbo_trace})


def posterior_frame(posterior: PosteriorSamples) -> pd.DataFrame:
    """One row per posterior sample, parameters in constrained space."""
    frame = pd.DataFrame([s.named_values() for s in posterior.samples])
    frame.insert(0, "sample", np.arange(len(frame)))
    return frame


def hmc_chain_frame(posterior: PosteriorSamples) -> pd.DataFrame:
    """Unconstrained draws with their log joint and acceptance flag."""
    if posterior.source != Method.HMC or "chain" not in posterior.diagnostics:
        raise BCMInferError("Posterior does not carry an HMC chain")
    chain = posterior.diagnostics["chain"]
    frame = pd.DataFrame(chain.draws, columns=[f"theta_{i}" for i in range(chain.draws.shape[1])])
    frame.insert(0, "draw", np.arange(len(frame)))
    frame["log_joint"] = chain.log_densities
    frame["accepted"] = chain.accepted
    return frame


def abc_accepted_frame(posterior: PosteriorSamples) -> pd.DataFrame:
    if posterior.source != Method.ABC:
        raise BCMInferError("Posterior does not come from ABC")
    frame = pd.DataFrame([s.named_values() for s in posterior.samples])
    frame.insert(0, "sim_index", np.asarray(posterior.diagnostics["sim_indices"], dtype=int))
    frame["distance"] = posterior.diagnostics["distances"]
    return frame


def write_elbo_trace(result: SviResult, path: Union[str, Path]) -> Path:
    return _write(elbo_trace_frame(result), path)


def write_posterior_samples(posterior: PosteriorSamples, path: Union[str, Path]) -> Path:
    return _write(posterior_frame(posterior), path)


def write_hmc_chain(posterior: PosteriorSamples, path: Union[str, Path]) -> Path:
    return _write(hmc_chain_frame(posterior), path)


def write_abc_accepted(posterior: PosteriorSamples, path: Union[str, Path]) -> Path:
    return _write(abc_accepted_frame(posterior), path)


# === Results ===

def results_frame(rows: Iterable[ResultRow]) -> pd.DataFrame:
    """Results table with exactly the published column order."""
    return pd.DataFrame([r.to_dict() for r in rows], columns=list(RESULT_COLUMNS))


def validate_results_schema(frame: pd.DataFrame):
    """Raise SchemaError unless the columns are exactly the results schema, in order."""
    columns = list(frame.columns)
    missing = [c for c in RESULT_COLUMNS if c not in columns]
    extra = [c for c in columns if c not in RESULT_COLUMNS]
    if missing or extra:
        raise SchemaError(missing, extra)
    if columns != list(RESULT_COLUMNS):
        raise SchemaError([], [], f"columns out of order: {columns}")


def write_results(rows: Iterable[ResultRow], path: Union[str, Path]) -> Path:
    frame = results_frame(rows)
    validate_results_schema(frame)
    return _write(frame, path)


def read_results(path: Union[str, Path]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise BCMInferError(f"Cannot read results file {path}: {e}") from e
    validate_results_schema(frame)
    return frame


# === Plot data ===

def plotted_axes(results: pd.DataFrame) -> List[str]:
    """Axes with more than one distinct value among ok rows."""
    ok = results[results["status"] == "ok"]
    return [axis for axis in PLOT_AXES if ok[axis].dropna().nunique() > 1]


def error_vs_frame(results: pd.DataFrame, axis: str) -> pd.DataFrame:
    return aggregate_errors(results, axis)


def time_vs_frame(results: pd.DataFrame, axis: str) -> pd.DataFrame:
    """Wall time per (cell, method), one row per run: taken from the eps_rmse rows."""
    per_run = results[results["param_name"] == "eps_rmse"]
    frame = aggregate_errors(per_run, axis, value="wall_time_s")
    return frame.drop(columns=["param_name"])


def scatter_frame(results: pd.DataFrame) -> pd.DataFrame:
    ok = results[results["status"] == "ok"].dropna(subset=["truth", "estimate"])
    return ok[list(SCATTER_COLUMNS)].reset_index(drop=True)


def write_plot_data(
    results: pd.DataFrame,
    out_dir: Union[str, Path],
    axes: Sequence[str] = None,
) -> List[Path]:
    """
    Write error_vs_<axis>.csv, time_vs_<axis>.csv and scatter.csv.

    Args:
        results: Results table
        out_dir: Output directory
        axes: Axes to aggregate over (default: every axis that varies)

    Returns:
        Paths written
    """
    out_dir = Path(out_dir)
    axes = plotted_axes(results) if axes is None else list(axes)
    written = []
    for axis in axes:
        if axis not in GRID_AXES or axis not in results.columns:
            continue
        written.append(_write(error_vs_frame(results, axis), out_dir / f"error_vs_{axis}.csv"))
        written.append(_write(time_vs_frame(results, axis), out_dir / f"time_vs_{axis}.csv"))
    written.append(_write(scatter_frame(results), out_dir / "scatter.csv"))
    return written
