"""
SVG figures rendered from plot-data tables.
"""

import logging
from pathlib import Path
from typing import List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from core.errors import BCMInferError  # noqa: E402

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "bcminfer"


def _save(fig, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        # no timestamp, stable element ids
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise BCMInferError(f"Cannot write figure {path}: {e}") from e
    finally:
        plt.close(fig)
    return path


def plot_error_vs(frame: pd.DataFrame, axis: str, path: Union[str, Path], value: str = "error") -> Path:
    """
    Mean error against one grid axis, one line per (method, parameter), with standard-error bars.

    Args:
        frame: Output of aggregate_errors (columns method, param_name, <axis>, mean_<value>, se_<value>)
        axis: Grid axis on the x-axis
        path: SVG file to write
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    group_keys = ["method", "param_name"] if "param_name" in frame.columns else ["method"]
    for key, group in frame.groupby(group_keys, sort=True):
        label = " / ".join(str(k) for k in (key if isinstance(key, tuple) else (key,)))
        group = group.sort_values(axis)
        ax.errorbar(group[axis], group[f"mean_{value}"], yerr=group[f"se_{value}"],
                    marker="o", capsize=3, label=label)
    if axis == "T":
        ax.set_xscale("log", base=2)
    ax.set_xlabel(axis)
    ax.set_ylabel(f"mean {value}")
    if len(frame):
        ax.legend(fontsize="small")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_scatter(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Estimate against truth, one marker series per (method, parameter), with the diagonal."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for (method, param), group in frame.groupby(["method", "param_name"], sort=True):
        ax.scatter(group["truth"], group["estimate"], s=12, alpha=0.7, label=f"{method} / {param}")
    lo = min(frame["truth"].min(), frame["estimate"].min(), 0.0) if len(frame) else 0.0
    hi = max(frame["truth"].max(), frame["estimate"].max(), 1.0) if len(frame) else 1.0
    ax.plot([lo, hi], [lo, hi], color="grey", linestyle="--", linewidth=1)
    ax.set_xlabel("truth")
    ax.set_ylabel("estimate")
    if len(frame):
        ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, Path(path))


def render_plot_dir(out_dir: Union[str, Path]) -> List[Path]:
    """Render an SVG next to every error_vs / time_vs / scatter CSV in a directory."""
    out_dir = Path(out_dir)
    written = []
    for csv_path in sorted(out_dir.glob("*_vs_*.csv")):
        kind, axis = csv_path.stem.split("_vs_", 1)
        value = "wall_time_s" if kind == "time" else "error"
        frame = pd.read_csv(csv_path)
        written.append(plot_error_vs(frame, axis, csv_path.with_suffix(".svg"), value=value))
    scatter = out_dir / "scatter.csv"
    if scatter.exists():
        written.append(plot_scatter(pd.read_csv(scatter), out_dir / "scatter.svg"))
    logger.debug(f"Rendered {len(written)} figures in {out_dir}")
    return written
