"""CSV and SVG writers for slices, seed studies and iteration histories."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import SeedStudy, SliceResult  # noqa: E402
from .q_iteration import IterationHistory  # noqa: E402

plt.rcParams["svg.hashsalt"] = "qlab"


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    """Column-name -> float array for any CSV written by this module."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no header line")
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.float64)
    data = data.reshape(-1, len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def emit_slice_csv(result: SliceResult, path) -> None:
    header = ["theta", "value"]
    cols = [result.thetas, result.values]
    if result.values_left is not None:
        header += ["value_left", "value_right"]
        cols += [result.values_left, result.values_right]
    _write_csv(path, header, zip(*cols))


def emit_eval_csv(study: SeedStudy, path) -> None:
    rows = [(s, r.avg_return, r.success_rate, r.successful, r.mean_steps)
            for s, r in zip(study.seeds, study.reports)]
    _write_csv(path, ["seed", "avg_return", "success_rate", "successful", "mean_steps"], rows)


def emit_history_csv(history: IterationHistory, path) -> None:
    rows = []
    for rec in history.records:
        h = rec.q.history
        rows.append((rec.iteration, rec.report.avg_return, rec.report.success_rate, rec.report.successful,
                     rec.report.mean_steps, h.n_epochs if h else 0, h.best_val_loss if h else float("nan")))
    _write_csv(path, ["iteration", "avg_return", "success_rate", "successful", "mean_steps",
                      "epochs", "best_val_loss"], rows)


def write_metrics(result: SliceResult, path) -> None:
    m = result.metrics
    lines = [
        f"policy={result.policy}",
        f"n_points={len(result.values)}",
        f"max_adjacent_jump={m.max_adjacent_jump!r}",
        f"jump_threshold={m.jump_threshold!r}",
        f"jump_count={m.n_jumps}",
        f"refinement_ratio={m.refinement_ratio!r}",
    ]
    if result.refined_values is not None:
        lines.append(f"refined_points={len(result.refined_values)}")
    Path(path).write_text("\n".join(lines) + "\n")


def slice_figure(thetas, values, title: str = ""):
    thetas = np.asarray(thetas)
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("nothing to plot: empty slice")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(thetas, values, lw=0.5, color="tab:blue")
    ax.scatter(thetas, values, s=0.5, color="tab:blue")
    ax.set_xlabel("pole angle theta (rad)")
    ax.set_ylabel("rollout value")
    ax.set_title(title)
    return fig


def study_figure(returns, title: str = ""):
    returns = np.asarray(returns)
    if returns.size == 0:
        raise ValueError("nothing to plot: empty seed study")
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.boxplot(returns)
    ax.set_ylabel("average return")
    ax.set_title(title)
    return fig


def history_figure(iterations, avg_return, success_rate, successful, title: str = ""):
    iterations = np.asarray(iterations)
    if iterations.size == 0:
        raise ValueError("nothing to plot: empty history")
    avg_return = np.asarray(avg_return)
    successful = np.asarray(successful).astype(bool)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(iterations, avg_return, color="tab:blue", label="average return")
    ax.set_xlabel("iteration")
    ax.set_ylabel("average return")
    ax2 = ax.twinx()
    ax2.plot(iterations, success_rate, "x", color="black", label="episodes reaching cap")
    ax2.set_ylim(-0.05, 1.05)
    ax2.set_ylabel("fraction reaching cap")
    ax.plot(iterations[successful], avg_return[successful], "o", color="tab:green", label="successful")
    ax.set_title(title)
    return fig


def figure_for(result):
    if isinstance(result, SliceResult):
        return slice_figure(result.thetas, result.values, result.policy)
    if isinstance(result, SeedStudy):
        return study_figure(result.returns, "seed study")
    if isinstance(result, IterationHistory):
        recs = result.records
        return history_figure([r.iteration for r in recs], [r.report.avg_return for r in recs],
                              [r.report.success_rate for r in recs], [r.report.successful for r in recs],
                              result.variant.value)
    raise TypeError(f"cannot plot {type(result).__name__}")


def save_svg(fig, path) -> None:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def emit_plot(result, path) -> None:
    save_svg(figure_for(result), path)
