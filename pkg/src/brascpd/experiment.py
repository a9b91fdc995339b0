"""Multi-trial experiment runner writing trace and summary CSV files."""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .data import generate, load_model, load_tensor
from .errors import DivergedError
from .metrics import TraceRecord
from .sampling import PRNG_NAME
from .solvers import run

log = logging.getLogger(__name__)


def trial_seed(master_seed: int, trial: int) -> int:
    """Independent 64-bit seed for trial ``trial`` of an experiment."""
    state = np.random.SeedSequence([master_seed, trial]).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def trace_columns(ndim: int, with_mse: bool) -> list:
    cols = ["iteration", "mttkrp_eq", "all_mode_mttkrp_eq", "sampled_entries", "wall_seconds", "cost"]
    if with_mse:
        cols += [f"mse_mode_{n}" for n in range(1, ndim + 1)] + ["mse_avg"]
    return cols


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def trace_row(rec: TraceRecord, ndim: int, with_mse: bool, wall_clock: bool) -> list:
    row = [
        rec.iteration,
        rec.mttkrp_equivalents,
        rec.all_mode_mttkrp,
        rec.sampled_entries,
        rec.wall_seconds if wall_clock else float("nan"),
        rec.cost,
    ]
    if with_mse:
        mses = rec.mse_per_mode or [float("nan")] * ndim
        row += list(mses) + [rec.mse_avg]
    return [_fmt(v) for v in row]


def header_block(cfg: ExperimentConfig, extra: Optional[dict] = None) -> str:
    lines = [
        f"# brascpd {__version__}",
        f"# prng = {PRNG_NAME}",
        f"# master_seed = {cfg.seed}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    lines += [f"# config: {line}" for line in cfg.echo_lines()]
    return "\n".join(lines) + "\n"


@dataclass
class TrialResult:
    trial: int
    seed: int
    diverged: bool
    iterations: int
    mttkrp_eq: float
    cost: float
    mse_per_mode: Optional[list]
    trace_path: str
    message: str = ""

    @property
    def mse_avg(self) -> float:
        if not self.mse_per_mode:
            return float("nan")
        return float(np.mean(self.mse_per_mode))


def _load_instance(cfg: ExperimentConfig, seed: int):
    if cfg.get("source") == "file":
        tensor = load_tensor(cfg.get("tensor_path"))
        truth = load_model(cfg.get("truth_path")) if cfg.get("truth_path") else None
        return tensor, truth
    inst = generate(cfg.synthetic_spec(seed), seed=np.random.SeedSequence([seed, 1]))
    return inst.tensor, inst.truth


def run_trial(cfg: ExperimentConfig, trial: int, out_dir: Path) -> TrialResult:
    """Run one seeded trial and write its trace to ``trace_<trial>.csv``."""
    seed = trial_seed(cfg.seed, trial)
    tensor, truth = _load_instance(cfg, seed)
    init = load_model(cfg.get("init_path")) if cfg.get("init_path") else None
    solver = cfg.solver_config(seed)
    regs = cfg.regularizers(tensor.ndim)
    wall_clock = cfg.get("wall_clock")
    with_mse = truth is not None
    ndim = tensor.ndim
    path = out_dir / f"trace_{trial:03d}.csv"

    buf = io.StringIO()
    buf.write(header_block(cfg, {
        "trial": trial,
        "trial_seed": seed,
        "tensor_shape": "x".join(map(str, tensor.shape)),
        "robbins_monro": solver.schedule.robbins_monro if solver.algorithm == "brascpd" else "n/a",
    }))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(trace_columns(ndim, with_mse))

    def sink(rec):
        writer.writerow(trace_row(rec, ndim, with_mse, wall_clock))

    try:
        model, trace = run(tensor, solver, regs, cfg.stopping(), trace_sink=sink, truth=truth, init=init)
        last = trace[-1]
        result = TrialResult(trial, seed, False, last.iteration, last.mttkrp_equivalents,
                             last.cost, last.mse_per_mode, str(path))
    except DivergedError as exc:
        message = str(exc)
        rec = exc.progress
        writer.writerow(trace_row(rec, ndim, with_mse, wall_clock))
        result = TrialResult(trial, seed, True, rec.iteration, rec.mttkrp_equivalents, rec.cost,
                             rec.mse_per_mode, str(path), message)
        log.warning("trial %d diverged: %s", trial, message)
    path.write_text(buf.getvalue())
    return result


def _run_trial_args(args):
    return run_trial(*args)


def summarize(results: list) -> dict:
    """Mean and median of final metrics over the trials that did not diverge."""
    finite = [r for r in results if not r.diverged]
    metrics = {"cost": [r.cost for r in finite], "mttkrp_eq": [r.mttkrp_eq for r in finite],
               "iterations": [r.iterations for r in finite]}
    if finite and finite[0].mse_per_mode is not None:
        ndim = len(finite[0].mse_per_mode)
        for n in range(ndim):
            metrics[f"mse_mode_{n + 1}"] = [r.mse_per_mode[n] for r in finite]
        metrics["mse_avg"] = [r.mse_avg for r in finite]
    summary = {}
    for name, vals in metrics.items():
        arr = np.asarray(vals, dtype=float)
        summary[name] = {
            "mean": float(arr.mean()) if arr.size else float("nan"),
            "median": float(np.median(arr)) if arr.size else float("nan"),
        }
    return {
        "trials": len(results),
        "finite_trials": len(finite),
        "diverged": len(results) - len(finite),
        "metrics": summary,
    }


def write_summary(path: Path, cfg: ExperimentConfig, results: list, summary: dict) -> None:
    buf = io.StringIO()
    buf.write(header_block(cfg, {
        "trials": summary["trials"],
        "finite_trials": summary["finite_trials"],
        "diverged": summary["diverged"],
        "trial_seeds": ",".join(str(r.seed) for r in results),
    }))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "mean", "median"])
    for name, vals in summary["metrics"].items():
        w.writerow([name, _fmt(vals["mean"]), _fmt(vals["median"])])
    path.write_text(buf.getvalue())


def write_trials(path: Path, results: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ndim = next((len(r.mse_per_mode) for r in results if r.mse_per_mode), 0)
    w.writerow(["trial", "seed", "diverged", "iterations", "mttkrp_eq", "cost"]
               + [f"mse_mode_{n}" for n in range(1, ndim + 1)] + (["mse_avg"] if ndim else []))
    for r in results:
        row = [r.trial, r.seed, int(r.diverged), r.iterations, _fmt(r.mttkrp_eq), _fmt(r.cost)]
        if ndim:
            row += [_fmt(v) for v in r.mse_per_mode] + [_fmt(r.mse_avg)]
        w.writerow(row)
    path.write_text(buf.getvalue())


def run_experiment(cfg: ExperimentConfig, out_dir, parallel: Optional[int] = None,
                   plot: Optional[bool] = None) -> dict:
    """Run every trial, write traces, ``trials.csv`` and ``summary.csv``.

    Returns the summary dict with an added ``results`` list. Figures are
    rendered next to the CSV files when plotting is enabled.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    workers = parallel if parallel is not None else cfg.get("parallel")
    jobs = [(cfg, k, out_dir) for k in range(cfg.trials)]
    if workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_trial_args, jobs))
    else:
        results = [run_trial(*job) for job in jobs]
    summary = summarize(results)
    write_summary(out_dir / "summary.csv", cfg, results, summary)
    write_trials(out_dir / "trials.csv", results)
    if cfg.get("plot") if plot is None else plot:
        from .plotting import plot_experiment
        summary["figures"] = [str(p) for p in plot_experiment(out_dir, [r.trace_path for r in results])]
    summary["results"] = results
    return summary

