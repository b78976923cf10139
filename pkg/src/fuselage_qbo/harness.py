"""Experiment orchestration, persistence and summaries.

An artifact directory holds:

``trace_<method>_sigma<s>_c<condition>_r<seed>.csv``
    one row per charged query, columns :data:`TRACE_COLUMNS`;
``runs.csv``
    one row per run (labels and run-level diagnostics);
``summary.csv``
    best-MAE statistics per (method, sigma), recomputed from the traces;
``manifest.txt``
    effective configuration, its hash, seeds and output file digests;
``regret.svg``, ``mae.svg``
    mean curves with min/max bands.

Files are written to a staging directory and moved into place only after
every run succeeded, so a failed experiment leaves no partial outputs.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
import shutil
import statistics
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env as fenv
from . import plotting
from .config import ExperimentConfig, format_config
from .optimizer import Box, RunTrace, run_method

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("query_index", "stage", "method", "charged_regret", "cumulative_regret",
                 "incumbent_mae", "epsilon_s", "queries_in_stage")
RUN_COLUMNS = ("method", "sigma", "condition", "seed", "trace_file", "f_star", "sigma_loss",
               "calibration_queries", "n_stages", "total_queries", "budget_too_small")
SUMMARY_COLUMNS = ("method", "sigma", "mean_best_mae", "std_best_mae", "n_conditions",
                   "n_runs", "mean_final_regret")


@dataclass(frozen=True)
class Cell:
    method: str
    sigma: float
    condition: int
    seed: int

    @property
    def trace_file(self) -> str:
        return f"trace_{self.method}_sigma{self.sigma!r}_c{self.condition}_r{self.seed}.csv"


@dataclass
class TraceTable:
    """Per-query columns of one persisted trace, plus its run labels."""

    method: str
    sigma: float
    condition: int
    seed: int
    query_index: np.ndarray
    stage: np.ndarray
    charged_regret: np.ndarray
    cumulative_regret: np.ndarray
    incumbent_mae: np.ndarray
    epsilon_s: np.ndarray
    queries_in_stage: np.ndarray

    @property
    def label(self) -> str:
        return f"{self.method} sigma={self.sigma:g}"

    @property
    def best_mae(self) -> float:
        return float(self.incumbent_mae[-1]) if len(self.incumbent_mae) else math.nan

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if len(self.cumulative_regret) else math.nan


def _fmt(x: float) -> str:
    return repr(float(x))


def trace_rows(trace: RunTrace):
    """Rows of the per-query CSV for ``trace``."""
    if not trace.stages:
        return
    per_query = trace.per_query_regret
    cumulative = trace.cumulative_regret
    incumbent = trace.incumbent_mae
    q = 0
    for k, st in enumerate(trace.stages):
        for _ in range(st.queries):
            yield (str(q + 1), str(st.stage_index), trace.method, _fmt(per_query[q]),
                   _fmt(cumulative[q]), _fmt(incumbent[k]), _fmt(st.epsilon_s),
                   str(st.queries))
            q += 1


def write_trace_csv(trace: RunTrace, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        w.writerows(trace_rows(trace))
    os.replace(tmp, path)


def read_trace_csv(path, method=None, sigma=math.nan, condition=-1, seed=-1) -> TraceTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace columns {header}")
        rows = list(reader)
    cols = list(zip(*rows)) if rows else [()] * len(TRACE_COLUMNS)
    data = dict(zip(TRACE_COLUMNS, cols))
    if method is None:
        method = data["method"][0] if rows else "unknown"
    as_int = lambda c: np.array(data[c], dtype=int)  # noqa: E731
    as_float = lambda c: np.array(data[c], dtype=float)  # noqa: E731
    return TraceTable(method, float(sigma), int(condition), int(seed),
                      as_int("query_index"), as_int("stage"), as_float("charged_regret"),
                      as_float("cumulative_regret"), as_float("incumbent_mae"),
                      as_float("epsilon_s"), as_int("queries_in_stage"))


def build_env(config: ExperimentConfig, condition: int, sigma: float):
    seed = config.condition_base + condition
    return fenv.make_env(config.n_points, config.m_actuators, seed, sigma, noise_seed=seed)


def build_domain(config: ExperimentConfig, env):
    if config.mode == "discrete2":
        return fenv.discrete_grid(env, config.active_actuators, config.levels)
    return Box.for_env(env)


def run_cell(config: ExperimentConfig, cell: Cell) -> RunTrace:
    env = build_env(config, cell.condition, cell.sigma)
    domain = build_domain(config, env)
    return run_method(cell.method, env, config.optimizer_config(cell.seed), domain)


def _run_cell_args(args):
    return run_cell(*args)


def cells_for(config: ExperimentConfig) -> list[Cell]:
    return [Cell(m, s, c, r) for s in config.sigma for c in range(config.n_conditions)
            for r in config.run_seeds for m in config.methods]


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run_experiment(config: ExperimentConfig, out_dir=None, jobs: int = 1) -> Path:
    """Run every (sigma, condition, seed, method) cell and persist the results."""
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.parent.mkdir(parents=True, exist_ok=True)
    cells = cells_for(config)
    stage = Path(tempfile.mkdtemp(prefix=f".{out.name}.staging-", dir=out.parent))
    t0 = time.perf_counter()
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                traces = list(pool.map(_run_cell_args, [(config, c) for c in cells]))
        else:
            traces = [run_cell(config, c) for c in cells]
        for cell, trace in zip(cells, traces):
            if trace.budget_too_small:
                logger.warning("%s: budget below one stage, empty trace", cell.trace_file)
            write_trace_csv(trace, stage / cell.trace_file)
        with open(stage / "runs.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(RUN_COLUMNS)
            for cell, tr in zip(cells, traces):
                w.writerow((cell.method, _fmt(cell.sigma), cell.condition, cell.seed,
                            cell.trace_file, _fmt(tr.f_star), _fmt(tr.sigma_loss),
                            tr.calibration_queries, len(tr.stages), tr.total_queries,
                            int(tr.budget_too_small)))
        tables = load_traces(stage)
        write_summary(summarize(tables), stage / "summary.csv")
        nonempty = [t for t in tables if len(t.query_index)]
        if nonempty:
            plotting.plot(nonempty, "cumulative_regret", stage / "regret.svg")
            plotting.plot(nonempty, "incumbent_mae", stage / "mae.svg")
        _write_manifest(config, cells, stage)
        out.mkdir(parents=True, exist_ok=True)
        for f in sorted(stage.iterdir()):
            os.replace(f, out / f.name)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    logger.info("%d runs written to %s in %.1fs", len(cells), out, time.perf_counter() - t0)
    return out


def _write_manifest(config, cells, directory: Path):
    lines = ["# fuselage-qbo experiment manifest",
             f"config_sha256 = {config.config_hash()}",
             f"seeds = {', '.join(str(s) for s in config.run_seeds)}",
             f"conditions = {', '.join(str(config.condition_base + c) for c in range(config.n_conditions))}",
             f"runs = {len(cells)}",
             "", "[config]", format_config(config).rstrip("\n"), "", "[files]"]
    for f in sorted(directory.glob("*.csv")):
        lines.append(f"{f.name} = {_sha256(f)}")
    (directory / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_traces(directory) -> list[TraceTable]:
    """Read every trace listed in ``runs.csv`` under ``directory``."""
    directory = Path(directory)
    with open(directory / "runs.csv", newline="", encoding="utf-8") as fh:
        runs = list(csv.DictReader(fh))
    return [read_trace_csv(directory / r["trace_file"], r["method"], float(r["sigma"]),
                           int(r["condition"]), int(r["seed"])) for r in runs]


@dataclass(frozen=True)
class SummaryRow:
    method: str
    sigma: float
    mean_best_mae: float
    std_best_mae: float
    n_conditions: int
    n_runs: int
    mean_final_regret: float

    @property
    def missing(self) -> bool:
        return self.n_runs == 0


def summarize(traces) -> list[SummaryRow]:
    """Best-MAE statistics per (method, sigma).

    Within each condition the runs' best MAEs give a mean and a population
    standard deviation; both are then averaged over conditions.  Runs with
    an empty trace are left out; a cell with none left is reported as
    missing (NaN), never as zero.
    """
    cells = {}
    for t in traces:
        cells.setdefault((t.method, t.sigma), {}).setdefault(t.condition, []).append(t)
    rows = []
    for (method, sigma), by_cond in cells.items():
        means, stds, regrets, n_runs = [], [], [], 0
        for cond in sorted(by_cond):
            best = [t.best_mae for t in by_cond[cond] if len(t.query_index)]
            if not best:
                continue
            # exact arithmetic, so identical runs give a std of exactly 0
            means.append(statistics.fmean(best))
            stds.append(statistics.pstdev(best))
            regrets.extend(t.final_regret for t in by_cond[cond] if len(t.query_index))
            n_runs += len(best)
        if means:
            rows.append(SummaryRow(method, sigma, float(np.mean(means)), float(np.mean(stds)),
                                   len(means), n_runs, float(np.mean(regrets))))
        else:
            rows.append(SummaryRow(method, sigma, math.nan, math.nan, 0, 0, math.nan))
    return rows


def write_summary(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            stats = (("missing",) * 2 if r.missing
                     else (_fmt(r.mean_best_mae), _fmt(r.std_best_mae)))
            w.writerow((r.method, _fmt(r.sigma), *stats, r.n_conditions, r.n_runs,
                        "missing" if r.missing else _fmt(r.mean_final_regret)))


def format_summary(rows) -> str:
    lines = [f"{'method':<8} {'sigma':>6} {'best MAE (in)':>22} {'final regret':>13} {'runs':>5}"]
    for r in rows:
        if r.missing:
            stat, reg = "missing", "missing"
        else:
            stat = f"{r.mean_best_mae:.4f} +- {r.std_best_mae:.4f}"
            reg = f"{r.mean_final_regret:.1f}"
        lines.append(f"{r.method:<8} {r.sigma:>6g} {stat:>22} {reg:>13} {r.n_runs:>5}")
    return "\n".join(lines)
