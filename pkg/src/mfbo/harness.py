"""Experiment orchestration: configs, seed fans, strategy x beta x ratio sweeps,
summary statistics and CSV output.

Seed rule: run ``i`` of a sweep with master seed ``m`` draws its initial design
from ``SeedSequence(m, spawn_key=(i, 0))`` and its optimizer stream from
``SeedSequence(m, spawn_key=(i, 1))``. Every cell therefore starts seed ``i``
from the same design, and adding seeds never perturbs existing runs.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import STRATEGIES, BetaSchedule, CostWeights, StrategyConfig
from .bo_loop import RunAborted, RunRecord, run
from .objectives import PROBLEMS, make_problem
from .sampling import nested_lhs

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
HIT_RADIUS = 0.05  # unit-cube distance to a unique known minimizer
HIT_REGRET = 1e-2  # fallback when the minimizer is unknown or not unique
PLOT_KINDS = ("regret_curve", "usage_box", "hit_table")


class ConfigError(ValueError):
    pass


def default_init_sizes(dim: int) -> tuple[int, int]:
    """(n_low, n_high) of the initial nested design."""
    return (4, 1) if dim == 1 else (12, 3)


def default_ratio_grid(strategy: str) -> tuple[float, ...]:
    lo, hi = (0.1, 5.0) if strategy == "fidelity_weighted" else (0.02, 1.0)
    return tuple(float(v) for v in np.geomspace(lo, hi, 10))


@dataclass
class ExperimentConfig:
    problem: str = "forrester"
    strategies: tuple = ("proximity",)
    betas: tuple = ("3",)
    ratios: tuple | None = None  # None: default grid per strategy
    seeds: int = 10
    iters: int = 30
    n_low: int | None = None
    n_high: int | None = None
    master_seed: int = 0
    workers: int = 1
    acq_restarts: int = 5
    raw_samples: int = 256
    gp_restarts: int = 2
    out: str | None = None

    def __post_init__(self):
        self.strategies = _as_tuple(self.strategies)
        self.betas = tuple(str(b) for b in _as_tuple(self.betas))
        if self.ratios is not None:
            self.ratios = tuple(float(r) for r in _as_tuple(self.ratios))

    def validate(self) -> "ExperimentConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; known: {sorted(PROBLEMS)}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ConfigError(f"unknown strategy {s!r}; known: {list(STRATEGIES)}")
        if not self.strategies:
            raise ConfigError("no strategies given")
        try:
            self.betas = tuple(BetaSchedule.parse(b).label() for b in self.betas)
        except ValueError as exc:
            raise ConfigError(f"bad beta in {self.betas!r}: {exc}") from None
        if self.ratios is not None and not all(r > 0 for r in self.ratios):
            raise ConfigError("cost ratios must be positive")
        if self.seeds < 1:
            raise ConfigError("seeds must be >= 1")
        if self.iters < 0:
            raise ConfigError("iters must be >= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        n_low, n_high = self.init_sizes()
        if not 1 <= n_high <= n_low:
            raise ConfigError(f"need 1 <= n_high <= n_low, got {n_low}/{n_high}")
        return self

    def init_sizes(self) -> tuple[int, int]:
        dim = make_problem(self.problem).dim
        d_low, d_high = default_init_sizes(dim)
        return (self.n_low or d_low, self.n_high or d_high)

    def ratios_for(self, strategy: str) -> tuple[float, ...]:
        if strategy == "standard_bo":
            return (1.0,)  # cost ratio is irrelevant without a low fidelity
        return self.ratios if self.ratios is not None else default_ratio_grid(strategy)

    def cells(self) -> list[tuple[str, str, float]]:
        return [(s, b, r) for s in self.strategies for b in self.betas for r in self.ratios_for(s)]


def _as_tuple(v):
    if v is None:
        return ()
    if isinstance(v, str):
        return tuple(p.strip() for p in v.split(",") if p.strip())
    if np.isscalar(v):
        return (v,)
    return tuple(v)


def load_config(path) -> ExperimentConfig:
    """Read an ``ExperimentConfig`` from a TOML file (flat table or ``[experiment]``)."""
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = raw.get("experiment", raw)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    try:
        return ExperimentConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def run_seeds(master_seed: int, index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(design rng, optimizer rng) for run ``index``."""
    mk = lambda k: np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index, k)))
    return mk(0), mk(1)


@dataclass
class RunResult:
    cell: tuple
    index: int
    record: RunRecord
    counts: dict


def run_task(task) -> RunResult:
    """One run; ``task`` is ``(config, (strategy, beta, ratio), seed index)``."""
    cfg, cell, index = task
    strategy, beta, ratio = cell
    problem = make_problem(cfg.problem)
    n_low, n_high = cfg.init_sizes()
    design_rng, run_rng = run_seeds(cfg.master_seed, index)
    design = nested_lhs(problem.domain, n_low, n_high, design_rng)
    scfg = StrategyConfig(strategy, BetaSchedule.parse(beta), CostWeights.from_ratio(ratio),
                          cfg.iters, cfg.acq_restarts, cfg.raw_samples, cfg.gp_restarts)
    try:
        record = run(problem, scfg, design, seed=run_rng)
    except RunAborted as exc:
        log.warning("run %s seed %d aborted: %s", cell, index, exc)
        record = exc.record
    record.seed = index
    record.ratio = float(ratio)
    return RunResult(cell, index, record, dict(problem.counts))


def is_hit(record: RunRecord, problem) -> bool:
    x_star = problem.known_optimum[0] if problem.known_optimum else None
    if record.x_best is None or not np.all(np.isfinite(record.x_best)):
        return False
    if x_star is not None:
        u = problem.domain.to_unit(record.x_best) - problem.domain.to_unit(x_star)
        return bool(np.linalg.norm(u) < HIT_RADIUS)
    return record.regret is not None and record.regret < HIT_REGRET


@dataclass
class CellSummary:
    strategy: str
    beta: str
    ratio: float
    n_runs: int
    n_failed: int
    hit_rate: float
    regret: np.ndarray  # final regret per run (nan if no optimum known)
    usage: np.ndarray  # BO-acquired HF fraction per run
    curves: np.ndarray  # (runs, T+1) incumbent per iteration, nan-padded

    def usage_quartiles(self) -> np.ndarray:
        u = self.usage[np.isfinite(self.usage)]
        return np.quantile(u, [0, 0.25, 0.5, 0.75, 1.0]) if u.size else np.full(5, np.nan)


@dataclass
class SweepSummary:
    config: ExperimentConfig
    cells: list = field(default_factory=list)
    results: list = field(default_factory=list, repr=False)

    @property
    def n_failed(self) -> int:
        return sum(c.n_failed for c in self.cells)

    def cell(self, strategy, beta=None, ratio=None) -> CellSummary:
        for c in self.cells:
            if c.strategy == strategy and (beta is None or c.beta == str(beta)) and \
                    (ratio is None or np.isclose(c.ratio, ratio)):
                return c
        raise KeyError((strategy, beta, ratio))


def usage_stats(records) -> dict:
    """HF-usage distribution over BO-acquired evaluations of a set of runs."""
    u = np.array([r.hf_usage for r in records], dtype=float)
    if u.size == 0:
        raise ValueError("no records")
    f = u[np.isfinite(u)]
    q = np.quantile(f, [0, 0.25, 0.5, 0.75, 1.0]) if f.size else np.full(5, np.nan)
    return {"mean": float(np.mean(f)) if f.size else np.nan, "min": q[0], "q25": q[1],
            "median": q[2], "q75": q[3], "max": q[4], "values": u}


def summarize_cell(cell, results, problem, iters) -> CellSummary:
    recs = [r.record for r in results]
    curves = np.full((len(recs), iters + 1), np.nan)
    for i, rec in enumerate(recs):
        c = rec.best_curve()[: iters + 1]
        curves[i, : len(c)] = c
    regret = np.array([np.nan if r.regret is None else r.regret for r in recs])
    hits = [is_hit(r, problem) for r in recs]
    return CellSummary(cell[0], cell[1], float(cell[2]), len(recs),
                       sum(r.error is not None for r in recs), float(np.mean(hits)),
                       regret, np.array([r.hf_usage for r in recs], dtype=float), curves)


def run_sweep(cfg: ExperimentConfig, out: str | Path | None = None) -> SweepSummary:
    """Run every (cell, seed) pair and, given ``out``, write the CSV files there."""
    cfg.validate()
    tasks = [(cfg, cell, i) for cell in cfg.cells() for i in range(cfg.seeds)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(run_task, tasks))
    else:
        results = [run_task(t) for t in tasks]
    problem = make_problem(cfg.problem)
    summary = SweepSummary(cfg, results=results)
    for cell in cfg.cells():
        cell_results = [r for r in results if r.cell == cell]
        summary.cells.append(summarize_cell(cell, cell_results, problem, cfg.iters))
    out = out if out is not None else cfg.out
    if out is not None:
        write_outputs(summary, out)
    return summary


# -- CSV output -------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def run_rows(summary: SweepSummary):
    dim = make_problem(summary.config.problem).dim
    header = ["seed", "iter", "strategy", "beta", "lambda_ratio", "fidelity",
              *[f"x{k}" for k in range(dim)], "y", "best_hf", "n_low", "n_high", "cum_cost"]
    rows = []
    for res in summary.results:
        rec = res.record
        for e in rec.entries:
            rows.append([res.index, e.t, rec.strategy, rec.beta, rec.ratio, e.fidelity,
                         *np.asarray(e.x, dtype=float).ravel(), e.y, e.best_hf,
                         e.n_low, e.n_high, e.cum_cost])
    return header, rows


def summary_rows(summary: SweepSummary):
    header = ["strategy", "beta", "lambda_ratio", "n_runs", "n_failed", "hit_rate",
              "mean_regret", "median_regret", "q25_regret", "q75_regret",
              "mean_hf_usage", "min_usage", "q25_usage", "median_usage", "q75_usage", "max_usage"]
    rows = []
    for c in summary.cells:
        r = c.regret[np.isfinite(c.regret)]
        rq = np.quantile(r, [0.5, 0.25, 0.75]) if r.size else np.full(3, np.nan)
        uq = c.usage_quartiles()
        rows.append([c.strategy, c.beta, c.ratio, c.n_runs, c.n_failed, c.hit_rate,
                     float(np.mean(r)) if r.size else np.nan, *rq,
                     float(np.nanmean(c.usage)) if np.isfinite(c.usage).any() else np.nan, *uq])
    return header, rows


def _running_usage(rec: RunRecord, iters: int) -> np.ndarray:
    out = np.full(iters + 1, np.nan)
    n_hf = n = 0
    for e in rec.entries[: iters + 1]:
        if not e.diagnostics.get("final") and e.fidelity in ("low", "high"):
            n += 1
            n_hf += e.fidelity == "high"
        out[e.t - 1] = n_hf / n if n else np.nan
    return out


def emit_plot_data(summary: SweepSummary, kind: str):
    """``(header, rows)`` of plot-ready data; ``kind`` is one of ``PLOT_KINDS``."""
    if kind == "regret_curve":
        header = ["strategy", "beta", "lambda_ratio", "iter", "mean_best", "q25", "q75",
                  "mean_hf_usage"]
        rows = []
        iters = summary.config.iters
        for c in summary.cells:
            recs = [r.record for r in summary.results if r.cell == (c.strategy, c.beta, c.ratio)]
            usage = np.array([_running_usage(r, iters) for r in recs])
            for t in range(c.curves.shape[1]):
                col = c.curves[:, t]
                col = col[np.isfinite(col)]
                if not col.size:
                    continue
                u = usage[:, t][np.isfinite(usage[:, t])] if len(usage) else np.array([])
                rows.append([c.strategy, c.beta, c.ratio, t + 1, float(np.mean(col)),
                             *np.quantile(col, [0.25, 0.75]),
                             float(np.mean(u)) if u.size else np.nan])
        return header, rows
    if kind == "usage_box":
        header = ["strategy", "beta", "lambda_ratio", "min", "q25", "median", "q75", "max", "mean"]
        rows = [[c.strategy, c.beta, c.ratio, *c.usage_quartiles(),
                 float(np.nanmean(c.usage)) if np.isfinite(c.usage).any() else np.nan]
                for c in summary.cells]
        return header, rows
    if kind == "hit_table":
        # runs are pooled over the ratio grid of each (strategy, beta)
        betas = list(summary.config.betas)
        header = ["strategy", *[f"beta={b}" for b in betas]]
        rows = []
        for s in summary.config.strategies:
            row = [s]
            for b in betas:
                cells = [c for c in summary.cells if c.strategy == s and c.beta == b]
                n = sum(c.n_runs for c in cells)
                row.append(sum(c.hit_rate * c.n_runs for c in cells) / n if n else np.nan)
            rows.append(row)
        return header, rows
    raise ValueError(f"unknown plot kind {kind!r}; known: {PLOT_KINDS}")


def write_outputs(summary: SweepSummary, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "runs.csv", *run_rows(summary))
    _write_csv(out / "summary.csv", *summary_rows(summary))
    for kind in PLOT_KINDS:
        _write_csv(out / f"{kind}.csv", *emit_plot_data(summary, kind))
    return out


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# -- CLI --------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mfbo", description="Multi-fidelity Bayesian optimization experiments.")
    ap.add_argument("--version", action="version", version=f"mfbo {__version__}")
    ap.add_argument("--list-problems", action="store_true", help="print problem names and exit")
    sub = ap.add_subparsers(dest="command")
    r = sub.add_parser("run", help="run a strategy x beta x cost-ratio sweep")
    r.add_argument("--config", help="TOML file with ExperimentConfig fields")
    r.add_argument("--problem")
    r.add_argument("--strategy", help="comma-separated strategies")
    r.add_argument("--beta", help="comma-separated values, 'adaptive' allowed")
    r.add_argument("--cost-ratio", help="comma-separated cost ratios (default: per-strategy grid)")
    r.add_argument("--iters", type=int)
    r.add_argument("--seeds", type=int)
    r.add_argument("--master-seed", type=int)
    r.add_argument("--n-low", type=int)
    r.add_argument("--n-high", type=int)
    r.add_argument("--workers", type=int)
    r.add_argument("--out")
    r.add_argument("-v", "--verbose", action="store_true")
    return ap


_CLI_FIELDS = {"problem": "problem", "strategy": "strategies", "beta": "betas",
               "cost_ratio": "ratios", "iters": "iters", "seeds": "seeds",
               "master_seed": "master_seed", "n_low": "n_low", "n_high": "n_high",
               "workers": "workers", "out": "out"}


def config_from_args(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {dst: getattr(args, src) for src, dst in _CLI_FIELDS.items()
                 if getattr(args, src) is not None}
    try:
        if "ratios" in overrides:
            overrides["ratios"] = tuple(float(v) for v in _as_tuple(overrides["ratios"]))
        cfg = replace(cfg, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_problems:
        for name in sorted(PROBLEMS):
            p = make_problem(name)
            print(f"{name}\tdim={p.dim}\tlower={p.domain.lower.tolist()}\tupper={p.domain.upper.tolist()}")
        return EXIT_OK
    if args.command != "run":
        ap.print_help(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_sweep(cfg)
    except Exception as exc:  # noqa: BLE001 - any failure inside a sweep is a runtime failure
        print(f"runtime failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME
    for c in summary.cells:
        reg = np.nanmedian(c.regret) if np.isfinite(c.regret).any() else np.nan
        print(f"{c.strategy:18s} beta={c.beta:8s} ratio={c.ratio:<8.4g} hit={c.hit_rate:.3f} "
              f"usage={np.nanmean(c.usage):.3f} median_regret={reg:.4g} failed={c.n_failed}")
    if cfg.out:
        print(f"wrote {Path(cfg.out) / 'runs.csv'} and summaries")
    return EXIT_RUNTIME if summary.n_failed else EXIT_OK
