"""The multi-fidelity optimization loop.

Each iteration refits the surrogate on all data, asks the strategy for a
location and fidelity, evaluates, and appends. After the budget a single
exploitative high-fidelity evaluation is spent at the minimizer of the
high-fidelity posterior mean, unless that is the incumbent already.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .acquisition import PROPOSERS, StrategyConfig, local_optima, propose_standard
from .mfgp import FidelityDataset, MfGpPosterior, fit_mfgp
from .objectives import Problem
from .sampling import Design

log = logging.getLogger(__name__)

FINAL_TOL = 1e-6


class RunAborted(RuntimeError):
    def __init__(self, msg, record=None):
        super().__init__(msg)
        self.record = record


@dataclass
class IterationLog:
    t: int
    x: np.ndarray  # domain coordinates
    fidelity: str  # "low", "high", or "none" (finalization skipped)
    y: float  # canonical (minimization) value, nan when not evaluated
    best_hf: float
    n_low: int
    n_high: int
    cum_cost: float
    diagnostics: dict = field(default_factory=dict, repr=False)


@dataclass
class RunRecord:
    problem: str
    strategy: str
    beta: str
    ratio: float
    seed: int
    n_init_low: int
    n_init_high: int
    entries: list = field(default_factory=list)
    x_best: np.ndarray | None = None
    best_value: float = np.nan  # problem's own sense
    best_canonical: float = np.nan
    regret: float | None = None
    error: str | None = None

    @property
    def bo_entries(self):
        return [e for e in self.entries if e.t <= self.budget]

    @property
    def budget(self) -> int:
        return sum(1 for e in self.entries if not e.diagnostics.get("final"))

    @property
    def hf_usage(self) -> float:
        """High-fidelity fraction of the BO-acquired evaluations (no init, no finalization)."""
        evals = [e for e in self.bo_entries if e.fidelity in ("low", "high")]
        if not evals:
            return float("nan")
        return sum(e.fidelity == "high" for e in evals) / len(evals)

    @property
    def n_high_total(self) -> int:
        return self.entries[-1].n_high if self.entries else self.n_init_high

    def best_curve(self) -> np.ndarray:
        return np.array([e.best_hf for e in self.entries])


def evaluate_design(problem: Problem, design: Design, strategy: str = "mf"):
    """Evaluate an initial design; ``standard_bo`` uses only its high points."""
    U = design.unit
    X = design.points
    hi = np.flatnonzero(design.high)
    y_high = np.array([problem.evaluate(X[i], "high") for i in hi])
    if strategy == "standard_bo":
        return None, None, U[hi], y_high
    y_low = np.array([problem.evaluate(x, "low") for x in X])
    return U, y_low, U[hi], y_high


def _fit(data: FidelityDataset, prev: MfGpPosterior | None, restarts, rng) -> MfGpPosterior:
    if prev is None:
        return fit_mfgp(data, restarts=restarts, seed=rng)
    return fit_mfgp(data, restarts=restarts, seed=rng, init_low=prev.gp_low.params,
                    init_delta=prev.gp_delta.params, rho_init=prev.rho)


def finalize(post, record: RunRecord, problem: Problem, X_high, y_high, weights, rng,
             restarts: int = 5, raw_samples: int = 256):
    """Spend one high-fidelity evaluation at argmin of the high posterior mean
    unless it coincides with the incumbent. Returns updated ``(X_high, y_high)``."""
    dim = problem.dim
    i_best = int(np.argmin(y_high))
    x_inc = X_high[i_best]
    predict = post.predict_high if isinstance(post, MfGpPosterior) else post.predict

    def neg_mean(X):
        return -predict(X)[0]

    pts, _ = local_optima(neg_mean, dim, restarts, rng, x_inc, raw_samples)
    x_m = pts[0]
    last = record.entries[-1] if record.entries else None
    n_low = last.n_low if last else record.n_init_low
    n_high = last.n_high if last else record.n_init_high
    t = (last.t if last else 0) + 1
    if np.max(np.abs(x_m - x_inc)) > FINAL_TOL:
        y = problem.evaluate(problem.domain.from_unit(x_m), "high")
        X_high = np.vstack([X_high, x_m])
        y_high = np.append(y_high, y)
        n_high += 1
        fid = "high"
    else:
        x_m, y, fid = x_inc, np.nan, "none"
    cost = weights.lam_low * n_low + weights.lam_high * n_high
    record.entries.append(IterationLog(t, problem.domain.from_unit(x_m), fid, float(y),
                                       float(np.min(y_high)), n_low, n_high, cost,
                                       {"final": True}))
    return X_high, y_high


def _close(record: RunRecord, problem: Problem, X_high, y_high):
    i = int(np.argmin(y_high))
    record.x_best = problem.domain.from_unit(X_high[i])
    record.best_canonical = float(y_high[i])
    record.best_value = problem.sign * record.best_canonical
    if problem.f_star is not None:
        record.regret = regret(record, problem)


def run(problem: Problem, strategy: StrategyConfig, init: Design, T: int | None = None,
        seed=0, finalize_run: bool = True) -> RunRecord:
    """Optimize ``problem`` from the initial design for ``T`` iterations."""
    T = strategy.budget if T is None else T
    if T < 0:
        raise ValueError("budget must be non-negative")
    if init.n_high < 1:
        raise ValueError("initial design needs at least one high-fidelity point")
    rng = np.random.default_rng(seed)
    name = strategy.strategy
    record = RunRecord(problem.name, name, strategy.beta.label(), strategy.weights.ratio,
                       int(seed) if np.isscalar(seed) else -1, 0, 0)
    w = strategy.weights
    if name == "standard_bo":
        return _run_standard(problem, strategy, init, T, rng, record, finalize_run)

    U, y_low, Uh, y_high = evaluate_design(problem, init)
    data = FidelityDataset(U, y_low, Uh, y_high)
    record.n_init_low, record.n_init_high = data.n_low, data.n_high
    propose = PROPOSERS[name]
    post = None
    for t in range(1, T + 1):
        try:
            post = _fit(data, post, strategy.gp_restarts, rng)
            choice = propose(post, data, strategy, t, rng)
            y = problem.evaluate(problem.domain.from_unit(choice.x), choice.fidelity)
        except Exception as exc:
            record.error = f"iteration {t}: {exc!r}"
            _close(record, problem, data.X_high, data.y_high)
            raise RunAborted(record.error, record) from exc
        data = data.add(choice.x, y, choice.fidelity)
        diag = dict(choice.diagnostics, rho=post.rho)
        record.entries.append(IterationLog(
            t, problem.domain.from_unit(choice.x), choice.fidelity, y, float(np.min(data.y_high)),
            data.n_low, data.n_high, w.lam_low * data.n_low + w.lam_high * data.n_high, diag))
    X_high, y_high = data.X_high, data.y_high
    if finalize_run:
        post = _fit(data, post, strategy.gp_restarts, rng)
        X_high, y_high = finalize(post, record, problem, X_high, y_high, w, rng,
                                  strategy.acq_restarts, strategy.raw_samples)
    _close(record, problem, X_high, y_high)
    return record


def _run_standard(problem, strategy, init, T, rng, record, finalize_run):
    _, _, X, y = evaluate_design(problem, init, "standard_bo")
    record.n_init_low, record.n_init_high = 0, len(y)
    w = strategy.weights
    post = None
    for t in range(1, T + 1):
        try:
            post = gp.fit(X, y, None if post is None else post.params, strategy.gp_restarts, rng)
            choice = propose_standard(post, X, y, strategy, t, rng)
            val = problem.evaluate(problem.domain.from_unit(choice.x), "high")
        except Exception as exc:
            record.error = f"iteration {t}: {exc!r}"
            _close(record, problem, X, y)
            raise RunAborted(record.error, record) from exc
        X = np.vstack([X, choice.x])
        y = np.append(y, val)
        record.entries.append(IterationLog(t, problem.domain.from_unit(choice.x), "high", val,
                                           float(np.min(y)), 0, len(y), w.lam_high * len(y),
                                           dict(choice.diagnostics)))
    if finalize_run:
        post = gp.fit(X, y, None if post is None else post.params, strategy.gp_restarts, rng)
        X, y = finalize(post, record, problem, X, y, w, rng, strategy.acq_restarts,
                        strategy.raw_samples)
    _close(record, problem, X, y)
    return record


def regret(record: RunRecord, problem: Problem) -> float:
    if problem.f_star is None:
        raise ValueError(f"problem {problem.name!r} has no known optimum")
    return abs(record.best_canonical - problem.f_star)
