"""Acquisition functions and the multi-fidelity proposal strategies.

Everything here works in unit-cube coordinates and in the minimization
convention; UCB-type bounds are formed on the negated objective.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr

from .gp import GpPosterior
from .mfgp import FidelityDataset, MfGpPosterior
from .sampling import lhs, unit_cube

STRATEGIES = ("fidelity_weighted", "mf_ucb", "proximity", "standard_bo")


class AcquisitionError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or []


# -- base acquisitions ----------------------------------------------------------------

def ucb(mean, sd, beta):
    return mean + np.sqrt(beta) * sd


def expected_improvement(mean, sd, f_star):
    return weighted_ei(mean, sd, f_star, 1.0)


def weighted_ei(mean, sd, f_star, beta):
    """``(f* - mu) Phi(z) + beta sd phi(z)``, ``z = (f* - mu)/sd``; minimization."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    imp = f_star - mean
    safe = np.where(sd > 0, sd, 1.0)
    with np.errstate(over="ignore"):  # z*z -> inf for subnormal sd; exp(-inf) = 0 is the limit
        z = imp / safe
        val = imp * ndtr(z) + beta * sd * np.exp(-0.5 * z * z) / np.sqrt(2 * np.pi)
    out = np.where(sd > 0, val, np.maximum(imp, 0.0))
    return float(out) if out.ndim == 0 else out


def adaptive_beta(d: int, t: int) -> float:
    """``sqrt(0.2 d ln 2t)``."""
    if d < 1 or t < 1:
        raise ValueError("need d >= 1 and t >= 1")
    return float(np.sqrt(0.2 * d * np.log(2 * t)))


@dataclass(frozen=True)
class BetaSchedule:
    mode: str = "fixed"
    value: float = 3.0

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ValueError(f"unknown beta mode {self.mode!r}")
        if self.mode == "fixed" and self.value < 0:
            raise ValueError("fixed beta must be non-negative")

    def __call__(self, t: int, d: int) -> float:
        return self.value if self.mode == "fixed" else adaptive_beta(d, t)

    @classmethod
    def parse(cls, value) -> "BetaSchedule":
        if isinstance(value, BetaSchedule):
            return value
        if isinstance(value, str) and value.strip().lower() == "adaptive":
            return cls("adaptive", 0.0)
        return cls("fixed", float(value))

    def label(self) -> str:
        return "adaptive" if self.mode == "adaptive" else f"{self.value:g}"


@dataclass(frozen=True)
class CostWeights:
    lam_low: float = 0.2
    lam_high: float = 1.0

    def __post_init__(self):
        if not (self.lam_low > 0 and self.lam_high > 0):
            raise ValueError("cost weights must be positive")

    @property
    def ratio(self) -> float:
        return self.lam_low / self.lam_high

    @classmethod
    def from_ratio(cls, ratio: float) -> "CostWeights":
        return cls(float(ratio), 1.0)


def cost_penalty(weights: CostWeights, n_low: int, n_high: int):
    """``(C_low, C_high)`` for taking one more evaluation at each fidelity."""
    r = weights.ratio
    return r * (n_low + 1) + n_high, r * n_low + (n_high + 1)


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "proximity"
    beta: BetaSchedule = BetaSchedule()
    weights: CostWeights = CostWeights()
    budget: int = 30
    acq_restarts: int = 5
    raw_samples: int = 256
    gp_restarts: int = 2

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; known: {STRATEGIES}")
        if self.budget < 0:
            raise ValueError("budget must be non-negative")


@dataclass
class FidelityChoice:
    x: np.ndarray
    fidelity: str
    diagnostics: dict = field(default_factory=dict)


# -- acquisition maximization ----------------------------------------------------------

FD_STEP = 1e-7


def local_optima(f_acq, dim: int, restarts: int = 5, seed=None, incumbent=None,
                 raw_samples: int = 256):
    """Multi-start L-BFGS-B ascent of a vectorized acquisition on the unit cube.

    Starts are the ``restarts`` best points of a Latin hypercube screen of
    ``raw_samples`` points plus ``incumbent``. Returns ``(points, values)``
    sorted by value (descending; ties keep start order).
    """
    rng = np.random.default_rng(seed)
    raw = lhs(unit_cube(dim), max(raw_samples, restarts, 1), rng).unit
    raw_vals = np.asarray(f_acq(raw), dtype=float)
    order = np.argsort(-np.where(np.isfinite(raw_vals), raw_vals, -np.inf), kind="stable")
    starts = [raw[i] for i in order[:max(restarts, 1)]]
    if incumbent is not None:
        starts.append(np.clip(np.asarray(incumbent, dtype=float).ravel(), 0.0, 1.0))

    def neg(x):
        return -float(f_acq(x.reshape(1, -1))[0])

    eye = np.eye(dim)

    def neg_and_grad(x):
        # forward differences in one batched call, stepping inward at the upper bound
        h = np.where(x + FD_STEP <= 1.0, FD_STEP, -FD_STEP)
        v = -np.asarray(f_acq(np.vstack([x, x + h[:, None] * eye])), dtype=float)
        return v[0], (v[1:] - v[0]) / h

    pts, vals, diag = [], [], []
    for k, x0 in enumerate(starts):
        try:
            res = minimize(neg_and_grad, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim,
                           options={"maxiter": 100})
            x, v = np.clip(res.x, 0.0, 1.0), -float(res.fun)
        except (ValueError, FloatingPointError) as exc:
            diag.append({"start": k, "error": repr(exc)})
            continue
        v0 = -neg(x0)
        if not np.isfinite(v) or v0 > v:
            x, v = x0, v0
        if np.isfinite(v):
            pts.append(x)
            vals.append(v)
    if not pts:
        raise AcquisitionError("all acquisition starts failed", diag)
    # raw screen points back up the local results for the duplicate guard
    for i in order[:4 * max(restarts, 1)]:
        if np.isfinite(raw_vals[i]):
            pts.append(raw[i])
            vals.append(float(raw_vals[i]))
    vals = np.array(vals)
    rank = np.argsort(-vals, kind="stable")
    return np.array(pts)[rank], vals[rank]


def maximize_acquisition(f_acq, dim: int, restarts: int = 5, seed=None, incumbent=None,
                         raw_samples: int = 256) -> np.ndarray:
    pts, _ = local_optima(f_acq, dim, restarts, seed, incumbent, raw_samples)
    return pts[0]


def _is_duplicate(x, X, tol=1e-9) -> bool:
    X = np.asarray(X)
    return len(X) > 0 and bool(np.min(np.max(np.abs(X - x), axis=1)) <= tol)


def _first_admissible(pts, decide, data: FidelityDataset):
    """First ranked candidate whose chosen fidelity does not duplicate a point."""
    for rank, x in enumerate(pts):
        fid, info = decide(x)
        X = data.X_low if fid == "low" else data.X_high
        if not _is_duplicate(x, X):
            info["candidate_rank"] = rank
            return x, fid, info
    raise AcquisitionError("every candidate duplicates an existing design point")


def _incumbent_x(data: FidelityDataset):
    return data.X_high[int(np.argmin(data.y_high))]


# -- multi-fidelity strategies ---------------------------------------------------------

def propose_fidelity_weighted(post: MfGpPosterior, data: FidelityDataset, cfg: StrategyConfig,
                              t: int = 1, seed=None) -> FidelityChoice:
    """Cost-penalized weighted EI maximized separately at each fidelity."""
    rng = np.random.default_rng(seed)
    beta = cfg.beta(t, data.dim)
    n_iter = max(cfg.budget, 1)
    c_low, c_high = cost_penalty(cfg.weights, data.n_low, data.n_high)
    f_low, f_high = float(np.min(data.y_low)), float(np.min(data.y_high))

    def acq_low(X):
        m, v = post.predict_low(X)
        return weighted_ei(m, np.sqrt(v), f_low, beta) - c_low / n_iter

    def acq_high(X):
        m, v = post.predict_high(X)
        return weighted_ei(m, np.sqrt(v), f_high, beta) - c_high / n_iter

    inc_low = data.X_low[int(np.argmin(data.y_low))]
    p_low, v_low = local_optima(acq_low, data.dim, cfg.acq_restarts, rng, inc_low, cfg.raw_samples)
    p_high, v_high = local_optima(acq_high, data.dim, cfg.acq_restarts, rng, _incumbent_x(data),
                                  cfg.raw_samples)
    # merge both ranked lists; ties favour high fidelity
    cands = [(v, 1, i, "high", x) for i, (x, v) in enumerate(zip(p_high, v_high))]
    cands += [(v, 0, i, "low", x) for i, (x, v) in enumerate(zip(p_low, v_low))]
    cands.sort(key=lambda c: (-c[0], -c[1], c[2]))
    for v, _, _, fid, x in cands:
        X = data.X_low if fid == "low" else data.X_high
        if not _is_duplicate(x, X):
            break
    else:
        raise AcquisitionError("every candidate duplicates an existing design point")
    diag = {"acq_low": float(v_low[0]), "acq_high": float(v_high[0]), "value": float(v),
            "c_low": c_low, "c_high": c_high, "beta": beta}
    return FidelityChoice(np.asarray(x, dtype=float), fid, diag)


def propose_mf_ucb(post: MfGpPosterior, data: FidelityDataset, cfg: StrategyConfig,
                   t: int = 1, seed=None) -> FidelityChoice:
    """Maximize ``min(alpha_low, alpha_high)``; pick the fidelity by the gamma threshold."""
    rng = np.random.default_rng(seed)
    beta = cfg.beta(t, data.dim)
    sb = np.sqrt(beta)
    floor = 1e-6 * post.gp_low.y_scale

    def combined(X):
        ml, vl, mh, vh = post.predict_both(X)
        zeta = np.abs(mh - ml)
        a_low = -ml + sb * np.sqrt(vl) + zeta
        a_high = -mh + sb * np.sqrt(vh)
        return np.minimum(a_low, a_high)

    pts, vals = local_optima(combined, data.dim, cfg.acq_restarts, rng, _incumbent_x(data),
                             cfg.raw_samples)

    def decide(x):
        ml, vl, mh, _ = post.predict_both(x.reshape(1, -1))
        zeta = float(abs(mh[0] - ml[0]))
        gamma = zeta * np.sqrt(1.0 / cfg.weights.ratio)
        spread = float(sb * np.sqrt(vl[0]))
        if zeta < floor:
            fid = "high"
        else:
            fid = "low" if spread > gamma else "high"
        return fid, {"zeta": zeta, "gamma": float(gamma), "beta": beta, "sd_term": spread}

    x, fid, info = _first_admissible(pts, decide, data)
    return FidelityChoice(np.asarray(x, dtype=float), fid, info)


def nearest_low_distance(x, X_low) -> float:
    return float(np.min(np.linalg.norm(np.asarray(X_low) - np.asarray(x), axis=1)))


def proximity_fidelity(x, X_low, ratio: float) -> str:
    """Low fidelity iff no low-fidelity point lies within ``ratio`` of ``x``."""
    return "low" if nearest_low_distance(x, X_low) > ratio else "high"


def propose_proximity(post: MfGpPosterior, data: FidelityDataset, cfg: StrategyConfig,
                      t: int = 1, seed=None) -> FidelityChoice:
    """Weighted EI on the high-fidelity posterior; fidelity from low-data proximity."""
    rng = np.random.default_rng(seed)
    beta = cfg.beta(t, data.dim)
    f_high = float(np.min(data.y_high))

    def acq(X):
        m, v = post.predict_high(X)
        return weighted_ei(m, np.sqrt(v), f_high, beta)

    pts, vals = local_optima(acq, data.dim, cfg.acq_restarts, rng, _incumbent_x(data),
                             cfg.raw_samples)

    def decide(x):
        dist = nearest_low_distance(x, data.X_low)
        return ("low" if dist > cfg.weights.ratio else "high"), {"distance": dist, "beta": beta}

    x, fid, info = _first_admissible(pts, decide, data)
    info["value"] = float(acq(x.reshape(1, -1))[0])
    return FidelityChoice(np.asarray(x, dtype=float), fid, info)


def propose_standard(post: GpPosterior, X_high, y_high, cfg: StrategyConfig, t: int = 1,
                     seed=None) -> FidelityChoice:
    """Single-fidelity weighted EI baseline."""
    rng = np.random.default_rng(seed)
    X_high = np.asarray(X_high)
    dim = X_high.shape[1]
    beta = cfg.beta(t, dim)
    f_best = float(np.min(y_high))

    def acq(X):
        m, v = post.predict(X)
        return weighted_ei(m, np.sqrt(v), f_best, beta)

    pts, vals = local_optima(acq, dim, cfg.acq_restarts, rng, X_high[int(np.argmin(y_high))],
                             cfg.raw_samples)
    for x in pts:
        if not _is_duplicate(x, X_high):
            return FidelityChoice(np.asarray(x, dtype=float), "high", {"beta": beta})
    raise AcquisitionError("every candidate duplicates an existing design point")


PROPOSERS = {
    "fidelity_weighted": propose_fidelity_weighted,
    "mf_ucb": propose_mf_ucb,
    "proximity": propose_proximity,
}
