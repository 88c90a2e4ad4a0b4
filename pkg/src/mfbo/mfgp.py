"""Two-level autoregressive multi-fidelity GP: ``Z_high = rho * Z_low + delta``."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gp
from .gp import GpPosterior, KernelParams

RHO_BOUNDS = (-5.0, 5.0)


@dataclass(frozen=True)
class FidelityDataset:
    X_low: np.ndarray
    y_low: np.ndarray
    X_high: np.ndarray
    y_high: np.ndarray

    def __post_init__(self):
        for name in ("X_low", "X_high"):
            X = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, X.reshape(len(X), -1) if X.ndim < 2 else X)
        for name in ("y_low", "y_high"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if len(self.X_low) != len(self.y_low) or len(self.X_high) != len(self.y_high):
            raise ValueError("inputs and targets differ in length")
        if len(self.y_low) < 1 or len(self.y_high) < 1:
            raise ValueError("both fidelities need at least one observation")
        if self.X_low.shape[1] != self.X_high.shape[1]:
            raise ValueError("dimension mismatch between fidelities")

    @property
    def dim(self) -> int:
        return self.X_low.shape[1]

    @property
    def n_low(self) -> int:
        return len(self.y_low)

    @property
    def n_high(self) -> int:
        return len(self.y_high)

    def add(self, x, y, fidelity: str) -> "FidelityDataset":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        if fidelity == "low":
            return FidelityDataset(np.vstack([self.X_low, x]), np.append(self.y_low, y),
                                   self.X_high, self.y_high)
        if fidelity == "high":
            return FidelityDataset(self.X_low, self.y_low,
                                   np.vstack([self.X_high, x]), np.append(self.y_high, y))
        raise ValueError(f"unknown fidelity {fidelity!r}")

    def nested_mask(self) -> np.ndarray:
        """True for high points whose location is also a low point (exact match)."""
        return np.array([np.any(np.all(self.X_low == x, axis=1)) for x in self.X_high])


@dataclass(frozen=True)
class MfGpPosterior:
    gp_low: GpPosterior
    rho: float
    gp_delta: GpPosterior
    low_at_high: np.ndarray  # mu_low(X_high): the scaled-out low-fidelity values

    @property
    def dim(self) -> int:
        return self.gp_low.dim

    def predict_low(self, x):
        return self.gp_low.predict(x)

    def predict_high(self, x):
        m_low, v_low = self.gp_low.predict(x)
        m_d, v_d = self.gp_delta.predict(x)
        return self.rho * m_low + m_d, self.rho ** 2 * v_low + v_d

    def predict_both(self, x):
        """``(mean_low, var_low, mean_high, var_high)`` sharing the low-GP solve."""
        m_low, v_low = self.gp_low.predict(x)
        m_d, v_d = self.gp_delta.predict(x)
        return m_low, v_low, self.rho * m_low + m_d, self.rho ** 2 * v_low + v_d

    def variance_terms(self, x):
        """Scaled low-fidelity and correction contributions to the high variance."""
        _, v_low = self.gp_low.predict(x)
        _, v_d = self.gp_delta.predict(x)
        return self.rho ** 2 * v_low, v_d


def predict_low(post: MfGpPosterior, x):
    return post.predict_low(x)


def predict_high(post: MfGpPosterior, x):
    return post.predict_high(x)


def _initial_rho(y, m) -> float:
    mc = m - m.mean()
    if len(y) < 2 or not np.dot(mc, mc) > 1e-12 * (1 + np.dot(m, m)):
        return 1.0
    slope = np.dot(mc, y - y.mean()) / np.dot(mc, mc)
    return float(np.clip(slope, *RHO_BOUNDS))


def _impute_low(gp_low: GpPosterior, data: FidelityDataset, m) -> GpPosterior:
    missing = ~data.nested_mask()
    if not missing.any():
        return gp_low
    X = np.vstack([data.X_low, data.X_high[missing]])
    y = np.append(data.y_low, m[missing])
    return gp.condition(X, y, gp_low.params, gp_low.y_mean, gp_low.y_scale,
                        gp_low.log_likelihood, dict(gp_low.diagnostics, imputed=int(missing.sum())))


def fit_correction(X_high, y_high, m, restarts=4, rng=None, init: KernelParams | None = None,
                   rho_init: float | None = None, width=1.0, fallback_scale=1.0):
    """Joint maximum-likelihood ``(rho, delta-kernel)`` for targets ``y_high - rho*m``.

    The correction GP carries a constant mean (the mean of its targets) and a
    fixed output scale, so the centered targets are linear in ``rho``.
    """
    rng = np.random.default_rng(rng)
    X_high = np.asarray(X_high, dtype=float)
    dim = X_high.shape[1]
    s = float(np.std(y_high))
    if len(y_high) < 2 or not s > 1e-12 * max(1.0, abs(float(np.mean(y_high)))):
        s = fallback_scale
    yc = (y_high - y_high.mean()) / s
    mc = (m - m.mean()) / s
    sqd = gp._sqdist(X_high, X_high)
    lo, hi = gp.hyper_bounds(dim, width)
    lo = np.append(lo, RHO_BOUNDS[0])
    hi = np.append(hi, RHO_BOUNDS[1])
    rho0 = _initial_rho(y_high, m) if rho_init is None else rho_init
    theta0 = np.append((init or gp.default_params(dim, width)).to_theta(), rho0)

    def objective(theta):
        v, g, _ = gp.neg_lml_and_grad(theta, sqd, yc, mc)
        return v, g

    theta, val, diag = gp.multistart(objective, theta0, lo, hi, restarts, rng)
    if theta is None:
        raise gp.GPFitError("correction stage: all restarts failed", diag)
    rho = float(theta[-1])
    _, _, rel_j = gp.neg_lml_and_grad(theta, sqd, yc, mc)
    params = KernelParams.from_theta(theta[:-1], jitter=rel_j * np.exp(theta[0]))
    d = y_high - rho * m
    post = gp.condition(X_high, d, params, y_mean=float(d.mean()), y_scale=s,
                        log_likelihood=-val, diagnostics={"restarts": diag})
    return rho, post


def fit_mfgp(data: FidelityDataset, restarts: int = 4, seed=None, rho: float | None = None,
             init_low: KernelParams | None = None, init_delta: KernelParams | None = None,
             rho_init: float | None = None, width=1.0) -> MfGpPosterior:
    """Fit the low-fidelity GP, then ``rho`` and the correction GP.

    High points without a low-fidelity twin get their low value from the
    low-fidelity posterior mean. The low GP is then conditioned on those
    imputed values with its fitted hyperparameters: its mean is unchanged but
    its variance vanishes there, as it does at nested points. The low dataset
    itself is never modified.
    With ``rho`` given, it is held fixed and only the correction kernel is fitted.
    """
    rng = np.random.default_rng(seed)
    gp_low = gp.fit(data.X_low, data.y_low, init_low, restarts, rng, width)
    m, _ = gp_low.predict(data.X_high)
    m = np.atleast_1d(m)
    gp_low = _impute_low(gp_low, data, m)
    if rho is not None:
        gp_delta = gp.fit(data.X_high, data.y_high - rho * m, init_delta, restarts, rng, width)
        return MfGpPosterior(gp_low, float(rho), gp_delta, m)
    fallback = gp.standardize(data.y_low)[1]
    rho_hat, gp_delta = fit_correction(data.X_high, data.y_high, m, restarts, rng, init_delta,
                                       rho_init, width, fallback)
    return MfGpPosterior(gp_low, rho_hat, gp_delta, m)
