"""Noiseless Gaussian-process regression with an anisotropic squared-exponential
kernel, fitted by multi-restart L-BFGS-B on the log marginal likelihood.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular, LinAlgError
from scipy.optimize import minimize

log = logging.getLogger(__name__)

LOG_2PI = np.log(2 * np.pi)
REL_JITTERS = (1e-10, 1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4)


class FactorizationError(LinAlgError):
    """Covariance matrix not positive definite even after jitter escalation."""


class GPFitError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or []


@dataclass(frozen=True)
class KernelParams:
    signal_variance: float
    lengthscales: np.ndarray
    jitter: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be positive")
        if not np.all(ls > 0):
            raise ValueError("lengthscales must be positive")
        if self.jitter < 0:
            raise ValueError("jitter must be non-negative")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "jitter", float(self.jitter))

    @property
    def dim(self) -> int:
        return self.lengthscales.size

    def to_theta(self) -> np.ndarray:
        return np.concatenate([[np.log(self.signal_variance)], np.log(self.lengthscales)])

    @classmethod
    def from_theta(cls, theta, jitter=0.0) -> "KernelParams":
        return cls(float(np.exp(theta[0])), np.exp(theta[1:]), jitter)


def _as_points(X, dim=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 0:
        return X.reshape(1, 1)
    if X.ndim == 1:
        if dim is None or dim == 1:
            return X.reshape(-1, 1)
        return X.reshape(1, -1)
    return X


def _sqdist(X1, X2) -> np.ndarray:
    """Per-dimension squared differences, shape (d, n1, n2)."""
    return (X1.T[:, :, None] - X2.T[:, None, :]) ** 2


def kernel_matrix(X1, X2, params: KernelParams) -> np.ndarray:
    X1 = _as_points(X1, params.dim)
    X2 = _as_points(X2, params.dim)
    r2 = np.tensordot(params.lengthscales ** -2, _sqdist(X1, X2), axes=1)
    return params.signal_variance * np.exp(-0.5 * r2)


def kernel(x, x2, params: KernelParams) -> float:
    """Squared-exponential covariance between two points."""
    return float(kernel_matrix(x, x2, params)[0, 0])


def _cholesky_escalating(R, jitter0, cap):
    """Lower Cholesky of ``R + jitter*I``; jitter grows x10 from ``jitter0`` to ``cap``."""
    n = R.shape[0]
    j = jitter0
    while True:
        try:
            return cholesky(R + j * np.eye(n), lower=True, check_finite=False), j
        except LinAlgError:
            pass
        if j >= cap:
            raise FactorizationError(f"covariance not positive definite with jitter {j:.1e}")
        j = cap if j == 0 else min(j * 10, cap)


def log_marginal_likelihood(X, y, params: KernelParams) -> float:
    """``-1/2 log|K| - 1/2 y^T K^-1 y - N/2 log 2pi`` for ``K = k(X, X) + jitter I``."""
    X = _as_points(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    K = kernel_matrix(X, X, params)
    L, _ = _cholesky_escalating(K, params.jitter, max(params.jitter, 1e-4 * params.signal_variance))
    a = cho_solve((L, True), y, check_finite=False)
    return float(-np.sum(np.log(np.diag(L))) - 0.5 * y @ a - 0.5 * len(y) * LOG_2PI)


def neg_lml_and_grad(theta, sqdist, y, m=None):
    """Negative LML and its gradient in log-parameters.

    ``theta = [log sf2, log l_1..l_d]`` and, when a regressor ``m`` is given,
    a trailing linear coefficient ``rho`` so that the targets are ``y - rho*m``.
    Returns ``(value, grad, rel_jitter)``.
    """
    d = sqdist.shape[0]
    sf2 = np.exp(theta[0])
    inv_l2 = np.exp(-2.0 * theta[1:1 + d])
    r = y if m is None else y - theta[1 + d] * m
    n = len(r)
    scaled = sqdist * inv_l2[:, None, None]
    R = np.exp(-0.5 * scaled.sum(axis=0))
    try:
        L, j = _cholesky_escalating(R, REL_JITTERS[0], REL_JITTERS[-1])
    except FactorizationError:
        return 1e25, np.zeros_like(theta), np.nan
    a = cho_solve((L, True), r, check_finite=False) / sf2
    val = 0.5 * r @ a + np.sum(np.log(np.diag(L))) + 0.5 * n * theta[0] + 0.5 * n * LOG_2PI
    Kinv = cho_solve((L, True), np.eye(n), check_finite=False) / sf2
    W = np.outer(a, a) - Kinv
    K = sf2 * (R + j * np.eye(n))
    grad = np.empty_like(theta)
    grad[0] = 0.5 * np.sum(W * K)
    KR = sf2 * R
    for i in range(d):
        grad[1 + i] = 0.5 * np.sum(W * KR * scaled[i])
    if m is not None:
        grad[1 + d] = a @ m
    return val, -grad, j


@dataclass(frozen=True)
class GpPosterior:
    """Conditioned GP. Targets are modeled as ``y_mean + y_scale * f``
    with ``f`` a zero-mean GP with kernel ``params``."""

    X: np.ndarray
    y: np.ndarray
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    y_mean: float = 0.0
    y_scale: float = 1.0
    log_likelihood: float = np.nan
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def predict(self, x, full_output=False):
        """Posterior mean and variance at one point or a batch of points."""
        single = np.ndim(x) == 0 or (np.ndim(x) == 1 and np.size(x) == self.dim)
        Xq = np.asarray(x, dtype=float).reshape(-1, self.dim)
        Ks = kernel_matrix(Xq, self.X, self.params)
        mu = Ks @ self.alpha
        v = solve_triangular(self.chol, Ks.T, lower=True, check_finite=False)
        var = np.maximum(self.params.signal_variance - np.sum(v * v, axis=0), 0.0)
        mean = self.y_mean + self.y_scale * mu
        var = self.y_scale ** 2 * var
        if single:
            return float(mean[0]), float(var[0])
        return mean, var


def predict(post: GpPosterior, x):
    return post.predict(x)


def condition(X, y, params: KernelParams, y_mean: float = 0.0, y_scale: float = 1.0,
              log_likelihood: float = np.nan, diagnostics=None) -> GpPosterior:
    """Posterior for fixed hyperparameters (jitter escalates on failure)."""
    X = _as_points(X, params.dim)
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y) or len(y) == 0:
        raise ValueError("X and y must be non-empty and of equal length")
    ys = (y - y_mean) / y_scale
    K = kernel_matrix(X, X, params)
    cap = max(params.jitter, 1e-4 * params.signal_variance)
    L, j = _cholesky_escalating(K, params.jitter, cap)
    if j != params.jitter:
        params = KernelParams(params.signal_variance, params.lengthscales, j)
    alpha = cho_solve((L, True), ys, check_finite=False)
    return GpPosterior(X, y, params, L, alpha, float(y_mean), float(y_scale),
                       log_likelihood, diagnostics or {})


def standardize(y):
    y = np.asarray(y, dtype=float)
    mean = float(np.mean(y))
    sd = float(np.std(y))
    if not sd > 1e-12 * max(1.0, abs(mean)):
        sd = 1.0
    return mean, sd


def default_params(dim: int, width=1.0) -> KernelParams:
    return KernelParams(1.0, 0.2 * np.broadcast_to(np.asarray(width, float), (dim,)))


def hyper_bounds(dim: int, width=1.0):
    w = np.broadcast_to(np.asarray(width, float), (dim,))
    lo = np.concatenate([[np.log(1e-6)], np.log(1e-3 * w)])
    hi = np.concatenate([[np.log(1e6)], np.log(1e3 * w)])
    return lo, hi


def multistart(objective, theta0, lo, hi, restarts, rng, perturb=1.0):
    """Run L-BFGS-B from ``theta0`` and ``restarts - 1`` log-space perturbations.

    Returns ``(best_theta, best_value, diagnostics)``; earlier starts win ties.
    """
    best_theta, best_val, diag = None, np.inf, []
    starts = [np.clip(theta0, lo, hi)]
    for _ in range(max(restarts, 1) - 1):
        starts.append(np.clip(theta0 + perturb * rng.standard_normal(theta0.size), lo, hi))
    for k, th in enumerate(starts):
        try:
            res = minimize(objective, th, jac=True, method="L-BFGS-B",
                           bounds=list(zip(lo, hi)), options={"maxiter": 200})
            val, theta = float(res.fun), res.x
        except (ValueError, FloatingPointError, LinAlgError) as exc:
            diag.append({"start": k, "error": repr(exc)})
            continue
        init_val = float(objective(th)[0])
        if init_val < val:  # never return worse than the start point
            val, theta = init_val, th
        diag.append({"start": k, "value": val, "nit": int(getattr(res, "nit", 0))})
        if np.isfinite(val) and val < 1e24 and val < best_val:
            best_theta, best_val = np.array(theta), val
    return best_theta, best_val, diag


def fit(X, y, init: KernelParams | None = None, restarts: int = 4, seed=None,
        width=1.0) -> GpPosterior:
    """Maximum-likelihood GP on standardized targets.

    ``width`` is the per-dimension extent of the input box and scales the
    lengthscale bounds ``[1e-3, 1e3] * width``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if init is None or init.dim == 1 else X.reshape(1, -1)
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y) or len(y) == 0:
        raise ValueError("X and y must be non-empty and of equal length")
    dim = X.shape[1]
    y_mean, y_scale = standardize(y)
    ys = (y - y_mean) / y_scale
    sqd = _sqdist(X, X)
    lo, hi = hyper_bounds(dim, width)
    theta0 = (init or default_params(dim, width)).to_theta()
    rng = np.random.default_rng(seed)

    def objective(theta):
        v, g, _ = neg_lml_and_grad(theta, sqd, ys)
        return v, g

    theta, val, diag = multistart(objective, theta0, lo, hi, restarts, rng)
    if theta is None:
        raise GPFitError("all restarts failed to factorize", diag)
    _, _, rel_j = neg_lml_and_grad(theta, sqd, ys)
    params = KernelParams.from_theta(theta, jitter=rel_j * np.exp(theta[0]))
    return condition(X, y, params, y_mean, y_scale, log_likelihood=-val,
                     diagnostics={"restarts": diag})
