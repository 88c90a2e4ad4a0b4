"""Numerical dynamical-systems toolkit.

Adaptive Dormand-Prince integration, steady states with Jacobian spectra,
and matrix-free Newton-GMRES for periodic steady states of forced systems.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

EPS = np.finfo(float).eps


class IntegrationError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


@dataclass(frozen=True)
class OdeSystem:
    """``dx/dt = rhs(t, x)``; ``period`` is set for periodically forced systems."""

    rhs: Callable[[float, np.ndarray], np.ndarray]
    dim: int
    period: float | None = None

    def field(self, x, t: float = 0.0) -> np.ndarray:
        return np.asarray(self.rhs(t, np.asarray(x, dtype=float)), dtype=float)


@dataclass(frozen=True)
class ToleranceTier:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class PeriodicSolution:
    x: np.ndarray
    period: float
    residual: float
    newton_iters: int
    history: list = field(default_factory=list)
    gmres_iters: list = field(default_factory=list)


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = _B - np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])


def integrate(sys: OdeSystem, x0, t_span, tol: ToleranceTier = ToleranceTier(),
              h0: float | None = None, max_steps: int = 200_000) -> np.ndarray:
    """End state of an adaptive Dormand-Prince 5(4) solve over ``t_span``."""
    t0, t1 = map(float, t_span)
    x = np.array(x0, dtype=float)
    if not np.all(np.isfinite(x)):
        raise IntegrationError("non-finite initial state")
    if t1 == t0:
        return x
    direction = np.sign(t1 - t0)
    span = abs(t1 - t0)
    rhs = sys.rhs

    k = np.empty((7, x.size))
    k[0] = rhs(t0, x)
    if h0 is None:
        scale = tol.abs_tol + tol.rel_tol * np.abs(x)
        d0 = np.sqrt(np.mean((x / scale) ** 2))
        d1 = np.sqrt(np.mean((k[0] / scale) ** 2))
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, span)
    else:
        h = min(abs(h0), span)
    h_min = 16 * EPS * max(abs(t0), abs(t1), 1.0)

    t = t0
    steps = 0
    while direction * (t1 - t) > 0:
        if steps >= max_steps:
            raise IntegrationError(f"max_steps={max_steps} exceeded at t={t:.6g}")
        h = min(h, abs(t1 - t))
        hs = direction * h
        for i in range(1, 7):
            k[i] = rhs(t + _C[i] * hs, x + hs * np.dot(_A[i], k[:i]))
        x_new = x + hs * np.dot(_B, k)
        err_vec = hs * np.dot(_E, k)
        scale = tol.abs_tol + tol.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
        err = np.sqrt(np.mean((err_vec / scale) ** 2))
        if not np.isfinite(err):
            err = np.inf
        if err <= 1.0:
            t = t + hs
            x = x_new
            k[0] = k[6]  # FSAL
            steps += 1
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            fac = max(0.2, 0.9 * err ** -0.2) if np.isfinite(err) else 0.2
        h = h * fac
        if h < h_min:
            raise IntegrationError(f"step size underflow at t={t:.6g} (stiff or singular system)")
    return x


def strobo_map(sys: OdeSystem, x, tol: ToleranceTier = ToleranceTier(1e-10, 1e-12)) -> np.ndarray:
    """State after one forcing period starting from ``x`` at phase zero."""
    if sys.period is None:
        raise ValueError("stroboscopic map needs a periodically forced system")
    return integrate(sys, x, (0.0, sys.period), tol)


def brute_force_periodic_guess(sys: OdeSystem, x0, n_periods: int = 100,
                               tol: ToleranceTier = ToleranceTier(1e-10, 1e-12)) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    for _ in range(n_periods):
        x = strobo_map(sys, x, tol)
    return x


def gmres(matvec, b, x0=None, tol: float = 1e-10, restart: int | None = None,
          maxiter: int = 200):
    """Restarted GMRES with modified Gram-Schmidt Arnoldi and Givens rotations.

    Returns ``(x, residual_history)``; ``tol`` is relative to ``||b||``. The
    history holds the least-squares residual after every inner iteration and
    is non-increasing within each cycle.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    m = min(n, 30) if restart is None else restart
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), [0.0]
    target = tol * bnorm
    r = b - matvec(x)
    beta = np.linalg.norm(r)
    history = [beta]
    total = 0
    while beta > target and total < maxiter:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = matvec(V[j])
            for i in range(j + 1):
                H[i, j] = np.dot(w, V[i])
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] <= 1e-14 * max(beta, 1.0)
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom if denom else 1.0
            sn[j] = H[j + 1, j] / denom if denom else 0.0
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            history.append(abs(g[j + 1]))
            if abs(g[j + 1]) <= target or breakdown or total >= maxiter:
                break
        y = np.linalg.solve(np.triu(H[:j_done, :j_done]), g[:j_done])
        x = x + V[:j_done].T @ y
        if abs(g[j_done]) <= target or breakdown:
            # matvecs may be inexact (finite differences); trust the Arnoldi residual
            return x, history
        r = b - matvec(x)
        new_beta = np.linalg.norm(r)
        if new_beta >= beta * (1 - 1e-12) and new_beta > target:
            raise ConvergenceError("GMRES stagnated", history)
        beta = new_beta
    if beta > target:
        raise ConvergenceError(f"GMRES did not reach tol after {total} iterations", history)
    return x, history


def fd_matvec(residual, x, r_x, b, eps: float | None = None) -> np.ndarray:
    """Jacobian-vector product by a forward difference along ``b/||b||``."""
    bn = np.linalg.norm(b)
    if bn == 0.0:
        return np.zeros_like(b)
    if eps is None:
        eps = np.sqrt(EPS) * (1.0 + np.linalg.norm(x))
    return bn * (residual(x + eps * b / bn) - r_x) / eps


def newton_krylov(residual, x_guess, tol_newton: float = 1e-8, tol_gmres: float = 1e-10,
                  max_newton: int = 20):
    """Matrix-free Newton-GMRES root solve of ``residual(x) = 0``.

    Returns ``(x, residual_norm_history, gmres_iteration_counts)``.
    """
    x = np.array(x_guess, dtype=float)
    r = residual(x)
    hist = [float(np.linalg.norm(r))]
    inner = []
    for _ in range(max_newton):
        if hist[-1] <= tol_newton:
            return x, hist, inner
        x_k, r_k = x, r
        delta, ghist = gmres(lambda v: fd_matvec(residual, x_k, r_k, v), -r_k, tol=tol_gmres)
        inner.append(len(ghist) - 1)
        x = x + delta
        r = residual(x)
        hist.append(float(np.linalg.norm(r)))
        if not np.isfinite(hist[-1]):
            raise ConvergenceError("Newton iterate diverged", hist)
    if hist[-1] <= tol_newton:
        return x, hist, inner
    raise ConvergenceError(f"Newton did not converge in {max_newton} iterations", hist)


def newton_gmres_periodic(sys: OdeSystem, x_guess, tol_newton: float = 1e-8,
                          tol_gmres: float = 1e-10, max_newton: int = 20,
                          tol: ToleranceTier = ToleranceTier(1e-12, 1e-14)) -> PeriodicSolution:
    """Periodic steady state as the root of ``R(x) = x - S(x)``."""

    def residual(x):
        return x - strobo_map(sys, x, tol)

    x, hist, inner = newton_krylov(residual, x_guess, tol_newton, tol_gmres, max_newton)
    return PeriodicSolution(x=x, period=sys.period, residual=hist[-1],
                            newton_iters=len(hist) - 1, history=hist, gmres_iters=inner)


def fd_jacobian(func, x, rel_step: float = 1e-6) -> np.ndarray:
    """Central finite-difference Jacobian with step ``rel_step * (1 + |x_i|)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    f0 = np.asarray(func(x))
    J = np.empty((f0.size, n))
    for i in range(n):
        h = rel_step * (1.0 + abs(x[i]))
        e = np.zeros(n)
        e[i] = h
        J[:, i] = (np.asarray(func(x + e)) - np.asarray(func(x - e))) / (2 * h)
    return J


def steady_state(sys: OdeSystem, x_guess, relax_time: float = 0.0, tol: float = 1e-10,
                 max_iter: int = 100, positive: bool = False) -> np.ndarray:
    """Damped-Newton root of the autonomous vector field, optionally warm
    started by integrating for ``relax_time``.

    With ``positive`` the iterates are kept in the open positive orthant by
    step halving (concentration variables).
    """
    x = np.array(x_guess, dtype=float)
    if relax_time > 0:
        x = integrate(sys, x, (0.0, relax_time), ToleranceTier(1e-8, 1e-12))
    f = sys.field
    fx = f(x)
    norm = np.linalg.norm(fx)
    hist = [norm]
    for _ in range(max_iter):
        if norm < tol:
            return x
        J = fd_jacobian(f, x)
        try:
            step = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(J, -fx, rcond=None)[0]
        lam = 1.0
        while lam > 1e-10:
            x_try = x + lam * step
            if not positive or np.all(x_try > 0):
                f_try = f(x_try)
                n_try = np.linalg.norm(f_try)
                if np.isfinite(n_try) and n_try < (1 - 1e-4 * lam) * norm:
                    break
            lam *= 0.5
        else:
            break
        x, fx, norm = x_try, f_try, n_try
        hist.append(norm)
    if norm < tol:
        return x
    raise ConvergenceError(f"steady state not converged, |f|={norm:.3e}", hist)


def jacobian_eigenvalues(sys: OdeSystem, x_star) -> np.ndarray:
    """Eigenvalues of the FD Jacobian at ``x_star``, descending real part."""
    J = fd_jacobian(sys.field, x_star)
    lam = np.linalg.eigvals(J)
    order = np.lexsort((-lam.imag, -lam.real))
    return lam[order]
