"""Benchmark problems with a cheap (low) and an accurate (high) evaluator.

Closed-form pairs (Forrester, Bohachevsky, Himmelblau) and two kinetics
problems where the low-fidelity model comes from a quasi-steady-state
reduction: a toy enzyme scheme and a temperature-dependent Oregonator.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dynamics import (ConvergenceError, IntegrationError, OdeSystem, ToleranceTier,
                       integrate, jacobian_eigenvalues, steady_state)
from .sampling import Domain

R_GAS = 8.314462618  # J / (mol K)


class ObjectiveError(RuntimeError):
    pass


# -- closed-form pairs ----------------------------------------------------------------

def forrester_high(x):
    x = np.asarray(x, dtype=float)
    return (6 * x - 2) ** 2 * np.sin(12 * x - 4)


def forrester_low(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * forrester_high(x) + 10 * (x - 0.5) - 5


def forrester(x, fidelity: str = "high"):
    return _pick(fidelity, forrester_low, forrester_high)(x)


def bohachevsky_high(x1, x2):
    return (x1 ** 2 + 2 * x2 ** 2 - 0.3 * np.cos(3 * np.pi * x1)
            - 0.4 * np.cos(4 * np.pi * x2) + 0.7)


def bohachevsky_low(x1, x2):
    return bohachevsky_high(0.7 * x1, x2) + x1 * x2 - 12


def bohachevsky(x1, x2, fidelity: str = "high"):
    return _pick(fidelity, bohachevsky_low, bohachevsky_high)(x1, x2)


def himmelblau_high(x1, x2):
    return (x1 ** 2 + x2 - 11) ** 2 + (x2 ** 2 + x1 - 7) ** 2


def himmelblau_low(x1, x2):
    return himmelblau_high(0.5 * x1, 0.8 * x2) + x2 ** 3 - (x1 + 1) ** 2


def himmelblau(x1, x2, fidelity: str = "high"):
    return _pick(fidelity, himmelblau_low, himmelblau_high)(x1, x2)


def _pick(fidelity, low, high):
    if fidelity == "low":
        return low
    if fidelity == "high":
        return high
    raise ValueError(f"fidelity must be 'low' or 'high', got {fidelity!r}")


# -- toy enzyme -----------------------------------------------------------------------

@dataclass(frozen=True)
class EnzymeParams:
    """Rate constants and protocol of ``E + S0 <-> ES0 -> E + S1``.

    The reduced model is valid when ``S0_init << (k_r + k_cat) / k_f``.
    """

    k_f: float = 1.0
    k_r: float = 10.0
    k_cat: float = 10.0
    S0_init: float = 10.0
    horizon: float = 10.0
    target: float = 0.67
    tol: ToleranceTier = ToleranceTier(1e-9, 1e-12)

    def __post_init__(self):
        if min(self.k_f, self.k_r, self.k_cat, self.S0_init, self.horizon) <= 0:
            raise ValueError("enzyme parameters must be positive")

    @property
    def qssa_bound(self) -> float:
        return (self.k_r + self.k_cat) / self.k_f

    def k_eff(self, E_tot: float) -> float:
        return E_tot * self.k_f * self.k_cat / (self.k_r + self.k_cat)


def enzyme_full_system(p: EnzymeParams) -> OdeSystem:
    """State ``[S0, ES0, S1, E]``."""
    kf, kr, kc = p.k_f, p.k_r, p.k_cat

    def rhs(t, u):
        s, es, _, e = u
        bind = kf * e * s
        return np.array([-bind + kr * es, bind - (kr + kc) * es, kc * es, -bind + (kr + kc) * es])

    return OdeSystem(rhs, 4)


def enzyme_reduced_system(p: EnzymeParams, E_tot: float) -> OdeSystem:
    """State ``[S0, S1]`` with the QSSA rate ``k_eff * [S0]``."""
    k = p.k_eff(E_tot)

    def rhs(t, u):
        r = k * u[0]
        return np.array([-r, r])

    return OdeSystem(rhs, 2)


def enzyme_conversion(E: float, fidelity: str = "high", params: EnzymeParams = EnzymeParams()) -> float:
    """Fraction of the initial substrate converted to ``S1`` at the horizon."""
    E = float(np.squeeze(E))
    if not E > 0:
        raise ValueError("enzyme concentration must be positive")
    p = params
    try:
        if fidelity == "high":
            end = integrate(enzyme_full_system(p), [p.S0_init, 0.0, 0.0, E], (0.0, p.horizon), p.tol)
            s1 = end[2]
        elif fidelity == "low":
            end = integrate(enzyme_reduced_system(p, E), [p.S0_init, 0.0], (0.0, p.horizon), p.tol)
            s1 = end[1]
        else:
            raise ValueError(f"fidelity must be 'low' or 'high', got {fidelity!r}")
    except IntegrationError as exc:
        raise ObjectiveError(f"enzyme integration failed at E={E}: {exc}") from exc
    return float(s1 / p.S0_init)


def enzyme_objective(E, fidelity: str = "high", params: EnzymeParams = EnzymeParams()) -> float:
    return abs(enzyme_conversion(E, fidelity, params) - params.target)


# -- Oregonator -----------------------------------------------------------------------

@dataclass(frozen=True)
class Arrhenius:
    """``k(T) = k_ref * exp(-Ea/R * (1/T - 1/T_ref))``."""

    k_ref: float
    Ea: float  # J/mol
    T_ref: float = 350.0

    def __call__(self, T):
        return self.k_ref * np.exp(-self.Ea / R_GAS * (1.0 / T - 1.0 / self.T_ref))


@dataclass(frozen=True)
class OregonatorParams:
    """Dimensionless temperature-dependent Oregonator.

    Defaults put a closed Hopf locus inside ``T in [350, 500]``,
    ``f in [0.5, 2.5]``: ``q`` rises a hundredfold over the range and closes
    the oscillatory window in ``f``. ``eps/omega`` grows from 1e-2 at 350 K
    to about 6e-2 at 500 K, so the reduced model degrades with temperature.
    """

    a: float = 1.0
    b: float = 1.0
    q: Arrhenius = Arrhenius(1e-3, 44_670.0)
    eps: Arrhenius = Arrhenius(1e-3, 22_340.0)
    omega: Arrhenius = Arrhenius(1e-1, 5_000.0)
    relax_time: float = 0.5

    def groups(self, T):
        return float(self.q(T)), float(self.eps(T)), float(self.omega(T))


def oregonator_full_system(T, f, p: OregonatorParams = OregonatorParams()) -> OdeSystem:
    q, eps, om = p.groups(T)
    a, b = p.a, p.b

    def rhs(t, u):
        x, y, z = u
        return np.array([(q * a * y - x * y + a * x - x * x) / eps,
                         (-q * a * y - x * y + f * b * z) / om,
                         a * x - b * z])

    return OdeSystem(rhs, 3)


def reduced_x(y, a, q):
    """Fast-variable slaving ``x*(y)``, positive root of ``qay - xy + ax - x^2 = 0``."""
    return (a - y) / 2 + np.sqrt(q * a * y + (a - y) ** 2 / 4)


def oregonator_reduced_system(T, f, p: OregonatorParams = OregonatorParams()) -> OdeSystem:
    q, _, om = p.groups(T)
    a, b = p.a, p.b

    def rhs(t, u):
        y, z = u
        xs = reduced_x(y, a, q)
        return np.array([(-q * a * y - xs * y + f * b * z) / om, a * xs - b * z])

    return OdeSystem(rhs, 2)


def oregonator_steady_state_exact(T, f, p: OregonatorParams = OregonatorParams()):
    """Closed-form positive steady state ``(x, y, z)`` of the full model."""
    q, _, _ = p.groups(T)
    a, b = p.a, p.b
    B = a * (f - 1 + q)
    x = (-B + np.sqrt(B * B + 4 * q * a * a * (f + 1))) / 2
    y = f * a * x / (q * a + x)
    return np.array([x, y, a * x / b])


def hopf_measure(eigenvalues) -> float:
    """|Re| of the leading complex-conjugate pair, else the smallest |Re|."""
    lam = np.asarray(eigenvalues)
    cplx = lam[np.abs(lam.imag) > 1e-9 * np.maximum(1.0, np.abs(lam))]
    if len(cplx):
        return float(abs(cplx[np.argmax(cplx.real)].real))
    return float(np.min(np.abs(lam.real)))


def _oregonator_state(T, f, fidelity, p):
    if fidelity == "high":
        sys = oregonator_full_system(T, f, p)
        x0 = np.full(3, 0.5 * p.a)
    elif fidelity == "low":
        sys = oregonator_reduced_system(T, f, p)
        x0 = np.full(2, 0.5 * p.a)
    else:
        raise ValueError(f"fidelity must be 'low' or 'high', got {fidelity!r}")
    # the origin is always a (trivial) steady state; only interior roots count
    floor = 1e-6 * p.a
    history = []
    for k, scale in enumerate((0.5, 0.5, 1.0, 0.1, 2.0)):
        try:
            x_star = steady_state(sys, x0 * scale / 0.5, relax_time=p.relax_time if k == 0 else 0.0,
                                  positive=True)
        except (ConvergenceError, IntegrationError) as exc:
            history.extend(getattr(exc, "history", [])[-1:])
            continue
        if np.all(x_star > floor):
            return sys, x_star
    raise ObjectiveError(f"Oregonator steady state failed at T={T}, f={f}: "
                         f"final residuals {history}")


def oregonator_spectrum(T, f, fidelity="high", params: OregonatorParams = OregonatorParams()):
    sys, x_star = _oregonator_state(T, f, fidelity, params)
    return x_star, jacobian_eigenvalues(sys, x_star)


def oregonator_hopf_objective(T, f, fidelity: str = "high",
                              params: OregonatorParams = OregonatorParams()) -> float:
    """Distance of the critical eigenvalue pair from the imaginary axis."""
    _, lam = oregonator_spectrum(T, f, fidelity, params)
    return hopf_measure(lam)


# -- problem registry -----------------------------------------------------------------

@dataclass
class Problem:
    """Two-fidelity minimization problem on a box.

    ``eval_low``/``eval_high`` take domain coordinates and return values in
    the problem's own sense; ``low``/``high`` return the canonical
    minimization form and count calls.
    """

    name: str
    domain: Domain
    eval_low: Callable[[np.ndarray], float]
    eval_high: Callable[[np.ndarray], float]
    sense: str = "minimize"
    known_optimum: tuple | None = None  # (x*, f*) in the problem's own sense
    counts: dict = field(default_factory=lambda: {"low": 0, "high": 0})

    def __post_init__(self):
        if self.sense not in ("minimize", "maximize"):
            raise ValueError(f"unknown sense {self.sense!r}")

    @property
    def sign(self) -> float:
        return 1.0 if self.sense == "minimize" else -1.0

    @property
    def dim(self) -> int:
        return self.domain.dim

    def evaluate(self, x, fidelity: str) -> float:
        x = np.asarray(x, dtype=float)
        f = self.eval_high if fidelity == "high" else self.eval_low
        if fidelity not in ("low", "high"):
            raise ValueError(f"unknown fidelity {fidelity!r}")
        self.counts[fidelity] += 1
        val = float(f(x))
        if not np.isfinite(val):
            raise ObjectiveError(f"{self.name}: non-finite {fidelity} value at {x}")
        return self.sign * val

    @property
    def f_star(self) -> float | None:
        """Known optimum in canonical (minimization) form."""
        if self.known_optimum is None:
            return None
        return self.sign * self.known_optimum[1]

    def fresh(self) -> "Problem":
        return replace(self, counts={"low": 0, "high": 0})


FORRESTER_OPT = (np.array([0.7572487578418559]), -6.020740055767083)


def _make_forrester(**_):
    return Problem("forrester", Domain([0.0], [1.0]),
                   lambda x: forrester_low(x[0]), lambda x: forrester_high(x[0]),
                   known_optimum=FORRESTER_OPT)


def _make_bohachevsky(**_):
    return Problem("bohachevsky", Domain([-5.0, -5.0], [5.0, 5.0]),
                   lambda x: bohachevsky_low(x[0], x[1]), lambda x: bohachevsky_high(x[0], x[1]),
                   known_optimum=(np.zeros(2), 0.0))


HIMMELBLAU_ZEROS = np.array([[3.0, 2.0], [-2.805118086952745, 3.131312518250573],
                             [-3.779310253377747, -3.283185991286170],
                             [3.584428340330492, -1.848126526964404]])


def _make_himmelblau(**_):
    return Problem("himmelblau", Domain([-4.0, -4.0], [4.0, 4.0]),
                   lambda x: himmelblau_low(x[0], x[1]), lambda x: himmelblau_high(x[0], x[1]),
                   known_optimum=(None, 0.0))  # four global minimizers, see HIMMELBLAU_ZEROS


def _make_enzyme(params: EnzymeParams | None = None, lower=0.02, upper=1.0, **_):
    p = params or EnzymeParams()
    return Problem("toy_enzyme", Domain([lower], [upper]),
                   lambda x: enzyme_objective(x[0], "low", p),
                   lambda x: enzyme_objective(x[0], "high", p),
                   known_optimum=(None, 0.0))


def _make_oregonator(params: OregonatorParams | None = None, **_):
    p = params or OregonatorParams()
    return Problem("oregonator", Domain([350.0, 0.5], [500.0, 2.5]),
                   lambda x: oregonator_hopf_objective(x[0], x[1], "low", p),
                   lambda x: oregonator_hopf_objective(x[0], x[1], "high", p),
                   known_optimum=(None, 0.0))


PROBLEMS = {
    "forrester": _make_forrester,
    "bohachevsky": _make_bohachevsky,
    "himmelblau": _make_himmelblau,
    "toy_enzyme": _make_enzyme,
    "oregonator": _make_oregonator,
}


def make_problem(name: str, **kwargs) -> Problem:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}") from None
    return factory(**kwargs)
