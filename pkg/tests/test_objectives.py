import math

import mpmath as mp
import numpy as np
import pytest
from scipy.optimize import brentq

from mfbo.dynamics import OdeSystem, ToleranceTier, integrate, jacobian_eigenvalues
from mfbo.objectives import (FORRESTER_OPT, HIMMELBLAU_ZEROS, PROBLEMS, Arrhenius, EnzymeParams,
                             OregonatorParams, bohachevsky,
                             oregonator_full_system, enzyme_conversion, enzyme_full_system,
                             enzyme_objective, forrester, himmelblau, hopf_measure, make_problem,
                             oregonator_hopf_objective, oregonator_reduced_system,
                             oregonator_spectrum, oregonator_steady_state_exact, reduced_x)

mp.mp.dps = 40


# -- closed forms --------------------------------------------------------------------------

def test_forrester_examples():
    assert forrester(0.0) == pytest.approx(4 * math.sin(-4), abs=1e-12)
    assert forrester(0.0) == pytest.approx(3.027209981231713, abs=1e-10)
    assert forrester(0.0, "low") == pytest.approx(-8.486395009384143, abs=1e-10)
    x_star, f_star = FORRESTER_OPT
    assert forrester(x_star[0]) == pytest.approx(f_star, abs=1e-12)
    grid = np.linspace(0, 1, 200_001)
    assert forrester(grid).min() >= f_star - 1e-12
    assert x_star[0] == pytest.approx(0.75725, abs=1e-5)


def test_bohachevsky_examples():
    assert bohachevsky(0.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    assert bohachevsky(0.0, 0.0, "low") == pytest.approx(-12.0, abs=1e-12)
    assert bohachevsky(1.0, 1.0) == pytest.approx(3.6, abs=1e-12)


def test_himmelblau_examples():
    assert himmelblau(3.0, 2.0) == 0.0
    assert himmelblau(0.0, 0.0, "low") == pytest.approx(169.0, abs=1e-12)
    for x1, x2 in HIMMELBLAU_ZEROS:
        assert himmelblau(x1, x2) < 1e-8
        assert abs(x1) <= 4 and abs(x2) <= 4


def test_unknown_fidelity():
    with pytest.raises(ValueError):
        forrester(0.3, "medium")


def mp_forrester(x, low):
    x = mp.mpf(x)
    h = (6 * x - 2) ** 2 * mp.sin(12 * x - 4)
    return h / 2 + 10 * (x - mp.mpf(1) / 2) - 5 if low else h


def mp_bohachevsky_high(x1, x2):
    return x1 ** 2 + 2 * x2 ** 2 - mp.mpf("0.3") * mp.cos(3 * mp.pi * x1) \
        - mp.mpf("0.4") * mp.cos(4 * mp.pi * x2) + mp.mpf("0.7")


def mp_bohachevsky(x1, x2, low):
    x1, x2 = mp.mpf(x1), mp.mpf(x2)
    if low:
        return mp_bohachevsky_high(mp.mpf("0.7") * x1, x2) + x1 * x2 - 12
    return mp_bohachevsky_high(x1, x2)


def mp_himmelblau_high(x1, x2):
    return (x1 ** 2 + x2 - 11) ** 2 + (x2 ** 2 + x1 - 7) ** 2


def mp_himmelblau(x1, x2, low):
    x1, x2 = mp.mpf(x1), mp.mpf(x2)
    if low:
        return mp_himmelblau_high(x1 / 2, mp.mpf("0.8") * x2) + x2 ** 3 - (x1 + 1) ** 2
    return mp_himmelblau_high(x1, x2)


# absolute floor: cancellation can push a value near zero while its terms stay O(scale)
CASES = [
    ("forrester", lambda p, fid: forrester(p[0], fid), lambda p, low: mp_forrester(p[0], low), 100.0),
    ("bohachevsky", lambda p, fid: bohachevsky(*p, fid), lambda p, low: mp_bohachevsky(*p, low), 100.0),
    ("himmelblau", lambda p, fid: himmelblau(*p, fid), lambda p, low: mp_himmelblau(*p, low), 1000.0),
]


@pytest.mark.parametrize("name,fn,oracle,scale", CASES, ids=[c[0] for c in CASES])
@pytest.mark.parametrize("fidelity", ["low", "high"])
def test_closed_forms_match_high_precision(name, fn, oracle, scale, fidelity):
    prob = make_problem(name)
    rng = np.random.default_rng(7)
    pts = prob.domain.lower + rng.random((100, prob.dim)) * (prob.domain.upper - prob.domain.lower)
    for p in pts:
        ref = float(oracle(p, fidelity == "low"))
        assert fn(p, fidelity) == pytest.approx(ref, rel=1e-12, abs=1e-12 * scale)


# -- enzyme --------------------------------------------------------------------------------

def test_k_eff_example():
    assert EnzymeParams(k_f=1, k_r=1, k_cat=1).k_eff(2.0) == 1.0


def test_enzyme_param_validation():
    with pytest.raises(ValueError):
        EnzymeParams(k_f=0.0)
    with pytest.raises(ValueError):
        enzyme_conversion(0.0)


def test_enzyme_conservation():
    p = EnzymeParams()
    sys = enzyme_full_system(p)
    u0 = np.array([p.S0_init, 0.0, 0.0, 0.4])
    tol = ToleranceTier(1e-10, 1e-12)
    for t in (0.5, 2.0, 10.0):
        s, es, s1, e = integrate(sys, u0, (0, t), tol)
        assert s + es + s1 == pytest.approx(p.S0_init, rel=1e-8)
        assert e + es == pytest.approx(0.4, rel=1e-8)


def test_enzyme_objective_zero_at_target():
    p = EnzymeParams()
    root = brentq(lambda E: enzyme_conversion(E, "high", p) - p.target, 0.02, 1.0, xtol=1e-14)
    assert enzyme_objective(root, "high", p) < 1e-9
    assert enzyme_objective(0.02, "high", p) > 0.1


def qssa_gap(S0):
    p = EnzymeParams(S0_init=S0)
    return max(abs(enzyme_conversion(E, "low", p) - enzyme_conversion(E, "high", p))
               for E in np.linspace(0.02, 1.0, 11))


def test_qssa_gap_small_in_validity_regime():
    assert qssa_gap(EnzymeParams().qssa_bound / 100) < 0.01


def test_qssa_gap_grows_outside():
    bound = EnzymeParams().qssa_bound
    gaps = [qssa_gap(bound * s) for s in (0.01, 0.1, 1.0, 10.0, 100.0)]
    assert np.all(np.diff(gaps) > 0)


def test_low_fidelity_closed_form():
    # the reduced model is first-order decay: X = 1 - exp(-k_eff * horizon)
    p = EnzymeParams()
    for E in (0.05, 0.3, 0.9):
        exact = 1 - math.exp(-p.k_eff(E) * p.horizon)
        assert enzyme_conversion(E, "low", p) == pytest.approx(exact, rel=1e-8)


# -- Oregonator ----------------------------------------------------------------------------

def test_reduced_x_at_zero():
    for a in (0.3, 1.0, 4.0):
        assert reduced_x(0.0, a, 0.01) == pytest.approx(a, rel=1e-15)


def test_hopf_measure_normal_form():
    for m in (-0.3, 0.0, 0.25):
        J = np.array([[m, -1.0], [1.0, m]])
        lam = jacobian_eigenvalues(OdeSystem(lambda t, x: J @ x, 2), np.zeros(2))
        assert hopf_measure(lam) == pytest.approx(abs(m), abs=1e-9)


def test_hopf_measure_real_fallback():
    assert hopf_measure(np.array([-3.0, 0.5, -0.1])) == 0.1


@pytest.mark.parametrize("fidelity", ["low", "high"])
def test_oregonator_steady_state_residual(fidelity):
    p = OregonatorParams()
    x_star, _ = oregonator_spectrum(420.0, 1.2, fidelity, p)
    build = oregonator_reduced_system if fidelity == "low" else oregonator_full_system
    sys = build(420.0, 1.2, p)
    assert np.linalg.norm(sys.field(x_star)) < 1e-10


def test_oregonator_matches_closed_form():
    p = OregonatorParams()
    for T, f in [(360.0, 0.8), (420.0, 1.2), (490.0, 2.2)]:
        x_star, _ = oregonator_spectrum(T, f, "high", p)
        np.testing.assert_allclose(x_star, oregonator_steady_state_exact(T, f, p), rtol=1e-8)


def test_oregonator_fidelity_consistency_small_eps():
    p = OregonatorParams(eps=Arrhenius(1e-5, 0.0))
    for T in (360.0, 430.0, 500.0):
        _, eps, om = p.groups(T)
        assert eps / om < 1e-2
        for f in (0.7, 1.5, 2.3):
            full, _ = oregonator_spectrum(T, f, "high", p)
            red, _ = oregonator_spectrum(T, f, "low", p)
            np.testing.assert_allclose(red, full[1:], rtol=1e-3)


def test_oregonator_objective_nonnegative():
    vals = [oregonator_hopf_objective(T, f) for T in (360, 430, 500) for f in (0.6, 1.5, 2.4)]
    assert all(v >= 0 and np.isfinite(v) for v in vals)


# -- registry ------------------------------------------------------------------------------

def test_registry_names():
    assert sorted(PROBLEMS) == ["bohachevsky", "forrester", "himmelblau", "oregonator", "toy_enzyme"]
    with pytest.raises(KeyError):
        make_problem("rosenbrock")


def test_problem_bounds_and_sense():
    expected = {"forrester": ([0], [1]), "bohachevsky": ([-5, -5], [5, 5]),
                "himmelblau": ([-4, -4], [4, 4]), "oregonator": ([350, 0.5], [500, 2.5])}
    for name, (lo, hi) in expected.items():
        prob = make_problem(name)
        assert np.array_equal(prob.domain.lower, lo) and np.array_equal(prob.domain.upper, hi)
        assert prob.sense == "minimize"
    assert make_problem("himmelblau").f_star == 0.0


def test_problem_counts_and_sign():
    prob = make_problem("forrester")
    prob.evaluate([0.0], "low")
    prob.evaluate([0.0], "high")
    prob.evaluate([0.5], "high")
    assert prob.counts == {"low": 1, "high": 2}
    assert prob.fresh().counts == {"low": 0, "high": 0}
    flipped = make_problem("forrester")
    flipped.sense = "maximize"
    assert flipped.evaluate([0.0], "high") == -forrester(0.0)
    with pytest.raises(ValueError):
        prob.evaluate([0.0], "mid")
