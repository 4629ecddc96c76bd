"""Closed-form layer: frozen high-precision values, structural identities,
and the optimal-threshold solver.

Frozen constants were computed with an independent 40-digit mpmath
transcription of the same formulas (mp.ncdf / mp.exp, ternary search for the
threshold), so they share no code with the implementation under test.
"""

import math

import numpy as np
import pytest

from foresight import (
    FormulaParams,
    NumericalDegeneracyError,
    ThresholdSearchError,
    a_quantities,
    excursion_rates,
    lambda_max,
    normal_cdf,
    normal_pdf,
    optimal_threshold,
    psi,
    rule_value,
)

# mpmath goldens, 40 working digits, rounded to double precision
NU_A_1_0 = 1.3955931148026121
NU_01_5 = 4.2161476486278835
NU_A_01_5 = 3.0546061358698036
NU_ALPHA_01_5 = 1.1615415127580799
NCDF_196 = 0.9750021048517796
PSI0_GOLD = 0.7872067788946034      # psi0(-0.5; a=1, eta=0.5)
PSI1_GOLD = 0.042643302385446046    # psi1(-0.5; a=1, eta=0.5)
K_GOLD = 2.3893338483934219         # K(-0.5; a=1, eta=0.5)
QSTAR_SMALL = -0.09729158658546215  # q*(a=0.004, eta=20)
KSTAR_SMALL = 1.1021817081711562
QSTAR_UNIT = -0.6734789525116887    # q*(a=1, eta=1)
KSTAR_UNIT = 1.9610478593723659
LAMBDA_1 = 2.0807214799493322
LAMBDA_4 = 3.8493204333124585
LAMBDA_01 = 1.2783632456305984
# same expression with phi evaluated at a/4 instead of sqrt(a)/2
LAMBDA_1_MISPRINT = 2.115324269987882


def test_normal_cdf_golden():
    assert normal_cdf(1.96) == pytest.approx(NCDF_196, rel=1e-14)
    assert normal_cdf(0.0) == 0.5
    for x in (0.3, 1.0, 2.5, 7.0):
        assert normal_cdf(-x) + normal_cdf(x) == pytest.approx(1.0, abs=1e-15)


def test_normal_pdf_symmetric():
    assert normal_pdf(0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi), rel=1e-15)
    assert normal_pdf(1.3) == normal_pdf(-1.3)


def test_excursion_rate_goldens():
    r = excursion_rates(FormulaParams(a=1.0, eta=0.0))
    assert r.nu_a == pytest.approx(NU_A_1_0, rel=1e-14)
    r = excursion_rates(FormulaParams(a=0.1, eta=5.0))
    assert r.nu == pytest.approx(NU_01_5, rel=1e-14)
    assert r.nu_a == pytest.approx(NU_A_01_5, rel=1e-14)
    assert r.nu_alpha == pytest.approx(NU_ALPHA_01_5, rel=1e-13)


def test_eta_zero_reduction():
    # without a mark there are no marked excursions: nu collapses onto nu_a
    r = excursion_rates(FormulaParams(a=0.7, eta=0.0))
    assert r.nu_alpha == 0.0
    assert r.nu == r.nu_a
    assert r.beta == 0.5


def test_rate_identity_grid():
    for a in np.geomspace(1e-3, 4.0, 7):
        for eta in (0.0, 0.01, 1.0, 250.0, 1e4):
            p = FormulaParams(a=float(a), eta=float(eta))
            r = excursion_rates(p)
            assert r.nu == pytest.approx(r.nu_a + r.nu_alpha, rel=1e-12)
            assert r.nu > 1.0


def test_psi_at_zero_ties_to_rates():
    # both q = 0 cancellations are arranged to be exact in floating point
    for a in np.geomspace(1e-4, 4.0, 9):
        for eta in (0.01, 1.0, 300.0):
            p = FormulaParams(a=float(a), eta=float(eta))
            psi0_0, psi1_0 = psi(0.0, p)
            assert psi1_0 == 0.0
            r = excursion_rates(p)
            assert psi0_0 == pytest.approx(r.nu_a * math.exp(-eta * a), rel=1e-13)


def test_psi_goldens_and_monotonicity():
    p = FormulaParams(a=1.0, eta=0.5)
    psi0, psi1 = psi(-0.5, p)
    assert psi0 == pytest.approx(PSI0_GOLD, rel=1e-13)
    assert psi1 == pytest.approx(PSI1_GOLD, rel=1e-12)
    q = -np.geomspace(1e-3, 6.0, 40)[::-1]  # ascending toward zero
    psi0q, psi1q = psi(q, p)
    assert np.all(np.diff(psi0q) > 0)   # deeper cutoffs exclude more mass
    assert np.all(np.diff(psi1q) < 0)   # ... which the complement picks up
    assert np.all(psi0q > 0) and np.all(psi1q >= 0)


def test_psi_array_matches_scalar():
    p = FormulaParams(a=0.3, eta=2.0)
    q = np.array([-2.0, -0.7, -0.01, 0.0])
    v0, v1 = psi(q, p)
    for i, qi in enumerate(q):
        s0, s1 = psi(float(qi), p)
        assert v0[i] == s0 and v1[i] == s1


def test_psi_rejects_positive_q():
    with pytest.raises(ValueError):
        psi(0.5, FormulaParams(a=1.0, eta=1.0))


def test_rule_value_decomposition():
    # K(q) = (A0 + A-(q)) / (1 - A+(q)) at assorted points
    for a, eta, q in ((1.0, 0.5, -0.5), (0.04, 25.0, -0.2), (2.0, 0.1, -1.5)):
        p = FormulaParams(a=a, eta=eta)
        a0, am, ap = a_quantities(q, p)
        assert rule_value(q, p) == pytest.approx((a0 + am) / (1.0 - ap), rel=1e-12)


def test_rule_value_golden():
    assert rule_value(-0.5, FormulaParams(a=1.0, eta=0.5)) == pytest.approx(
        K_GOLD, rel=1e-13
    )


def test_optimal_threshold_goldens():
    s = optimal_threshold(FormulaParams(a=0.004, eta=20.0))
    assert s.q_star == pytest.approx(QSTAR_SMALL, rel=1e-10)
    assert s.k_star == pytest.approx(KSTAR_SMALL, rel=1e-12)
    s = optimal_threshold(FormulaParams(a=1.0, eta=1.0))
    assert s.q_star == pytest.approx(QSTAR_UNIT, rel=1e-10)
    assert s.k_star == pytest.approx(KSTAR_UNIT, rel=1e-12)


def test_optimal_threshold_is_a_maximum():
    for a, eta in ((0.04, 3.0), (1.0, 1.0), (0.004, 2000.0)):
        p = FormulaParams(a=a, eta=eta)
        s = optimal_threshold(p)
        assert s.k_star == pytest.approx(rule_value(s.q_star, p), rel=1e-14)
        assert rule_value(s.q_star * 1.05, p) < s.k_star
        assert rule_value(s.q_star * 0.95, p) < s.k_star


def test_fixed_point_certificate():
    # includes the large-eta regime where the maximum is numerically flat
    for a in (0.004, 0.04):
        for eta in (1.0, 100.0, 5000.0):
            s = optimal_threshold(FormulaParams(a=a, eta=eta))
            assert abs(s.k_star - math.exp(-s.q_star)) <= 1e-6


def test_threshold_search_range_error():
    # at extreme eta the maximizer leaves (-8, -1e-6) and the solver says so
    with pytest.raises(ThresholdSearchError):
        optimal_threshold(FormulaParams(a=0.04, eta=1e12))
    assert issubclass(ThresholdSearchError, NumericalDegeneracyError)


def test_optimal_threshold_validation():
    with pytest.raises(ValueError):
        optimal_threshold(FormulaParams(a=1.0, eta=0.0))
    with pytest.raises(ValueError):
        optimal_threshold(FormulaParams(a=1.0, eta=1.0, c=-0.4))


def test_formula_params_validation():
    with pytest.raises(ValueError):
        FormulaParams(a=0.0, eta=1.0)
    with pytest.raises(ValueError):
        FormulaParams(a=-1.0, eta=1.0)
    with pytest.raises(ValueError):
        FormulaParams(a=1.0, eta=-0.1)


def test_lambda_goldens():
    assert lambda_max(1.0) == pytest.approx(LAMBDA_1, rel=1e-14)
    assert lambda_max(4.0) == pytest.approx(LAMBDA_4, rel=1e-14)
    assert lambda_max(0.1) == pytest.approx(LAMBDA_01, rel=1e-14)
    assert lambda_max(0.0) == 1.0
    with pytest.raises(ValueError):
        lambda_max(-1.0)


def test_lambda_misprint_is_distinguishable_at_unit_window():
    # the two candidate readings agree only where sqrt(a)/2 == a/4, i.e. a = 4;
    # at a = 1 they are 0.035 apart, which the Monte Carlo oracle can resolve
    assert abs(LAMBDA_1 - LAMBDA_1_MISPRINT) > 0.03
    misprint_4 = (2 + 4 / 2) * normal_cdf(math.sqrt(4) / 2) + math.sqrt(4) * normal_pdf(4 / 4)
    assert lambda_max(4.0) == pytest.approx(misprint_4, rel=1e-14)
