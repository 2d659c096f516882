import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from muskat_lab.lemma_oracles import (
    CLOCK_LINK,
    QuadratureError,
    SlopeTriple,
    compare,
    construct_crossing_profile,
    crossing_bound_chain,
    dissipation_bound,
    dissipation_floor,
    evaluate_chain,
    kiselev_integral_constant,
    kiselev_integrand,
    monotonicity_gap,
    rearrangement_integrals,
    verify_monotonicity,
)
from muskat_lab.modulus import DomainError, Modulus, nu_of, omega_of


# -- slope inequality ----------------------------------------------------------


@st.composite
def box_triples(draw):
    L = draw(st.floats(1.0, 20.0))
    nu = nu_of(L)
    ah = draw(st.floats(-nu, L))
    al = draw(st.floats(-L, min(nu, ah)))
    b = draw(st.floats(-nu, nu))
    return L, SlopeTriple(ah, al, b)


@given(box_triples())
@settings(max_examples=500)
def test_gap_nonnegative_on_box(case):
    L, t = case
    assert monotonicity_gap(t, L) >= -1e-12


@given(box_triples())
@settings(max_examples=200)
def test_gap_invariant_under_mirror(case):
    L, t = case
    assert monotonicity_gap(t.mirrored(), L) == pytest.approx(monotonicity_gap(t, L), abs=1e-15)
    c = t.canonical()
    assert c.alpha_hi + c.alpha_lo >= 0


def test_gap_rejects_outside_box():
    with pytest.raises(DomainError):
        monotonicity_gap(SlopeTriple(0.0, 0.5, 0.0), 2.0)
    with pytest.raises(DomainError):
        monotonicity_gap(SlopeTriple(1.0, 0.0, 1.0), 2.0)
    with pytest.raises(DomainError):
        monotonicity_gap(SlopeTriple(1.0, 0.0, 0.0), 0.5)


def _quotient_min_oracle(L):
    """Global minimum of the difference quotient by differential evolution."""
    nu = nu_of(L)

    def q(x):
        ah, al, b = x
        if ah - al < 1e-9:
            return 1e3
        w = lambda a: (a * a + 1.0) ** -1.5
        return ((ah + b) * w(ah) - (al + b) * w(al)) / (ah - al)

    res = optimize.differential_evolution(q, [(-nu, L), (-L, nu), (-nu, nu)], seed=3, tol=1e-12, polish=True)
    return res.fun, res.x


@pytest.mark.parametrize("L", [1.0, 2.0, 5.0])
def test_sweep_agrees_with_global_optimizer(L):
    rep = verify_monotonicity(L, resolution=60)
    fun, x = _quotient_min_oracle(L)
    assert rep.min_quotient == pytest.approx(fun, rel=1e-6)
    mirrored = SlopeTriple(*x).canonical().as_tuple()
    np.testing.assert_allclose(rep.quotient_argmin, mirrored, atol=1e-4)


@pytest.mark.parametrize("L", [1.0, 2.0, 5.0, 10.0])
def test_monotonicity_sweep_extremal_corner(L):
    rep = verify_monotonicity(L, resolution=40)
    nu = nu_of(L)
    assert rep.passed
    assert rep.min_gap >= -1e-12
    assert rep.min_quotient >= rep.rhs_coefficient
    np.testing.assert_allclose(rep.quotient_argmin, (L, nu, nu), rtol=1e-9)
    assert rep.rhs_coefficient == pytest.approx(nu / L, rel=1e-14)


def test_monotonicity_values_frozen():
    # from the 200-point sweep; min quotient is attained at (L, nu, nu)
    rep = verify_monotonicity(2.0, resolution=200)
    assert rep.min_quotient == pytest.approx(0.033805, rel=1e-4)
    assert rep.rhs_coefficient == pytest.approx(0.029814, rel=1e-4)
    L, nu = 2.0, nu_of(2.0)
    direct = ((L + nu) * (L * L + 1) ** -1.5 - 2 * nu * (nu * nu + 1) ** -1.5) / (L - nu)
    assert rep.min_quotient == pytest.approx(direct, rel=1e-12)


def test_monotonicity_rejects_small_L():
    with pytest.raises(DomainError):
        verify_monotonicity(0.9)
    with pytest.raises(ValueError):
        verify_monotonicity(2.0, resolution=1)


# -- small-xi constant ---------------------------------------------------------


def test_kiselev_constant_matches_binomial_series():
    # the integrand is sum_k 2 C(3/2, 2k) (2 eta)^(2k) / eta^2 on [0, 1/2];
    # integrating term by term gives sum_k 4 C(3/2, 2k) / (2k - 1)
    with mpmath.workdps(30):
        ref = float(mpmath.nsum(lambda k: 4 * mpmath.binomial(mpmath.mpf(1.5), 2 * k) / (2 * k - 1), [1, mpmath.inf]))
    val = kiselev_integral_constant()
    assert val == pytest.approx(ref, abs=1e-10)
    assert ref == pytest.approx(1.540185602624254, abs=1e-14)
    assert 1.5 < val < 1.6


def test_kiselev_integrand_series_branch_continuous():
    a = kiselev_integrand(1e-3 * (1 - 1e-9))
    b = kiselev_integrand(1e-3 * (1 + 1e-9))
    assert a == pytest.approx(b, rel=1e-6)


def test_kiselev_rejects_bad_tol():
    with pytest.raises(ValueError):
        kiselev_integral_constant(0.0)


# -- rearrangement integrals ---------------------------------------------------


def _rearrangement_oracle(m, t, xi):
    """Both integrals straight from omega in 40-digit arithmetic, split at every kink."""
    with mpmath.workdps(40):
        nu = mpmath.mpf(m.nu)
        j = mpmath.mpf(m.j(t))
        xi_ = mpmath.mpf(xi)

        def w(r):
            if r <= 2:
                return j + nu * (r - r**1.5 / mpmath.mpf(2) ** 1.5)
            if r <= 2 / nu:
                return j + nu * r / 2
            return j + 1

        knots = (mpmath.mpf(2), 2 / nu)
        near_pts = sorted({mpmath.mpf(0), xi_ / 2} | {abs(k - xi_) / 2 for k in knots if abs(k - xi_) / 2 < xi_ / 2})
        # Gauss-Legendre keeps nodes away from eta = 0, where the second difference cancels
        near = mpmath.quad(lambda e: (w(xi_ + 2 * e) + w(xi_ - 2 * e) - 2 * w(xi_)) / e**2, near_pts, method="gauss-legendre")
        far_pts = sorted({xi_ / 2} | {(k - xi_) / 2 for k in knots if (k - xi_) / 2 > xi_ / 2} | {(k + xi_) / 2 for k in knots})
        far = mpmath.quad(lambda e: (w(2 * e + xi_) - w(2 * e - xi_) - 2 * w(xi_)) / e**2, far_pts + [mpmath.inf])
    return float(near), float(far)


@pytest.mark.parametrize("t_frac", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("xi", [0.3, 1.0, 1.5, 5.0])
def test_rearrangement_integrals_match_direct_quadrature(t_frac, xi):
    m = Modulus.from_L(2.0)
    t = t_frac * m.clock.tstar
    r = rearrangement_integrals(m, t, xi)
    near, far = _rearrangement_oracle(m, t, xi)
    assert r.near == pytest.approx(near, rel=1e-6, abs=1e-9)
    assert r.far == pytest.approx(far, rel=1e-6, abs=1e-9)


def test_rearrangement_values_frozen():
    m = Modulus.from_L(2.0)
    assert dissipation_bound(m, 0.0, 1.0).value == pytest.approx(-4.0784, abs=1e-4)
    assert dissipation_bound(m, 0.0, 1.5).value == pytest.approx(-2.7168, abs=1e-4)
    assert dissipation_bound(m, m.clock.t1, 1.0).value == pytest.approx(-0.19768, abs=1e-5)
    assert dissipation_bound(m, m.clock.t1, 1.5).value == pytest.approx(-0.1296, abs=1e-4)


def test_rearrangement_knots_diverge():
    m = Modulus.from_L(2.0)
    assert rearrangement_integrals(m, 0.0, 2.0).near == math.inf
    assert rearrangement_integrals(m, 0.0, 2.0 / m.nu).near == -math.inf
    with pytest.raises(DomainError):
        rearrangement_integrals(m, 0.0, 0.0)


@pytest.mark.parametrize("L", [2.0, 5.0])
def test_dissipation_bound_small_xi(L):
    m = Modulus.from_L(L)
    for xi in np.linspace(0.01, 1.0, 25):
        rep = dissipation_bound(m, 0.0, float(xi))
        assert rep.holds, (xi, rep.value, rep.bound)


def test_dissipation_bound_fails_near_convex_knot_late():
    # not asserted by the oracle suite: near r = 2 the profile is convex and,
    # once j is small, the integrals exceed the floor
    m = Modulus.from_L(2.0)
    rep = dissipation_bound(m, m.clock.t1, 1.99)
    assert not rep.holds
    assert rep.value > 0


def test_dissipation_floor_forms():
    nu = nu_of(2.0)
    j = 0.3
    assert dissipation_floor(nu, j) == -min(nu * j + nu * nu / 2, j ** (1 / 3) * nu ** (2 / 3))
    # the two printed forms of the second branch coincide
    assert (j * nu * nu) ** (1 / 3) == pytest.approx(j ** (1 / 3) * nu ** (2 / 3), rel=1e-14)
    assert dissipation_floor(nu, 0.0) == 0.0


def test_dissipation_domain():
    m = Modulus.from_L(2.0)
    with pytest.raises(DomainError):
        dissipation_bound(m, 0.0, 2.0 / m.nu)
    with pytest.raises(DomainError):
        dissipation_bound(m, 0.0, -1.0)


# -- crossing fixture ----------------------------------------------------------


@given(
    st.floats(0.05, 10.0),
    st.floats(0.0, 1.0),
    st.lists(st.floats(-40.0, 40.0), min_size=4, max_size=4),
)
@settings(max_examples=300, deadline=None)
def test_fixture_stays_below_modulus(xi, t_frac, pts):
    m = Modulus.from_L(2.0)
    fx = construct_crossing_profile(m, t_frac * m.clock.tstar, xi, samples=10)
    x = np.array(pts[:2])
    y = np.array(pts[2:])
    assert fx.crossing_margin(x, y) >= -1e-12


@pytest.mark.parametrize("xi", [0.25, 1.0, 1.5])
def test_fixture_touches_at_pair(xi):
    m = Modulus.from_L(2.0)
    t = m.clock.t1
    fx = construct_crossing_profile(m, t, xi, direction=(1.0, 2.0))
    assert fx(fx.x0) - fx(fx.y0) == pytest.approx(omega_of(m, t, xi), rel=1e-14)
    assert fx.crossing_margin(fx.x0, fx.y0) == pytest.approx(0.0, abs=1e-15)
    assert fx.worst_margin >= -1e-12
    assert fx.scalar(*fx.x0) == pytest.approx(float(fx(fx.x0)), rel=1e-14)


def test_fixture_gradient_matches_finite_differences():
    m = Modulus.from_L(2.0)
    fx = construct_crossing_profile(m, 0.0, 1.0, direction=(0.6, 0.8))
    h = 1e-6
    for p in (fx.x0, fx.y0):
        g = [(fx.scalar(*(p + h * e)) - fx.scalar(*(p - h * e))) / (2 * h) for e in np.eye(2)]
        # the cone tip of the profile term makes the centred difference one-sided-average
        np.testing.assert_allclose(g, fx.gradient(), atol=1e-6)


def test_fixture_scaling():
    m = Modulus.from_L(2.0)
    a = construct_crossing_profile(m, 0.0, 1.0)
    b = construct_crossing_profile(m, 0.0, 1.0, scale=4.0)
    z = np.array([0.3, -0.2])
    assert b(z / 4.0) == pytest.approx(a(z) / 4.0, rel=1e-14)


def test_fixture_domain():
    m = Modulus.from_L(2.0)
    with pytest.raises(DomainError):
        construct_crossing_profile(m, 0.0, 0.0)
    with pytest.raises(DomainError):
        construct_crossing_profile(m, 0.0, 2.0 / m.nu)


# -- chain ---------------------------------------------------------------------


def test_compare_semantics():
    assert compare("a", 1.0005, 1.0, rel=1e-3).holds
    assert not compare("a", 1.002, 1.0, rel=1e-3).holds
    assert not compare("a", 1.0, 1.0, strict=True).holds
    links = evaluate_chain(-2.0, -1.0, -0.5, -0.1, -1e-5, 0.5)
    assert [l.name for l in links][-1] == CLOCK_LINK
    assert all(l.holds for l in links[:3])
    assert not links[3].holds


@pytest.fixture(scope="module")
def chain_xi1():
    m = Modulus.from_L(2.0)
    return crossing_bound_chain(construct_crossing_profile(m, m.clock.t1, 1.0))


def test_chain_dual_routes_agree(chain_xi1):
    assert chain_xi1.dual_ok
    assert max(chain_xi1.dual_rel_diff.values()) < 1e-6


def test_chain_holds_without_breakthrough(chain_xi1):
    assert chain_xi1.holds
    assert not chain_xi1.breakthrough_possible
    d = chain_xi1.as_dict()
    assert d["holds"] and not d["breakthrough_possible"]


def test_chain_values_frozen(chain_xi1):
    assert chain_xi1.adaptive["i_f"] == pytest.approx(-6.3202, abs=1e-3)
    assert chain_xi1.adaptive["delta_dt"] == pytest.approx(-6.3067, abs=1e-3)
    assert chain_xi1.r_omega == pytest.approx(-0.19768, abs=1e-5)
    assert chain_xi1.K == pytest.approx(nu_of(2.0) / 2.0, rel=1e-14)


def test_chain_rejects_bad_cutoff():
    m = Modulus.from_L(2.0)
    fx = construct_crossing_profile(m, 0.0, 1.0)
    with pytest.raises(DomainError):
        crossing_bound_chain(fx, rho0=0.0)
    with pytest.raises(DomainError):
        crossing_bound_chain(fx, rho0=1.0)
