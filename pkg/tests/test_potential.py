import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specband import potential as pt
from specband.errors import EdgeSingularity, NotRegular, OutsideSpectrum, ValidationError
from specband.potential import BandSet, Potential

S3, S5, S7 = np.sqrt(3.0), np.sqrt(5.0), np.sqrt(7.0)
SEMI = Potential.square([0.0, -1.0], 1.0)
QUARTIC = Potential.square([-5.0, 0.0, 1.0], 1.0)
CUBIC = Potential.square([0.3, -3.0, 0.0, 1.0], 0.5)   # asymmetric three bands


def test_bands_semicircle():
    assert np.allclose(SEMI.bands.edges, [-2, 2], atol=1e-12)


def test_bands_quartic():
    assert np.allclose(QUARTIC.bands.edges, [-S7, -S3, S3, S7], atol=1e-12)


def test_bands_scaling():
    assert np.allclose(SEMI.with_g(0.25).bands.edges, [-1, 1], atol=1e-12)


def test_real_roots_distinct_and_sorted():
    # (x-1)(x+2)(x-3) = x^3 - 2x^2 - 5x + 6
    assert np.allclose(pt.real_roots([6, -5, -2, 1]), [-2, 1, 3], atol=1e-12)


def test_potential_rejects_bad_input():
    with pytest.raises(ValidationError):
        Potential.square([0.0, -1.0], -1.0)
    with pytest.raises(ValidationError):
        Potential.square([0.0, -2.0], 1.0)      # leading coefficient must be +-1
    with pytest.raises(ValidationError):
        Potential.poly([0.0, 0.0, 0.0, 1.0])    # odd degree is not confining
    with pytest.raises(ValidationError):
        Potential.from_spec({"kind": "square", "v": [0, -1], "h": 2})


def test_potential_rejects_touching_bands():
    # v = x^2 - 2, g = 1: v + 2 has a double root, two bands touch
    with pytest.raises(NotRegular):
        Potential.square([-2.0, 0.0, 1.0], 1.0)


def test_spec_round_trip():
    p = Potential.from_spec(QUARTIC.to_spec())
    assert p == QUARTIC


def test_density_N_examples():
    assert pt.density_N(SEMI, 0.0) == pytest.approx(1 / np.pi, abs=1e-14)
    assert pt.density_N(SEMI, 2.0) == pytest.approx(0.0, abs=1e-7)
    assert pt.density_N(QUARTIC, S5) == pytest.approx(S5 / np.pi, rel=1e-12)


def test_density_nu_examples():
    assert pt.density_nu(SEMI, 0.0) == pytest.approx(1 / (2 * np.pi), abs=1e-14)
    assert pt.density_nu(SEMI, np.sqrt(2)) == pytest.approx(1 / (np.pi * np.sqrt(2)), rel=1e-12)


def test_density_nu_at_edge_raises():
    with pytest.raises(EdgeSingularity):
        pt.density_nu(SEMI, 2.0)


@pytest.mark.parametrize("pot", [SEMI, QUARTIC, CUBIC])
def test_densities_are_probability_measures(pot):
    assert pt.integrate_bands(lambda x: pt.density_N(pot, x), pot.bands) == pytest.approx(1, abs=1e-8)
    assert pt.integrate_bands(lambda x: pt.density_nu(pot, x), pot.bands) == pytest.approx(1, abs=1e-8)


def test_comb_theta_plus_examples():
    assert pt.comb_theta_plus(SEMI, 0.0) == pytest.approx(-np.pi / 2, abs=1e-14)
    assert pt.comb_theta_plus(SEMI, 2.0) == pytest.approx(0.0, abs=1e-12)
    assert pt.comb_theta_plus(QUARTIC, S7) == pytest.approx(0.0, abs=1e-12)
    assert pt.comb_theta_plus(QUARTIC, -S7) == pytest.approx(-2 * np.pi, abs=1e-12)


def test_comb_theta_plus_outside_spectrum_raises():
    with pytest.raises(OutsideSpectrum):
        pt.comb_theta_plus(QUARTIC, 0.0)


@pytest.mark.parametrize("pot", [SEMI, QUARTIC, CUBIC])
def test_theta_monotone_with_total_variation_q_pi(pot):
    total = 0.0
    for a, b in pot.bands.intervals:
        lam = np.linspace(a, b, 401)
        t = pt.comb_theta_plus(pot, lam)
        assert np.all(np.diff(t) > 0)
        total += t[-1] - t[0]
    # arccos near +-1 turns a rounding error d in u into sqrt(2 d)
    assert total == pytest.approx(pot.q * np.pi, abs=1e-7)


def test_gap_values_of_comb_map():
    gaps = QUARTIC.bands.gaps
    lam = np.linspace(gaps[0][0], gaps[0][1], 51)[1:-1]
    cm = pt.comb_map(QUARTIC, lam)
    assert np.allclose(cm.theta_plus / np.pi, np.round(cm.theta_plus / np.pi), atol=1e-14)
    assert np.all(cm.kappa >= 0) and np.all(cm.kappa <= cm.heights[0] + 1e-12)


def test_counting_functions_examples():
    N, nu = pt.counting_functions(SEMI, 0.0)
    assert N == pytest.approx(0.5, abs=1e-14) and nu == pytest.approx(0.5, abs=1e-14)
    N, nu = pt.counting_functions(QUARTIC, S3)
    assert N == pytest.approx(0.5, abs=1e-12) and nu == pytest.approx(0.5, abs=1e-12)


def test_counting_at_band_starts_cubic():
    pot = CUBIC
    q = pot.q
    for l, a in enumerate(pot.bands.a[1:], start=1):
        N, nu = pt.counting_functions(pot, a)
        assert N == pytest.approx((q - l) / q, abs=1e-12)
        assert nu == pytest.approx((q - l) / q, abs=1e-12)


def test_frequencies_closed_form_quartic():
    assert np.allclose(pt.frequencies_closed_form(QUARTIC), [0.5], atol=1e-12)
    assert pt.frequencies_closed_form(SEMI).size == 0


@pytest.mark.parametrize("pot", [SEMI, QUARTIC])
def test_counting_functions_match_integrated_densities(pot):
    rng = np.random.default_rng(3)
    bands = pot.bands
    for _ in range(100):
        l = rng.integers(bands.q)
        a, b = bands.intervals[l]
        lam = a + (b - a) * rng.uniform(0.01, 0.99)
        N, nu = pt.counting_functions(pot, lam)
        upper = BandSet.from_intervals([(lam, b)] + list(bands.intervals[l + 1:]))
        # the density on (lam, b] has a square-root edge at lam only, so the
        # cosine rule still converges; compare against the tail functions
        iN = pt.integrate_bands(lambda x: pt.density_N(pot, x), upper, 400)
        inu = pt.integrate_bands(lambda x: pt.density_nu(pot, x), upper, 400)
        assert iN == pytest.approx(N, abs=1e-8)
        assert inu == pytest.approx(nu, abs=1e-6)


def test_phi_gap_examples():
    assert pt.phi_gap_value(SEMI, 0.0) == 0.0
    kappa = np.arccosh(2.5)
    assert pt.phi_gap_value(QUARTIC, 0.0) == pytest.approx(np.sinh(2 * kappa) / 2 - kappa, rel=1e-12)


def test_phi_gap_continuous_at_edge():
    eps = np.array([1e-4, 1e-6, 1e-8])
    vals = pt.phi_gap_value(QUARTIC, S3 - eps)
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-9


@given(st.floats(-4.0, 4.0))
@settings(max_examples=200, deadline=None)
def test_phi_gap_dichotomy(lam):
    val = pt.phi_gap_value(QUARTIC, lam)
    if QUARTIC.bands.contains(lam):
        assert val == 0.0
    else:
        assert val > 0.0


def test_phi_gap_strictly_positive_at_gap_midpoints():
    pot = CUBIC
    mids = [0.5 * (a + b) for a, b in pot.bands.gaps]
    assert np.all(pt.phi_gap_value(pot, np.array(mids)) > 0)


@pytest.mark.parametrize("pot", [SEMI, QUARTIC, CUBIC])
def test_density_ratio_identity(pot):
    lam = np.concatenate([np.linspace(a, b, 22)[1:-1] for a, b in pot.bands.intervals])
    lhs = pt.density_N(pot, lam)
    rhs = pt.density_nu(pot, lam) * np.abs(pot.v(lam) ** 2 - 4 * pot.g) / (2 * pot.g)
    assert np.allclose(lhs, rhs, atol=1e-10, rtol=0)


@given(st.floats(0.05, 5.0))
@settings(max_examples=30, deadline=None)
def test_semicircle_edges_scale_with_g(g):
    assert np.allclose(SEMI.with_g(g).bands.edges, [-2 * np.sqrt(g), 2 * np.sqrt(g)], atol=1e-10)


def test_robin_constants_semicircle():
    lV, ls = pt.robin_constants(SEMI)
    assert lV == pytest.approx(-1.0) and ls == pytest.approx(0.0)


def test_bandset_queries():
    b = BandSet((-3.0, -1.0, 0.0, 2.0))
    assert b.q == 2 and b.gaps == [(-1.0, 0.0)]
    assert list(b.band_index(np.array([-2.0, -0.5, 1.0]))) == [1, 0, 2]
    assert b.contains(-1.0) and not b.contains(-0.5)
    with pytest.raises(ValidationError):
        BandSet((0.0, -1.0))
