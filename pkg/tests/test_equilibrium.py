import numpy as np
import pytest

from specband import equilibrium as eq
from specband import potential as pt
from specband.errors import DomainTooSmall, SingleBand, ValidationError
from specband.potential import BandSet, Potential

S3, S7 = np.sqrt(3.0), np.sqrt(7.0)
SEMI = Potential.square([0.0, -1.0], 1.0)
QUARTIC = Potential.square([-5.0, 0.0, 1.0], 1.0)
TWO_BANDS = BandSet((-S7, -S3, S3, S7))


@pytest.fixture(scope="module")
def semi_external():
    return eq.minimize_external_field(SEMI, grid_size=2000)


@pytest.fixture(scope="module")
def quartic_external():
    return eq.minimize_external_field(QUARTIC, grid_size=2000)


@pytest.fixture(scope="module")
def interval_fixed():
    return eq.minimize_fixed_support(BandSet((-2.0, 2.0)), 400)


@pytest.fixture(scope="module")
def two_band_fixed():
    return eq.minimize_fixed_support(TWO_BANDS, 400)


def test_measure_is_normalized(semi_external, two_band_fixed):
    for res in (semi_external, two_band_fixed):
        w = res.measure.weights
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_fixed_interval_is_arcsine(interval_fixed):
    m = interval_fixed.measure
    i = np.argmin(np.abs(m.nodes))
    assert m.weights[i] / m.widths[i] == pytest.approx(1 / (2 * np.pi), rel=2e-2)
    x = np.linspace(-1.9, 1.9, 39)
    assert np.allclose(m.tail(x), np.arccos(x / 2) / np.pi, atol=2e-3)


def test_fixed_interval_robin_constant(interval_fixed):
    assert interval_fixed.lagrange_constant == pytest.approx(0.0, abs=2e-3)


def test_fixed_two_bands_masses(two_band_fixed):
    assert two_band_fixed.measure.tail(0.0) == pytest.approx(0.5, abs=2e-3)


def test_fixed_two_bands_robin_constant(two_band_fixed):
    # capacity of the quartic bands is g**(1/(2q)) = 1
    assert two_band_fixed.lagrange_constant == pytest.approx(pt.robin_constants(QUARTIC)[1], abs=2e-3)


def test_fixed_support_residual(two_band_fixed):
    assert two_band_fixed.converged and two_band_fixed.el_residual_sup <= 5e-3


def test_semicircle_external(semi_external):
    res = semi_external
    h = res.measure.widths[0]
    assert res.support.q == 1
    assert np.allclose(res.support.edges, [-2, 2], atol=2 * h)
    assert res.measure.density_at(0.0) == pytest.approx(1 / np.pi, abs=2e-3)


def test_quartic_external_edges(quartic_external):
    res = quartic_external
    h = res.measure.widths[0]
    assert res.support.q == 2
    assert np.allclose(res.support.edges, [-S7, -S3, S3, S7], atol=2 * h)


def test_even_potential_gives_symmetric_measure(quartic_external):
    w = quartic_external.measure.weights
    assert np.max(np.abs(w - w[::-1])) <= 1e-8


def test_external_el_conditions(semi_external, quartic_external):
    for res in (semi_external, quartic_external):
        assert res.el_residual_sup <= 5e-3
        assert res.el_min_slack >= -5e-3


def test_energy_decreases(quartic_external, two_band_fixed):
    for res in (quartic_external, two_band_fixed):
        e = np.asarray(res.energy_history)
        assert e.size > 1 and np.all(np.diff(e) <= 1e-14 * np.abs(e[:-1]).max())


@pytest.mark.parametrize("pot", [SEMI, QUARTIC])
def test_robin_constant_of_external_problem(pot, request):
    res = request.getfixturevalue("semi_external" if pot is SEMI else "quartic_external")
    assert res.lagrange_constant == pytest.approx(pt.robin_constants(pot)[0], abs=2e-3)


def test_robin_constant_for_other_g():
    pot = SEMI.with_g(2.0)
    res = eq.minimize_external_field(pot, grid_size=1000)
    assert res.lagrange_constant == pytest.approx(pt.robin_constants(pot)[0], abs=2e-3)


def test_grid_refinement_halves_error(semi_external):
    exact = pt.robin_constants(SEMI)[0]
    coarse = eq.minimize_external_field(SEMI, grid_size=1000)
    err1 = abs(coarse.lagrange_constant - exact)
    err2 = abs(semi_external.lagrange_constant - exact)
    assert err2 < 0.5 * err1


def test_domain_too_small():
    with pytest.raises(DomainTooSmall) as info:
        eq.minimize_external_field(SEMI, domain=1.5, grid_size=1000)
    assert info.value.partial is not None


def test_grid_size_precondition():
    with pytest.raises(ValidationError):
        eq.minimize_external_field(SEMI, grid_size=500)
    with pytest.raises(ValidationError):
        eq.minimize_fixed_support(TWO_BANDS, 100)


def test_el_residual_exact_semicircle():
    edges = np.linspace(-2.5, 2.5, 2001)
    m = eq.DiscreteMeasure.from_density(lambda x: pt.density_N(SEMI, x), edges)
    sup, slack = eq.el_residual(m, SEMI)
    assert sup <= 1e-3 and slack >= -1e-3


def test_el_residual_exact_two_band_density():
    edges = np.linspace(-3.2, 3.2, 2001)
    m = eq.DiscreteMeasure.from_density(lambda x: pt.density_N(QUARTIC, x), edges)
    sup, slack = eq.el_residual(m, QUARTIC)
    assert sup <= 1e-3 and slack >= -1e-3


def test_el_residual_detects_non_equilibrium():
    edges = np.linspace(-2.0, 2.0, 1001)
    m = eq.DiscreteMeasure(edges, np.full(1000, 1e-3))
    assert eq.el_residual(m, SEMI)[0] > 0.05
    assert eq.el_residual(m, BandSet((-2.0, 2.0)))[0] > 0.05


def test_frequencies_symmetric(two_band_fixed, quartic_external):
    assert eq.frequencies(two_band_fixed).values[0] == pytest.approx(0.5, abs=1e-3)
    assert eq.frequencies(quartic_external).values[0] == pytest.approx(0.5, abs=1e-3)


def test_frequencies_single_band(interval_fixed):
    with pytest.raises(SingleBand):
        eq.frequencies(interval_fixed)


def test_fixed_support_on_external_support_matches_comb_map():
    pot = Potential.square([0.3, -3.0, 0.0, 1.0], 0.5)
    ext = eq.minimize_external_field(pot, grid_size=2000)
    assert ext.support.q == 3
    fixed = eq.minimize_fixed_support(ext.support, 400)
    alpha = np.asarray(eq.frequencies(fixed))
    beta = np.asarray(eq.frequencies(ext))
    exact = pt.frequencies_closed_form(pot)
    assert np.allclose(alpha, exact, atol=2e-3)
    assert np.allclose(beta, [2 / 3, 1 / 3], atol=2e-3)


@pytest.mark.parametrize("pot", [SEMI, QUARTIC, Potential.square([0.3, -3.0, 0.0, 1.0], 0.5)])
def test_check_nnu_closed_form(pot):
    assert eq.check_nnu(pot, order=32) <= 1e-3


def test_check_nnu_small_g_shrinks_to_zeros():
    small = QUARTIC.with_g(1e-4).bands
    zeros = pt.real_roots(QUARTIC.coeffs)
    assert small.q == 2
    assert np.max(np.abs(0.5 * (small.a + small.b) - zeros)) < 1e-3
    assert np.max(small.b - small.a) < 0.05


def test_lyapunov_identity_examples():
    assert eq.lyapunov_potential_identity(SEMI, [0.0]) == pytest.approx(0.0, abs=1e-14)
    assert eq.lyapunov_potential_identity(SEMI, [1.0]) <= 1e-2


@pytest.mark.parametrize("pot", [SEMI, QUARTIC])
def test_lyapunov_identity_on_bands_and_edges(pot):
    bands = pot.bands
    lam = np.concatenate([np.linspace(a, b, 7) for a, b in bands.intervals])
    assert eq.lyapunov_potential_identity(pot, lam) <= 1e-2


def test_discrete_measure_from_tail_round_trip():
    edges = np.linspace(-2.0, 2.0, 401)
    m = eq.DiscreteMeasure.from_tail(lambda x: pt.tail_functions(SEMI, x)[0], edges)
    assert m.total_mass == pytest.approx(1.0, abs=1e-12)
    assert m.integrate(lambda x: x * x) == pytest.approx(1.0, abs=1e-4)


def test_project_simplex():
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = rng.normal(size=30)
        p = eq.project_simplex(c)
        assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-14)
        # optimality: c - p is constant on the support
        d = (c - p)[p > 0]
        assert np.ptp(d) < 1e-12


def test_check_nnu_numeric_general_quartic():
    # same quartic written as a general polynomial; every g' node is solved
    # numerically, so only a coarse bound is meaningful at 4 nodes
    pot = Potential.poly([6.25, 0.0, -2.5, 0.0, 0.25])
    assert eq.check_nnu(pot, order=4, method="numeric", grid_size=1000) <= 2e-2
