import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specband import equilibrium as eq
from specband import orthopoly
from specband import potential as pt
from specband import riemann as rm
from specband.errors import PoorFit, ValidationError
from specband.potential import BandSet, Potential

S3, S7 = np.sqrt(3.0), np.sqrt(7.0)
QUARTIC = Potential.square([-5.0, 0.0, 1.0], 1.0)
SYMMETRIC = rm.surface_from_bands(QUARTIC.bands)
ASYMMETRIC = rm.surface_from_bands(BandSet((-3.0, -1.0, 0.0, 2.0)))
GENUS2 = rm.surface_from_bands(BandSet((-3.0, -2.0, -1.0, 0.5, 1.0, 2.5)))
PERIOD2_R = np.array([(S7 + S3) / 2, (S7 - S3) / 2])


def test_genus_zero_surface():
    s = rm.surface_from_bands(BandSet((-2.0, 2.0)))
    assert s.genus == 0 and s.U.size == 0
    assert s.l_sigma == pytest.approx(0.0, abs=1e-14)
    assert rm.rie_relation_check(s) == 0.0


def test_genus_zero_capacity_scaling():
    s = rm.surface_from_bands(BandSet((-1.0, 1.0)))
    assert s.capacity == pytest.approx(0.5, abs=1e-14)


def test_symmetric_frequency():
    assert SYMMETRIC.U[0] == pytest.approx(0.5, abs=1e-12)
    assert SYMMETRIC.U[0] == pytest.approx(pt.frequencies_closed_form(QUARTIC)[0], abs=1e-8)


def test_robin_constant_of_square_bands():
    # capacity of sigma_g is g**(1/(2q)); here g = 1
    assert SYMMETRIC.l_sigma == pytest.approx(0.0, abs=1e-10)
    s = rm.surface_from_bands(QUARTIC.with_g(0.5).bands)
    assert s.l_sigma == pytest.approx(pt.robin_constants(QUARTIC.with_g(0.5))[1], abs=1e-10)


def test_frequencies_match_fixed_support_equilibrium():
    for s in (ASYMMETRIC, GENUS2):
        fixed = eq.minimize_fixed_support(s.bands, 400)
        alpha = np.asarray(eq.frequencies(fixed))
        assert np.allclose(s.U, alpha, atol=2e-3)
        assert np.allclose(rm.frequencies_from_surface(s), s.U, atol=1e-10)


def test_im_tau_positive_definite():
    for s in (SYMMETRIC, ASYMMETRIC, GENUS2):
        assert s.min_imag_eig() > 0


@given(st.lists(st.floats(0.2, 2.0), min_size=5, max_size=5))
@settings(max_examples=25, deadline=None)
def test_im_tau_positive_definite_random(lengths):
    edges = np.cumsum([-4.0] + lengths)
    s = rm.surface_from_bands(BandSet(tuple(edges[:6] if edges.size >= 6 else edges[:4])))
    assert s.min_imag_eig() > 0
    assert rm.rie_relation_check(s) <= 1e-7


def test_riemann_relation():
    assert rm.rie_relation_check(SYMMETRIC) <= 1e-8
    assert rm.rie_relation_check(ASYMMETRIC) <= 1e-7
    assert rm.rie_relation_check(GENUS2) <= 1e-7


def test_quadrature_refinement_stable():
    fine = rm.surface_from_bands(ASYMMETRIC.bands, nodes=400, tail_nodes=800)
    assert np.max(np.abs(fine.tau - ASYMMETRIC.tau)) < 1e-9
    assert np.max(np.abs(fine.U - ASYMMETRIC.U)) < 1e-9
    assert np.max(np.abs(fine.u_inf - ASYMMETRIC.u_inf)) < 1e-9


def test_theta_scalar_series():
    expected = sum(np.exp(-np.pi * m * m) for m in range(-10, 11))
    assert rm.theta([0.0], np.array([[1j]])).value == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx(1.0864348, abs=1e-7)


def test_theta_periodic_and_even():
    rng = np.random.default_rng(4)
    for s in (ASYMMETRIC, GENUS2):
        g = s.genus
        for _ in range(50):
            x = rng.uniform(-1, 1, g)
            t = rm.theta(x, s).value
            assert abs(rm.theta(-x, s).value - t) <= 1e-12 * max(1, abs(t))
            e = np.zeros(g)
            e[rng.integers(g)] = 1.0
            assert abs(rm.theta(x + e, s).value - t) <= 1e-12 * max(1, abs(t))


def test_theta_dimension_mismatch():
    with pytest.raises(ValidationError):
        rm.theta([0.0, 0.1], SYMMETRIC)


def test_coefficient_map_genus_zero():
    s = rm.surface_from_bands(BandSet((-2.0, 2.0)))
    assert rm.coefficient_map_R(s, []) == pytest.approx(1.0, abs=1e-14)


def test_coefficient_map_real_and_positive():
    rng = np.random.default_rng(6)
    for s in (ASYMMETRIC, GENUS2):
        vals = [rm.coefficient_map_R(s, rng.uniform(0, 1, s.genus)) for _ in range(30)]
        assert np.all(np.asarray(vals) > 0)


def test_period_two_orbit_matches_closed_form():
    x, res = rm.shift_equivalence_fit(SYMMETRIC, np.tile(PERIOD2_R, 3))
    assert res <= 1e-6
    orbit = rm.orbit(SYMMETRIC, x, 4)
    assert np.allclose(np.sort(orbit[:2]), np.sort(PERIOD2_R**2), atol=1e-6)
    assert np.allclose(orbit[:2], orbit[2:], atol=1e-12)


def test_telescoping_identity():
    s = ASYMMETRIC
    alpha = np.array([0.2137])
    x = np.array([0.31])
    p = 7
    th = lambda y: rm.theta(y, s).value
    lhs = sum(np.log(abs(th(x + (k + 1) * alpha) * th(x + (k - 1) * alpha) / th(x + k * alpha) ** 2))
              for k in range(p))
    rhs = np.log(abs(th(x + p * alpha) * th(x - alpha) / (th(x) * th(x + (p - 1) * alpha))))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_shift_fit_orthopoly_windows():
    res = []
    for n in (20, 40, 60):
        table = orthopoly.stieltjes_recurrence(QUARTIC, n, n + 6)
        res.append(rm.shift_equivalence_fit(SYMMETRIC, table.r[n:n + 6])[1])
    assert res[2] <= 5e-2
    assert res[0] > res[1] > res[2]


def test_shift_fit_wrong_torus():
    with pytest.raises(PoorFit):
        rm.shift_equivalence_fit(SYMMETRIC, 2 * np.tile(PERIOD2_R, 3))


def test_shift_fit_genus_two_self_consistent():
    x0 = np.array([0.23, 0.61])
    targets = np.sqrt(rm.orbit(GENUS2, x0, 8))
    x, res = rm.shift_equivalence_fit(GENUS2, targets)
    assert res <= 1e-6
