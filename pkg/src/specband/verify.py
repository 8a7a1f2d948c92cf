"""Acceptance checks shared by ``specband verify-all`` and the test suite.

Every check returns a ``CriterionResult`` carrying the measured numbers, so
callers can print one pass/fail line per criterion.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import equilibrium as eq
from . import jacobi, orthopoly, riemann, rmt
from . import potential as pt
from .potential import BandSet, Potential

S3, S7 = np.sqrt(3.0), np.sqrt(7.0)
SEMICIRCLE = Potential.square([0.0, -1.0], 1.0)          # V = lam**2 / 2
QUARTIC = Potential.square([-5.0, 0.0, 1.0], 1.0)        # V = (lam**2 - 5)**2 / 4
PERIOD2_R = ((S7 + S3) / 2, (S7 - S3) / 2)


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    elapsed: float = 0.0

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"[{mark}] {self.number:2d} {self.title}: {self.detail} ({self.elapsed:.1f} s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.elapsed = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _edges_within(found, expected, h, cells=2):
    return len(found) == len(expected) and np.max(np.abs(np.subtract(found, expected))) <= cells * h


@_timed
def semicircle_equilibrium() -> CriterionResult:
    t0 = time.perf_counter()
    L, N = 3.0, 2000
    res = eq.minimize_external_field(SEMICIRCLE, L, N)
    elapsed = time.perf_counter() - t0
    h = 2 * L / N
    dens = float(res.measure.density_at(0.0))
    ok = (abs(dens - 1 / np.pi) <= 2e-3 and _edges_within(res.support.edges, (-2.0, 2.0), h)
          and elapsed < 60)
    return CriterionResult(1, "semicircle equilibrium", ok,
                           f"density(0)-1/pi={dens - 1 / np.pi:.2e}, edges={np.round(res.support.edges, 4).tolist()}, "
                           f"cell={h:.4f}, solve={elapsed:.1f}s")


@_timed
def two_band_support() -> CriterionResult:
    L, N = 3.2, 2000
    res = eq.minimize_external_field(QUARTIC, L, N)
    h = 2 * L / N
    masses = [float(res.measure.tail(a) - res.measure.tail(b)) for a, b in res.support.intervals]
    ok = (_edges_within(res.support.edges, (-S7, -S3, S3, S7), h)
          and all(abs(m - 0.5) <= 2e-3 for m in masses))
    return CriterionResult(2, "two-band support", ok,
                           f"edges={np.round(res.support.edges, 4).tolist()}, cell={h:.4f}, "
                           f"band masses={np.round(masses, 6).tolist()}")


@_timed
def hermite_recurrence() -> CriterionResult:
    t0 = time.perf_counter()
    table = orthopoly.stieltjes_recurrence(SEMICIRCLE, 40, 60)
    elapsed = time.perf_counter() - t0
    l = np.arange(61)
    err = float(np.max(np.abs(table.r - np.sqrt((l + 1) / 40))))
    ok = err <= 1e-10 and elapsed < 10
    return CriterionResult(3, "Hermite recurrence", ok, f"max |r_l - sqrt((l+1)/40)| = {err:.2e}, {elapsed:.2f}s")


@_timed
def hill_identity() -> CriterionResult:
    hill = jacobi.hill_discriminant(jacobi.JacobiOperator.periodic(PERIOD2_R, [0.0, 0.0]))
    err = float(np.max(np.abs(np.subtract(hill.coeffs, [-2.5, 0.0, 0.5]))))
    return CriterionResult(4, "Hill identity", err <= 1e-10, f"coefficient error {err:.2e}")


@_timed
def ids_identity() -> CriterionResult:
    t0 = time.perf_counter()
    op = jacobi.periodic_from_square(QUARTIC)
    lam = np.linspace(-3.0, 3.0, 6001)
    k = jacobi.ids_estimate(op, 2000, lam)
    nu = pt.tail_functions(QUARTIC, lam)[1]
    elapsed = time.perf_counter() - t0
    dist = float(np.max(np.abs(k - nu)))
    return CriterionResult(5, "IDS identity", dist <= 5e-3 and elapsed < 30,
                           f"sup |k_m - nu_g| = {dist:.2e} at m=2000, {elapsed:.2f}s")


@_timed
def nnu_identity() -> CriterionResult:
    d1 = eq.check_nnu(SEMICIRCLE, order=32)
    d2 = eq.check_nnu(QUARTIC, order=32)
    return CriterionResult(6, "N_g = average of nu_g'", max(d1, d2) <= 1e-3,
                           f"sup distance q=1: {d1:.2e}, q=2: {d2:.2e}")


@_timed
def riemann_relation() -> CriterionResult:
    d = [riemann.rie_relation_check(riemann.surface_from_bands(BandSet(e)))
         for e in ((-S7, -S3, S3, S7), (-3.0, -1.0, 0.0, 2.0))]
    return CriterionResult(7, "Riemann relation", max(d) <= 1e-7,
                           f"lattice distance symmetric {d[0]:.1e}, asymmetric {d[1]:.1e}")


@_timed
def isospectral_shift() -> CriterionResult:
    surface = riemann.surface_from_bands(QUARTIC.bands)
    _, res_periodic = riemann.shift_equivalence_fit(surface, list(PERIOD2_R) * 3)
    window = []
    for n in (20, 40, 60):
        table = orthopoly.stieltjes_recurrence(QUARTIC, n, n + 6)
        _, res = riemann.shift_equivalence_fit(surface, table.r[n:n + 6])
        window.append(res)
    ok = (res_periodic <= 1e-6 and window[-1] <= 5e-2
          and all(b < a for a, b in zip(window[:-1], window[1:])))
    return CriterionResult(8, "isospectral shift", ok,
                           f"periodic residual {res_periodic:.1e}; window residuals n=20,40,60: "
                           + ", ".join(f"{w:.2e}" for w in window))


@_timed
def gap_probability(seed: int = 2024, workers: int = 1) -> CriterionResult:
    t0 = time.perf_counter()
    interval = (-0.25, 0.25)
    fred = rmt.gap_probability(SEMICIRCLE, 8, interval).value
    sample = rmt.sample_loggas(SEMICIRCLE, 8, chains=4, sweeps=25000, seed=seed, workers=workers)
    freq, se = rmt.empty_interval_frequency(sample, interval)
    elapsed = time.perf_counter() - t0
    ok = abs(freq - fred) <= 3 * se and elapsed < 300 and sample.chains * sample.retained >= 100000
    return CriterionResult(9, "gap probability", ok,
                           f"Fredholm {fred:.5f}, MC {freq:.5f} +- {se:.5f} "
                           f"({sample.chains * sample.retained} configs), {elapsed:.1f}s")


@_timed
def covariance_order(seed: int = 77, workers: int = 1) -> CriterionResult:
    phi1 = {"kind": "resolvent", "z": [0.0, 2.0]}
    phi2 = {"kind": "resolvent", "z": [0.0, -2.0]}
    rows = rmt.covariance_scaling(SEMICIRCLE, phi1, phi2, [16, 32],
                                  {"chains": 4, "sweeps": 20000, "seed": seed, "workers": workers})
    a, b = rows
    ratio = (b["scaled"] / a["scaled"]).real
    # ratio band widened by two standard errors of the ratio
    rel = np.hypot(abs(a["scaled_se"]) / abs(a["scaled"]), abs(b["scaled_se"]) / abs(b["scaled"]))
    ratio_ok = 0.5 * (1 - 2 * rel) <= ratio <= 2.0 * (1 + 2 * rel)
    kern = rmt.kernel_covariance(SEMICIRCLE, 16, phi1, phi2)
    cross = abs(a["cov"] - kern) <= 3 * abs(a["se"])
    return CriterionResult(10, "covariance order n^-2", bool(ratio_ok and cross),
                           f"n^2 Cov: n=16 {a['scaled'].real:.5f} +- {abs(a['scaled_se']):.5f}, "
                           f"n=32 {b['scaled'].real:.5f} +- {abs(b['scaled_se']):.5f}, ratio {ratio:.3f}; "
                           f"kernel n^2 Cov(16) {256 * np.real(kern):.5f}")


@_timed
def thouless_euler_lagrange() -> CriterionResult:
    ops = [(SEMICIRCLE, jacobi.periodic_from_square(SEMICIRCLE), [3.0, -2.5, 4.0]),
           (QUARTIC, jacobi.periodic_from_square(QUARTIC), [0.0, 1.0, 3.0, -2.9])]
    in_band_zero = True
    worst = 0.0
    for pot, op, gap_pts in ops:
        inside = np.concatenate([np.linspace(a, b, 21) for a, b in pot.bands.intervals])
        gamma = jacobi.lyapunov_exponent(op, inside)
        in_band_zero &= bool(np.all(gamma == 0.0))
        worst = max(worst, jacobi.thouless_check(op, pot, gap_pts))
    return CriterionResult(11, "Thouless / Euler-Lagrange", in_band_zero and worst <= 1e-6,
                           f"in-band gamma exactly 0: {in_band_zero}; gap residual {worst:.1e}")


@_timed
def property_suites(seed: int = 11) -> CriterionResult:
    # orthonormality Gram matrix
    gram = 0.0
    for pot in (SEMICIRCLE, QUARTIC):
        _, basis = orthopoly.stieltjes_recurrence(pot, 40, 25, return_basis=True)
        gram = max(gram, float(np.max(np.abs(basis @ basis.T - np.eye(26)))))
    # theta periodicity and evenness
    surface = riemann.surface_from_bands(BandSet((-3.0, -2.0, -1.0, 0.5, 1.0, 2.5)))
    rng = np.random.default_rng(seed)
    th = 0.0
    for x in rng.random((50, 2)):
        t0 = riemann.theta(x, surface).value
        th = max(th, abs(riemann.theta(-x, surface).value - t0) / abs(t0),
                 abs(riemann.theta(x + np.array([1.0, 0.0]), surface).value - t0) / abs(t0),
                 abs(riemann.theta(x + np.array([0.0, 1.0]), surface).value - t0) / abs(t0))
    # Fredholm quadrature stability
    fred = abs(rmt.gap_probability(SEMICIRCLE, 8, (-0.5, 0.3), 40).raw
               - rmt.gap_probability(SEMICIRCLE, 8, (-0.5, 0.3), 80).raw)
    # seeded determinism
    a = rmt.sample_loggas(SEMICIRCLE, 6, chains=2, sweeps=500, seed=seed)
    b = rmt.sample_loggas(SEMICIRCLE, 6, chains=2, sweeps=500, seed=seed, workers=2)
    same = a.configs.tobytes() == b.configs.tobytes()
    ok = gram <= 1e-9 and th <= 1e-12 and fred <= 1e-8 and same
    return CriterionResult(12, "property suites", ok,
                           f"Gram {gram:.1e}, theta {th:.1e}, Fredholm 40->80 {fred:.1e}, "
                           f"MC bit-identical {same}")


CRITERIA = {
    1: semicircle_equilibrium,
    2: two_band_support,
    3: hermite_recurrence,
    4: hill_identity,
    5: ids_identity,
    6: nnu_identity,
    7: riemann_relation,
    8: isospectral_shift,
    9: gap_probability,
    10: covariance_order,
    11: thouless_euler_lagrange,
    12: property_suites,
}

SUITES = {
    "quick": [1, 2, 3, 4, 5, 6, 7, 8, 11, 12],
    "full": list(CRITERIA),
}


def run_criterion(number: int, workers: int = 1) -> CriterionResult:
    fn = CRITERIA[number]
    kwargs = {"workers": workers} if number in (9, 10) else {}
    try:
        return fn(**kwargs)
    except Exception as exc:  # a raised error is a failed criterion, reported as such
        return CriterionResult(number, fn.__name__.replace("_", " "), False, f"raised {exc!r}")


def run_suite(suite: str = "full", workers: int = 1) -> list[CriterionResult]:
    return [run_criterion(k, workers) for k in SUITES[suite]]
