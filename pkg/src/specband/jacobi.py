"""Periodic and windowed Jacobi operators.

The operator acts as ``(J psi)_j = r_{j-1} psi_{j-1} + s_j psi_j + r_j psi_{j+1}``.
Periodic operators repeat ``(r_1..r_p, s_1..s_p)``; window operators take
``r_{n+k}, s_{n+k}`` from a recurrence table and vanish below ``k = -n``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from numpy.polynomial import Polynomial
from scipy import linalg

from . import potential as pt
from .errors import JacobiInputError, RangeExceeded, SpectralParameterOnAxis
from .potential import BandSet, Potential

BAND_TOL = 1e-12


@dataclass(frozen=True)
class JacobiOperator:
    kind: str                  # "periodic" or "window"
    r: tuple
    s: tuple
    offset: int = 0            # window: table index n of site k = 0
    k_min: int = 0             # window: first site held

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if r.shape != s.shape or r.size == 0:
            raise JacobiInputError("r and s must be nonempty and of equal length",
                                   operation="JacobiOperator")
        if self.kind == "periodic":
            if np.any(r <= 0):
                raise JacobiInputError("periodic off-diagonal entries must be positive",
                                       operation="JacobiOperator")
        elif self.kind == "window":
            if np.any(r < 0):
                raise JacobiInputError("off-diagonal entries must be nonnegative",
                                       operation="JacobiOperator")
        else:
            raise JacobiInputError(f"unknown operator kind {self.kind!r}", operation="JacobiOperator")
        object.__setattr__(self, "r", tuple(float(x) for x in r))
        object.__setattr__(self, "s", tuple(float(x) for x in s))

    @classmethod
    def periodic(cls, r, s=None):
        r = tuple(np.atleast_1d(np.asarray(r, dtype=float)))
        s = tuple(np.zeros(len(r))) if s is None else tuple(np.atleast_1d(np.asarray(s, dtype=float)))
        return cls("periodic", r, s)

    @property
    def period(self) -> int:
        if self.kind != "periodic":
            raise JacobiInputError("only periodic operators have a period", operation="period")
        return len(self.r)

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.r) - 1

    def coefficients(self, start: int, m: int):
        """Diagonal ``s_j`` (j = start..start+m-1) and off-diagonal ``r_j`` (m-1 entries)."""
        j = np.arange(start, start + m)
        if self.kind == "periodic":
            p = self.period
            r, s = np.asarray(self.r), np.asarray(self.s)
            return s[j % p], r[j[:-1] % p]
        if start < self.k_min or start + m - 1 > self.k_max:
            raise RangeExceeded(f"sites {start}..{start + m - 1} outside the window "
                                f"{self.k_min}..{self.k_max}", operation="coefficients")
        r, s = np.asarray(self.r), np.asarray(self.s)
        i = j - self.k_min
        return s[i], r[i[:-1]]

    def record(self) -> dict:
        out = {"kind": self.kind, "r": list(self.r), "s": list(self.s)}
        if self.kind == "window":
            out.update(offset=self.offset, k_min=self.k_min)
        return out


@dataclass(frozen=True)
class HillData:
    coeffs: tuple              # ascending power-basis coefficients of the discriminant
    bands: BandSet

    def __call__(self, lam):
        return Polynomial(self.coeffs)(np.asarray(lam, dtype=float))


# --------------------------------------------------------------------------
# Sturm sequences
# --------------------------------------------------------------------------

@numba.njit(cache=True)
def _count_below(d, e2, x, pivmin):
    """Number of eigenvalues strictly below ``x``."""
    cnt = 0
    q = d[0] - x
    if abs(q) < pivmin:
        q = -pivmin
    if q < 0:
        cnt += 1
    for i in range(1, d.size):
        q = d[i] - x - e2[i - 1] / q
        if abs(q) < pivmin:
            q = -pivmin
        if q < 0:
            cnt += 1
    return cnt


@numba.njit(cache=True)
def _counts(d, e2, xs, pivmin):
    out = np.empty(xs.size, dtype=np.int64)
    for k in range(xs.size):
        out[k] = _count_below(d, e2, xs[k], pivmin)
    return out


@numba.njit(cache=True)
def _bisect_all(d, e2, lo0, hi0, rtol, atol, pivmin):
    m = d.size
    out = np.empty(m)
    lo_k = lo0
    for k in range(m):
        lo, hi = lo_k, hi0
        while hi - lo > atol + rtol * max(abs(lo), abs(hi)):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi:
                break
            if _count_below(d, e2, mid, pivmin) <= k:
                lo = mid
            else:
                hi = mid
        out[k] = 0.5 * (lo + hi)
        lo_k = lo
    return out


def _tridiag(op: JacobiOperator, m: int, start: int | None):
    if start is None:
        start = 0 if op.kind == "periodic" else op.k_min
    return op.coefficients(start, m)


def _gershgorin(d, e):
    ae = np.abs(e)
    rad = np.zeros_like(d)
    rad[:-1] += ae
    rad[1:] += ae
    return float(np.min(d - rad)), float(np.max(d + rad))


def tridiagonal_eigenvalues(d, e, rtol: float = 2e-16, atol: float | None = None) -> np.ndarray:
    """All eigenvalues of the symmetric tridiagonal matrix ``(d, e)`` by Sturm bisection."""
    d = np.ascontiguousarray(d, dtype=float)
    e = np.ascontiguousarray(e, dtype=float)
    if d.size == 1:
        return d.copy()
    lo, hi = _gershgorin(d, e)
    scale = max(abs(lo), abs(hi), 1e-300)
    if atol is None:
        atol = 1e-13 * scale
    e2 = e * e
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    return _bisect_all(d, e2, lo - 1e-12 * scale, hi + 1e-12 * scale, rtol, atol, pivmin)


def truncation_spectrum(op: JacobiOperator, m: int, start: int | None = None) -> np.ndarray:
    """Sorted eigenvalues of the ``m x m`` Dirichlet truncation beginning at site ``start``."""
    if m < 1:
        raise JacobiInputError("m must be positive", operation="truncation_spectrum")
    d, e = _tridiag(op, m, start)
    return tridiagonal_eigenvalues(d, e)


def ids_estimate(op: JacobiOperator, m: int, lam_grid, start: int | None = None) -> np.ndarray:
    """Tail counting function ``#{eigenvalues > lam} / m`` of the truncation."""
    d, e = _tridiag(op, m, start)
    lam = np.atleast_1d(np.asarray(lam_grid, dtype=float))
    e2 = np.ascontiguousarray(e * e)
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    # eigenvalues > lam  =  m - #{eigenvalues <= lam};  count_below(next float) includes ties
    below_or_eq = _counts(np.ascontiguousarray(d), e2, np.nextafter(lam, np.inf), pivmin)
    return (m - below_or_eq) / m


# --------------------------------------------------------------------------
# transfer matrices
# --------------------------------------------------------------------------

def _transfer_poly(r_prev, r_j, s_j):
    return [[Polynomial([-s_j / r_j, 1.0 / r_j]), Polynomial([-r_prev / r_j])],
            [Polynomial([1.0]), Polynomial([0.0])]]


def _matmul_poly(A, B):
    return [[A[i][0] * B[0][j] + A[i][1] * B[1][j] for j in range(2)] for i in range(2)]


def hill_discriminant(op: JacobiOperator) -> HillData:
    """Half trace of the one-period monodromy matrix and its band set ``{|Delta| <= 1}``.

    The matrix product is carried out on polynomial entries, so the
    coefficients are exact up to rounding.
    """
    p = op.period
    r, s = np.asarray(op.r), np.asarray(op.s)
    M = [[Polynomial([1.0]), Polynomial([0.0])], [Polynomial([0.0]), Polynomial([1.0])]]
    for j in range(p):
        M = _matmul_poly(_transfer_poly(r[j - 1], r[j], s[j]), M)
    delta = (M[0][0] + M[1][1]) / 2
    coeffs = np.zeros(p + 1)
    coeffs[: delta.coef.size] = delta.coef[: p + 1]
    return HillData(tuple(coeffs), pt.level_set_bands(coeffs, 1.0))


def lyapunov_exponent(op: JacobiOperator, lam, steps: int | None = None, start: int | None = None):
    """Lyapunov exponent ``lim (1/m) log ||T_m ... T_1||``.

    Periodic operators use the monodromy eigenvalue: ``arccosh|Delta| / p``
    off the bands and exactly 0 on them.  Window operators multiply the
    transfer matrices over ``steps`` sites, renormalizing every 32 steps.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if op.kind == "periodic":
        delta = np.abs(hill_discriminant(op)(lam_arr))
        # points whose |Delta| exceeds 1 by rounding only are band points
        out = np.where(delta > 1.0 + BAND_TOL, np.arccosh(np.maximum(delta, 1.0)) / op.period, 0.0)
    else:
        if start is None:
            start = op.k_min + 1
        if steps is None:
            steps = op.k_max - start
        d, e = op.coefficients(start - 1, steps + 1)
        out = np.array([_product_growth(d[1:], e, x) for x in lam_arr])
    return out[0] if np.ndim(lam) == 0 else out


def _product_growth(s, r, x):
    """``(1/m) log ||prod T_j||`` with ``r`` holding ``r_{j-1}`` then ``r_j`` pairs."""
    m = s.size
    vec = np.array([1.0, 0.0])
    other = np.array([0.0, 1.0])
    logn = 0.0
    for j in range(m - 1):
        T = np.array([[(x - s[j]) / r[j + 1], -r[j] / r[j + 1]], [1.0, 0.0]])
        vec, other = T @ vec, T @ other
        if j % 32 == 31:
            nrm = max(np.linalg.norm(vec), np.linalg.norm(other))
            vec, other = vec / nrm, other / nrm
            logn += np.log(nrm)
    nrm = max(np.linalg.norm(vec), np.linalg.norm(other))
    return (logn + np.log(nrm)) / max(m - 1, 1)


def periodic_from_square(pot: Potential) -> JacobiOperator:
    """Canonical periodic operator whose Hill discriminant is ``+-v / (2 sqrt(g))``.

    q = 1: ``r = sqrt(g), s = m`` for ``v = +-(lam - m)``.  q = 2: with
    ``v = +-((lam - m)**2 + c)``, ``c < -2 sqrt(g)``, the bands are
    ``m +- [a, b]`` and ``r_{1,2} = (b +- a)/2, s = m``.
    """
    if not pot.is_square:
        raise JacobiInputError("needs a square-class potential", operation="periodic_from_square")
    q, g = pot.q, pot.g
    c = np.asarray(pot.coeffs)
    if q == 1:
        return JacobiOperator.periodic([np.sqrt(g)], [-c[0] / c[1]])
    if q == 2:
        m = -c[1] / (2 * c[2])
        c0 = c[0] / c[2] - m * m
        a = np.sqrt(-c0 - 2 * np.sqrt(g))
        b = np.sqrt(-c0 + 2 * np.sqrt(g))
        return JacobiOperator.periodic([(b + a) / 2, (b - a) / 2], [m, m])
    raise JacobiInputError("no canonical periodic representative implemented for q > 2",
                           operation="periodic_from_square")


def lyapunov_square(pot: Potential, lam):
    """Lyapunov exponent of the periodic operators of a square-class potential.

    Uses the canonical representative when available and ``arccosh|u| / q``
    (the discriminant is ``+-u``) otherwise.
    """
    if pot.q <= 2:
        return lyapunov_exponent(periodic_from_square(pot), lam)
    u = np.abs(pot.u(lam))
    return np.where(u > 1.0, np.arccosh(np.maximum(u, 1.0)), 0.0) / pot.q


def _log_potential_of(nu, lam):
    """``int log|lam - mu| nu(dmu)`` for the supported measure descriptions."""
    from .equilibrium import DiscreteMeasure, EquilibriumResult

    if isinstance(nu, EquilibriumResult):
        nu = nu.measure
    if isinstance(nu, Potential):
        return pt.log_potential(lambda x: pt.density_nu(nu, x), nu.bands, lam)
    if isinstance(nu, DiscreteMeasure):
        # exact cell average of log|lam - mu| for a piecewise-constant density
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        e, h = nu.edges, nu.widths
        ok = h > 0

        def G(t):
            with np.errstate(divide="ignore", invalid="ignore"):
                return np.where(t == 0, 0.0, t * np.log(np.abs(t)) - t)

        out = []
        for x in lam:
            avg = (G(e[1:][ok] - x) - G(e[:-1][ok] - x)) / h[ok]
            out.append(np.sum(nu.weights[ok] * avg) / nu.total_mass)
        return np.asarray(out)
    density, bands = nu
    return pt.log_potential(density, bands, lam)


def thouless_check(op: JacobiOperator, nu, lam_samples) -> float:
    """``sup |gamma(lam) + <log r> - int log|lam - mu| nu(dmu)|`` over the samples.

    ``nu`` is a square-class ``Potential`` (its closed-form ``nu_g``), a
    ``(density, BandSet)`` pair, or a discrete equilibrium measure.
    """
    lam = np.atleast_1d(np.asarray(lam_samples, dtype=float))
    gamma = np.atleast_1d(lyapunov_exponent(op, lam))
    mean_log_r = float(np.mean(np.log(op.r)))
    rhs = -mean_log_r + _log_potential_of(nu, lam)
    return float(np.max(np.abs(gamma - rhs)))


def window_operator(table, n: int, k_range) -> JacobiOperator:
    """Window of a recurrence table around index ``n``: sites ``k`` hold ``r_{n+k}, s_{n+k}``.

    Entries with ``n + k < 0`` are zero (the half-line operator padded by zeros).
    """
    k_min, k_max = int(k_range[0]), int(k_range[1])
    if k_max < k_min:
        raise JacobiInputError("empty k range", operation="window_operator")
    r_tab, s_tab = np.asarray(table.r), np.asarray(table.s)
    if n + k_max > r_tab.size - 1:
        raise RangeExceeded(f"index {n + k_max} beyond table length {r_tab.size}",
                            operation="window_operator")
    idx = n + np.arange(k_min, k_max + 1)
    inside = idx >= 0
    r = np.where(inside, r_tab[np.clip(idx, 0, None)], 0.0)
    s = np.where(inside, s_tab[np.clip(idx, 0, None)], 0.0)
    return JacobiOperator("window", tuple(r), tuple(s), offset=n, k_min=k_min)


def resolvent_entries(op: JacobiOperator, z: complex, m: int = 4000, indices=((0, 0),)):
    """Entries ``(J_m - z)^{-1}_{jk}`` of a finite section centred on site 0."""
    z = complex(z)
    if abs(z.imag) < 1e-8:
        raise SpectralParameterOnAxis("spectral parameter too close to the real axis",
                                      operation="resolvent_entries")
    c = m // 2
    start = -c
    if op.kind == "window":
        start = max(-c, op.k_min)
        m = min(m, op.k_max - start + 1)
    d, e = op.coefficients(start, m)
    ab = np.zeros((3, m), dtype=complex)
    ab[0, 1:] = e
    ab[1, :] = d - z
    ab[2, :-1] = e
    cols = sorted({k for _, k in indices})
    rhs = np.zeros((m, len(cols)), dtype=complex)
    for i, k in enumerate(cols):
        rhs[k - start, i] = 1.0
    sol = linalg.solve_banded((1, 1), ab, rhs)
    col_of = {k: i for i, k in enumerate(cols)}
    return np.array([sol[j - start, col_of[k]] for j, k in indices])


def free_resolvent_00(z: complex) -> complex:
    """``(J - z)^{-1}_{00}`` for ``r = 1, s = 0``: ``-1/sqrt(z**2 - 4)`` with ``sqrt ~ z``."""
    z = complex(z)
    root = np.sqrt(z - 2) * np.sqrt(z + 2)
    return -1.0 / root
