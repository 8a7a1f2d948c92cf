"""Hyperelliptic surface data for a band set and theta-function coefficient formulas.

The surface is ``w**2 = R(z) = prod (z - a_l)(z - b_l)`` with the branch of
``sqrt(R)`` positive on ``(b_q, inf)``.  Cycle ``a_j`` encircles gap ``j``;
``b_j`` runs from gap ``j`` through the bands above it to the gap at
infinity.  With this orientation the b-period vector ``U`` of the
normalized third-kind differential equals the harmonic-measure vector
``alpha_l = nu((a_{l+1}, inf))``, and ``U + 2 u(inf)`` lies on the integer
lattice.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DivergentTruncation, IllConditioned, PoorFit, RiemannInputError, ThetaDivisor
from .potential import BandSet


@dataclass(frozen=True)
class SurfaceData:
    bands: BandSet
    tau: np.ndarray            # period matrix, (g, g) complex
    U: np.ndarray              # b-periods of the normalized third-kind differential, reduced mod 1
    u_inf: np.ndarray          # Abel image of infinity (real representative)
    l_sigma: float             # Robin constant, 2 log capacity
    normalization: np.ndarray  # C with omega_i = sum_k C[i, k] z**k dz / sqrt(R)
    third_kind: np.ndarray     # ascending coefficients of the monic P with zero a-periods

    @property
    def genus(self) -> int:
        return self.bands.q - 1

    @property
    def capacity(self) -> float:
        return float(np.exp(self.l_sigma / 2))

    def min_imag_eig(self) -> float:
        if self.genus == 0:
            return np.inf
        return float(np.min(np.linalg.eigvalsh(self.tau.imag)))

    def record(self) -> dict:
        return {
            "edges": list(self.bands.edges),
            "genus": self.genus,
            "tau_re": self.tau.real.ravel().tolist(),
            "tau_im": self.tau.imag.ravel().tolist(),
            "U": self.U.tolist(),
            "u_inf": self.u_inf.tolist(),
            "l_sigma": self.l_sigma,
        }


@dataclass(frozen=True)
class ThetaEval:
    x: np.ndarray
    value: complex
    radius: int
    tail_bound: float


# --------------------------------------------------------------------------
# periods
# --------------------------------------------------------------------------

def _cheb(f, a, b, nodes):
    """``int_a^b f(x) / sqrt((x-a)(b-x)) dx`` by Gauss-Chebyshev."""
    t = (2 * np.arange(1, nodes + 1) - 1) * np.pi / (2 * nodes)
    x = 0.5 * (a + b) + 0.5 * (b - a) * np.cos(t)
    return np.pi / nodes * np.sum(f(x), axis=-1)


def _rest(e, skip):
    def f(x):
        m = np.ones_like(x)
        for k, ek in enumerate(e):
            if k not in skip:
                m = m * np.abs(x - ek)
        return np.sqrt(m)
    return f


def _gap_and_band_integrals(e, nodes):
    """Integrals of ``z**k / sqrt(R)`` over gaps (real) and bands (boundary value ``lam + i0``)."""
    q = e.size // 2
    gap = np.zeros((q - 1, q))
    band = np.zeros((q, q), dtype=complex)
    powers = np.arange(q)[:, None]
    for j in range(q - 1):
        i1, i2 = 2 * j + 1, 2 * j + 2
        rest = _rest(e, (i1, i2))
        sign = (-1.0) ** (q - (j + 1))
        gap[j] = sign * _cheb(lambda x: x**powers / rest(x), e[i1], e[i2], nodes)
    for l in range(q):
        i1, i2 = 2 * l, 2 * l + 1
        rest = _rest(e, (i1, i2))
        branch = 1j * (-1.0) ** (q - (l + 1))
        band[l] = _cheb(lambda x: x**powers / rest(x), e[i1], e[i2], nodes) / branch
    return gap, band


def _upper_tail_nodes(e, nodes):
    """Nodes for ``int_{b_q}^inf``: ``lam = b_q + u**2``, ``u = s/(1-s)``, Gauss-Legendre in s."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    u = s / (1.0 - s)
    lam = e[-1] + u * u
    du = 1.0 / (1.0 - s) ** 2
    rest = np.ones_like(lam)
    for ek in e[:-1]:
        rest = rest * (lam - ek)
    # dlam / sqrt(R) = 2 u du / (u sqrt(rest)) = 2 du / sqrt(rest)
    return lam, u, ws, du, np.sqrt(rest)


def surface_from_bands(bands: BandSet, nodes: int = 200, tail_nodes: int = 400) -> SurfaceData:
    """Period matrix, frequency vector, Abel image of infinity and Robin constant."""
    e = np.asarray(bands.edges)
    q = bands.q
    g = q - 1
    lam, u, ws, du, sqrt_rest = _upper_tail_nodes(e, tail_nodes)
    if g == 0:
        l_sigma = 2.0 * np.log((e[1] - e[0]) / 4.0)
        empty = np.zeros(0)
        return SurfaceData(bands, np.zeros((0, 0), dtype=complex), empty, empty, float(l_sigma),
                           np.zeros((0, 0)), np.array([1.0]))
    gap, band = _gap_and_band_integrals(e, nodes)
    A = -2.0 * gap                                           # a-periods
    B = np.array([-2.0 * band[j + 1:].sum(axis=0) for j in range(g)])   # b-periods
    cond = np.linalg.cond(A[:, :g])
    if not np.isfinite(cond) or cond > 1e10:
        raise IllConditioned(f"a-period matrix condition number {cond:.3g}",
                             operation="surface_from_bands")
    C = np.linalg.inv(A[:, :g].T)
    tau = B[:, :g] @ C.T
    tau = 0.5 * (tau + tau.T)
    c = np.linalg.solve(A[:, :g], -A[:, g])
    P = np.concatenate([c, [1.0]])
    U = ((B[:, g] + B[:, :g] @ c) / (2j * np.pi)).real
    U = np.mod(U, 1.0)
    raw = np.array([np.sum(ws * 2.0 * lam**k / sqrt_rest * du) for k in range(g)])
    u_inf = C @ raw
    # Green function: int_{b_q}^X P/sqrt(R) = log X - log cap + o(1)
    Pv = np.polynomial.polynomial.polyval(lam, P)
    integrand = 2.0 * Pv / sqrt_rest - 2.0 * u / (u * u + 1.0)
    log_cap = -float(np.sum(ws * integrand * du))
    return SurfaceData(bands, tau, U, u_inf, 2.0 * log_cap, C, P)


def harmonic_measures(surface: SurfaceData, nodes: int = 200) -> np.ndarray:
    """Band masses of the equilibrium measure, ``|int_band P / sqrt(R)| / pi``."""
    e = np.asarray(surface.bands.edges)
    masses = []
    for l in range(surface.bands.q):
        i1, i2 = 2 * l, 2 * l + 1
        rest = _rest(e, (i1, i2))
        P = surface.third_kind
        val = _cheb(lambda x: np.polynomial.polynomial.polyval(x, P) / rest(x), e[i1], e[i2], nodes)
        masses.append(abs(val) / np.pi)
    return np.asarray(masses)


def frequencies_from_surface(surface: SurfaceData) -> np.ndarray:
    m = harmonic_measures(surface)
    return np.array([m[l + 1:].sum() for l in range(surface.genus)])


# --------------------------------------------------------------------------
# theta functions
# --------------------------------------------------------------------------

_LATTICE: dict = {}


def _lattice(g, M):
    key = (g, M)
    if key not in _LATTICE:
        _LATTICE[key] = np.array(list(itertools.product(range(-M, M + 1), repeat=g)), dtype=float)
    return _LATTICE[key]


def _tail_bound(g, mu, M):
    k = np.arange(M + 1, M + 400)
    shells = (2 * k + 1.0) ** g - (2 * k - 1.0) ** g
    return float(np.sum(shells * np.exp(-np.pi * mu * k * k)))


def theta(x, surface_or_tau, rel_tol: float = 1e-13) -> ThetaEval:
    """Riemann theta function ``sum_m exp(pi i m.tau.m + 2 pi i m.x)`` with adaptive radius."""
    tau = surface_or_tau.tau if isinstance(surface_or_tau, SurfaceData) else np.atleast_2d(surface_or_tau)
    g = tau.shape[0]
    if g == 0:
        return ThetaEval(np.zeros(0), 1.0 + 0j, 0, 0.0)
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    if x.size != g:
        raise RiemannInputError(f"argument has dimension {x.size}, genus is {g}", operation="theta")
    mu = float(np.min(np.linalg.eigvalsh(tau.imag)))
    if mu <= 0:
        raise DivergentTruncation("Im tau is not positive definite", operation="theta")
    # the imaginary part of x enlarges terms by exp(2 pi |m| |Im x|)
    shift = 2 * np.pi * np.sum(np.abs(x.imag))
    M = 1
    while True:
        bound = _tail_bound(g, mu, M) * np.exp(shift * (M + 1))
        if bound < 1e-17 or M > 200:
            break
        M += 1
    while True:
        if M > 200:
            raise DivergentTruncation("theta series radius exceeds 200 (nearly closed gap)",
                                      operation="theta")
        m = _lattice(g, M)
        quad = np.einsum("ij,jk,ik->i", m, tau, m)
        value = np.sum(np.exp(1j * np.pi * quad + 2j * np.pi * (m @ x)))
        bound = _tail_bound(g, mu, M) * np.exp(shift * (M + 1))
        if bound < rel_tol * abs(value):
            return ThetaEval(x, complex(value), M, bound)
        M += 1


def coefficient_map_R(surface: SurfaceData, x) -> float:
    """Squared off-diagonal coefficient ``cap**2 theta(x+U) theta(x-U) / theta(x)**2``."""
    cap2 = np.exp(surface.l_sigma)
    if surface.genus == 0:
        return float(cap2)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t0 = theta(x, surface).value
    if abs(t0) < 1e-12:
        raise ThetaDivisor("theta vanishes at the argument", operation="coefficient_map_R")
    val = cap2 * theta(x + surface.U, surface).value * theta(x - surface.U, surface).value / t0**2
    if abs(val.imag) > 1e-10 * max(1.0, abs(val)):
        raise ThetaDivisor(f"coefficient map not real (imaginary part {val.imag:.2e})",
                           operation="coefficient_map_R")
    return float(val.real)


def orbit(surface: SurfaceData, x, count: int) -> np.ndarray:
    """``R(x + k U)`` for k = 0..count-1."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.array([coefficient_map_R(surface, x + k * surface.U) for k in range(count)])


def lattice_distance(v) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.max(np.abs(v - np.round(v))))


def rie_relation_check(surface: SurfaceData) -> float:
    """Distance from ``U + 2 u(inf)`` to the integer lattice."""
    return lattice_distance(surface.U + 2.0 * surface.u_inf)


def shift_equivalence_fit(surface: SurfaceData, coefficients, grid: int | None = None):
    """Best shift ``x`` matching ``R(x + k U)`` to the squared coefficients ``r_k**2``.

    ``coefficients`` are the off-diagonal entries ``r_k`` themselves; they are
    squared here.  Returns ``(x, residual)`` with the residual the max
    absolute deviation over the orbit.
    """
    target = np.asarray(coefficients, dtype=float) ** 2
    g = surface.genus
    if target.size < 2 * g + 2:
        raise RiemannInputError(f"need at least {2 * g + 2} coefficients",
                                operation="shift_equivalence_fit")
    if g == 0:
        res = float(np.max(np.abs(np.exp(surface.l_sigma) - target)))
        x, best = np.zeros(0), res
    else:
        if grid is None:
            grid = {1: 400, 2: 40}.get(g, 12)

        def objective(x):
            try:
                return float(np.max(np.abs(orbit(surface, x, target.size) - target)))
            except ThetaDivisor:
                return np.inf

        axis = (np.arange(grid) + 0.5) / grid
        starts = sorted((objective(np.array(p)), p) for p in itertools.product(axis, repeat=g))
        best, x = np.inf, None
        for val, p in starts[:3]:
            sol = optimize.minimize(objective, np.array(p), method="Nelder-Mead",
                                    options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 4000 * g})
            if sol.fun < best:
                best, x = float(sol.fun), np.mod(sol.x, 1.0)
    if best > 0.1 * float(np.mean(target)):
        raise PoorFit(f"orbit residual {best:.3g} exceeds a tenth of the mean target",
                      operation="shift_equivalence_fit", partial=(x, best))
    return x, best
