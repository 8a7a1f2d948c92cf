"""Confining potentials, band sets and the explicit class ``V = v**2 / (2q)``.

For the square class every quantity of interest (equilibrium densities,
counting functions, the comb map, the Euler-Lagrange gap function) has a
closed form in terms of ``u = v / (2 sqrt(g))``.  Those closed forms are the
oracles the numerical modules are checked against.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize

from .errors import EdgeSingularity, NotRegular, OutsideSpectrum
from .errors import PotentialInputError as InvalidInput

SIMPLICITY_TOL = 1e-9


# --------------------------------------------------------------------------
# real roots of real polynomials (companion-free)
# --------------------------------------------------------------------------

def real_roots(coeffs: Sequence[float]) -> np.ndarray:
    """Distinct real roots of a polynomial with ascending ``coeffs``.

    The critical points of ``p`` are found recursively; ``p`` is monotone
    between consecutive critical points, so every sign change is bracketed
    and refined with Brent's method followed by one Newton step.  Roots of
    even multiplicity (no sign change) are only reported when ``p`` vanishes
    exactly at a critical point.
    """
    p = Polynomial(np.trim_zeros(np.asarray(coeffs, dtype=float), "b"))
    deg = p.degree()
    if deg <= 0:
        return np.empty(0)
    c = p.coef
    if deg == 1:
        return np.array([-c[0] / c[1]])
    crit = real_roots(p.deriv().coef)
    bound = 1.0 + np.max(np.abs(c[:-1] / c[-1]))
    knots = np.concatenate([[-bound], crit[(crit > -bound) & (crit < bound)], [bound]])
    dp = p.deriv()
    roots = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        flo, fhi = p(lo), p(hi)
        if flo == 0.0:
            roots.append(lo)
            continue
        if flo * fhi < 0:
            scale = max(1.0, abs(lo), abs(hi))
            x = optimize.brentq(p, lo, hi, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps)
            d = dp(x)
            if d != 0.0:
                xn = x - p(x) / d
                if lo <= xn <= hi and abs(p(xn)) <= abs(p(x)):
                    x = xn
            roots.append(x)
    if p(knots[-1]) == 0.0:
        roots.append(knots[-1])
    return np.unique(np.asarray(roots))


# --------------------------------------------------------------------------
# band sets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BandSet:
    """Ordered disjoint closed intervals ``[a_1,b_1] u ... u [a_q,b_q]``."""

    edges: tuple

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 2 or e.size % 2:
            raise InvalidInput("a band set needs an even, positive number of edges",
                                  operation="BandSet")
        if not np.all(np.isfinite(e)) or np.any(np.diff(e) <= 0):
            raise InvalidInput(f"band edges must be finite and strictly increasing: {e}",
                                  operation="BandSet")
        object.__setattr__(self, "edges", tuple(float(x) for x in e))

    @classmethod
    def from_intervals(cls, intervals):
        return cls(tuple(x for ab in intervals for x in ab))

    @property
    def q(self) -> int:
        return len(self.edges) // 2

    @property
    def a(self) -> np.ndarray:
        return np.asarray(self.edges[0::2])

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.edges[1::2])

    @property
    def intervals(self):
        return list(zip(self.edges[0::2], self.edges[1::2]))

    @property
    def gaps(self):
        """Finite gaps ``(b_l, a_{l+1})``, l = 1..q-1."""
        return list(zip(self.edges[1:-1:2], self.edges[2::2]))

    @property
    def span(self) -> float:
        return self.edges[-1] - self.edges[0]

    def position(self, lam):
        """``searchsorted`` code: odd ``2l-1`` inside band l, even ``2l`` in gap l."""
        return np.searchsorted(np.asarray(self.edges), lam, side="right")

    def band_index(self, lam):
        """1-based band index of each point, 0 when the point lies in a gap."""
        lam = np.asarray(lam, dtype=float)
        pos = self.position(lam)
        idx = np.where(pos % 2 == 1, (pos + 1) // 2, 0)
        # right edges b_l belong to band l
        on_right = np.isin(lam, self.b)
        idx = np.where(on_right, np.searchsorted(self.b, lam) + 1, idx)
        return idx

    def contains(self, lam, tol: float = 0.0):
        lam = np.asarray(lam, dtype=float)
        inside = self.band_index(lam) > 0
        if tol > 0:
            e = np.asarray(self.edges)
            inside = inside | (np.min(np.abs(lam[..., None] - e), axis=-1) <= tol)
        return inside

    def distance(self, other: "BandSet") -> float:
        if other.q != self.q:
            return np.inf
        return float(np.max(np.abs(np.subtract(self.edges, other.edges))))


def level_set_bands(coeffs: Sequence[float], level: float) -> BandSet:
    """Band set ``{x : |p(x)| <= level}`` for a polynomial whose level crossings are real.

    Touching bands (double roots of ``p**2 - level**2``) are merged.
    """
    c = np.asarray(coeffs, dtype=float)
    p = Polynomial(c)
    up = c.copy()
    up[0] -= level
    dn = c.copy()
    dn[0] += level
    pts = np.unique(np.concatenate([real_roots(up), real_roots(dn)]))
    if pts.size < 2:
        raise NotRegular("level set has no bounded band", operation="level_set_bands")
    intervals = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if abs(p(0.5 * (lo + hi))) <= level:
            if intervals and intervals[-1][1] == lo:
                intervals[-1][1] = hi
            else:
                intervals.append([lo, hi])
    return BandSet.from_intervals(intervals)


# --------------------------------------------------------------------------
# potentials
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """A confining polynomial potential with amplitude ``g``.

    ``kind="square"`` stores the ascending coefficients of ``v`` (degree q,
    leading coefficient +-1) and means ``V = v**2 / (2q)``; ``kind="poly"``
    stores the ascending coefficients of ``V`` itself.  Weights and fields
    always use ``V / g``.
    """

    kind: str
    coeffs: tuple
    g: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "g", float(self.g))
        if not (self.g > 0 and np.isfinite(self.g)):
            raise InvalidInput(f"amplitude g must be positive, got {self.g}", operation="Potential")
        c = np.trim_zeros(np.asarray(self.coeffs), "b")
        if self.kind == "square":
            if c.size < 2:
                raise InvalidInput("v must have degree >= 1", operation="Potential")
            if abs(abs(c[-1]) - 1.0) > 1e-14:
                raise InvalidInput("v must have leading coefficient +-1", operation="Potential")
            bands_from_polynomial(self)
        elif self.kind == "poly":
            deg = c.size - 1
            if deg < 2 or deg % 2 or c[-1] <= 0:
                raise InvalidInput("V must have even degree >= 2 and positive leading coefficient",
                                      operation="Potential")
        else:
            raise InvalidInput(f"unknown potential kind {self.kind!r}", operation="Potential")

    # construction helpers -------------------------------------------------
    @classmethod
    def square(cls, v, g=1.0):
        return cls("square", tuple(v), g)

    @classmethod
    def poly(cls, V, g=1.0):
        return cls("poly", tuple(V), g)

    @classmethod
    def from_spec(cls, spec: dict) -> "Potential":
        spec = dict(spec)
        kind = spec.pop("kind", None)
        g = spec.pop("g", 1.0)
        if kind == "square":
            coeffs = spec.pop("v", None)
        elif kind == "poly":
            coeffs = spec.pop("V", None)
        else:
            raise InvalidInput(f"potential kind must be 'square' or 'poly', got {kind!r}",
                                  operation="from_spec")
        if spec:
            raise InvalidInput(f"unknown potential keys: {sorted(spec)}", operation="from_spec")
        if coeffs is None:
            raise InvalidInput("potential coefficients missing", operation="from_spec")
        return cls(kind, tuple(coeffs), g)

    def to_spec(self) -> dict:
        key = "v" if self.kind == "square" else "V"
        return {"kind": self.kind, key: list(self.coeffs), "g": self.g}

    def with_g(self, g: float) -> "Potential":
        return Potential(self.kind, self.coeffs, g)

    # evaluation -------------------------------------------------------------
    @property
    def is_square(self) -> bool:
        return self.kind == "square"

    @property
    def q(self) -> int:
        if not self.is_square:
            raise InvalidInput("q is only defined for the square class", operation="q")
        return len(np.trim_zeros(np.asarray(self.coeffs), "b")) - 1

    @property
    def v_poly(self) -> Polynomial:
        if not self.is_square:
            raise InvalidInput("v is only defined for the square class", operation="v")
        return Polynomial(self.coeffs)

    @property
    def V_poly(self) -> Polynomial:
        if self.is_square:
            return self.v_poly ** 2 / (2 * self.q)
        return Polynomial(self.coeffs)

    def V(self, lam):
        return self.V_poly(np.asarray(lam, dtype=float))

    def field(self, lam):
        """The scaled field ``V / g`` entering weights and energies."""
        return self.V(lam) / self.g

    def v(self, lam):
        return self.v_poly(np.asarray(lam, dtype=float))

    def u(self, lam):
        return self.v(lam) / (2.0 * np.sqrt(self.g))

    @property
    def bands(self) -> BandSet:
        return bands_from_polynomial(self)


def bands_from_polynomial(pot: Potential) -> BandSet:
    """Spectrum ``{v**2 - 4g <= 0}`` of a square-class potential."""
    if not pot.is_square:
        raise InvalidInput("bands_from_polynomial needs a square-class potential",
                              operation="bands_from_polynomial")
    v = Polynomial(pot.coeffs)
    q = v.degree()
    level = 2.0 * np.sqrt(pot.g)
    crit = real_roots(v.deriv().coef)
    if crit.size != q - 1:
        raise NotRegular(f"v' has {crit.size} real critical points, expected {q - 1}",
                         operation="bands_from_polynomial")
    # a double root of v**2 - 4g sits at a critical value equal to +-2 sqrt(g)
    cv = np.abs(v(crit))
    if np.any(cv <= level * (1 + SIMPLICITY_TOL)):
        raise NotRegular("v**2 - 4g has a multiple or complex root (critical value too small)",
                         operation="bands_from_polynomial")
    up = np.array(v.coef, dtype=float)
    up[0] -= level
    dn = np.array(v.coef, dtype=float)
    dn[0] += level
    r_up, r_dn = real_roots(up), real_roots(dn)
    if r_up.size != q or r_dn.size != q:
        raise NotRegular("v**2 - 4g does not have 2q real simple roots",
                         operation="bands_from_polynomial")
    edges = np.sort(np.concatenate([r_up, r_dn]))
    mids = 0.5 * (edges[0::2] + edges[1::2])
    if np.any(np.abs(v(mids)) > level):
        raise NotRegular("band structure inconsistent with |v| <= 2 sqrt(g)",
                         operation="bands_from_polynomial")
    return BandSet(tuple(edges))


# --------------------------------------------------------------------------
# densities of the two equilibrium measures (square class)
# --------------------------------------------------------------------------

def _require_square(pot, op):
    if not pot.is_square:
        raise InvalidInput(f"{op} needs a square-class potential", operation=op)


def density_N(pot: Potential, lam):
    """Density of the external-field equilibrium measure ``N_g``."""
    _require_square(pot, "density_N")
    lam = np.asarray(lam, dtype=float)
    q, g = pot.q, pot.g
    v = pot.v(lam)
    dv = pot.v_poly.deriv()(lam)
    disc = 4 * g - v * v
    out = np.abs(dv) / (2 * np.pi * g * q) * np.sqrt(np.clip(disc, 0.0, None))
    return out[()] if out.ndim == 0 else out


def density_nu(pot: Potential, lam):
    """Density of the fixed-support equilibrium measure ``nu_g`` of ``sigma_g``."""
    _require_square(pot, "density_nu")
    lam = np.asarray(lam, dtype=float)
    q, g = pot.q, pot.g
    v = pot.v(lam)
    dv = pot.v_poly.deriv()(lam)
    disc = 4 * g - v * v
    inside = disc >= 0
    if np.any(inside & (np.abs(disc) < 1e-14)):
        raise EdgeSingularity("density_nu is singular at a band edge", operation="density_nu")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(inside, np.abs(dv) / (np.pi * q) / np.sqrt(np.where(inside, disc, 1.0)), 0.0)
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# comb map and counting functions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CombMap:
    """Boundary values of the comb map at real points.

    ``band`` is the 1-based band index (0 off the spectrum), ``gap`` the
    1-based gap index (``q`` is the gap through infinity, 0 on bands).
    """

    lam: np.ndarray
    band: np.ndarray
    gap: np.ndarray
    theta_plus: np.ndarray
    kappa: np.ndarray
    heights: tuple


def gap_heights(pot: Potential) -> tuple:
    """Slit heights ``h_l``: the maximum of ``kappa`` over each finite gap."""
    _require_square(pot, "gap_heights")
    bands = pot.bands
    crit = real_roots(pot.v_poly.deriv().coef)
    out = []
    for lo, hi in bands.gaps:
        c = crit[(crit > lo) & (crit < hi)]
        out.append(float(np.arccosh(np.max(np.abs(pot.u(c))))) if c.size else 0.0)
    out.append(np.inf)
    return tuple(out)


def comb_map(pot: Potential, lam) -> CombMap:
    """Comb map boundary values on the whole real line."""
    _require_square(pot, "comb_map")
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    bands = pot.bands
    q = bands.q
    u = pot.u(lam)
    pos = bands.position(lam)
    theta = np.empty_like(lam)
    kappa = np.zeros_like(lam)
    band = np.zeros(lam.shape, dtype=int)
    gap = np.zeros(lam.shape, dtype=int)

    in_band = pos % 2 == 1
    l_band = (pos + 1) // 2
    # orientation: cos(phi) = +1 at the left edge of the band
    a = bands.a
    sgn_left = np.sign(pot.u(a))
    s = sgn_left[np.clip(l_band - 1, 0, q - 1)]
    phi = np.arccos(np.clip(s * u, -1.0, 1.0))
    theta = np.where(in_band, (-q + l_band - 1) * np.pi + phi, theta)
    band = np.where(in_band, l_band, 0)

    l_gap = pos // 2  # 0 below a_1, q above b_q
    theta = np.where(~in_band, (-q + l_gap) * np.pi, theta)
    gap = np.where(~in_band, np.where((l_gap == 0) | (l_gap == q), q, l_gap), 0)
    with np.errstate(invalid="ignore"):
        kappa = np.where(~in_band, np.arccosh(np.maximum(np.abs(u), 1.0)), 0.0)
    return CombMap(lam, band, gap, theta, kappa, gap_heights(pot))


def _check_in_spectrum(pot, lam, op):
    bands = pot.bands
    tol = 1e-12 * max(1.0, bands.span)
    if not np.all(bands.contains(lam, tol=tol)):
        raise OutsideSpectrum(f"point(s) outside the spectrum {bands.intervals}", operation=op)


def comb_theta_plus(pot: Potential, lam):
    """``Re theta(lam + i0)`` for ``lam`` in the spectrum; increases from -q*pi to 0."""
    _require_square(pot, "comb_theta_plus")
    _check_in_spectrum(pot, lam, "comb_theta_plus")
    t = comb_map(pot, lam).theta_plus
    return t[0] if np.ndim(lam) == 0 else t


def tail_functions(pot: Potential, lam):
    """Tail functions ``(N_g((lam, inf)), nu_g((lam, inf)))`` on the whole real line."""
    _require_square(pot, "tail_functions")
    theta = comb_map(pot, lam).theta_plus
    q = pot.q
    nu = -theta / (np.pi * q)
    N = -(theta - np.sin(2 * theta) / 2) / (np.pi * q)
    if np.ndim(lam) == 0:
        return N[0], nu[0]
    return N, nu


def counting_functions(pot: Potential, lam):
    """``(N_g(lam), nu_g(lam))`` for ``lam`` in the spectrum."""
    _require_square(pot, "counting_functions")
    _check_in_spectrum(pot, lam, "counting_functions")
    return tail_functions(pot, lam)


def frequencies_closed_form(pot: Potential) -> np.ndarray:
    """``alpha_l = beta_l = nu_g(a_{l+1})`` from the comb map."""
    bands = pot.bands
    return np.asarray(tail_functions(pot, bands.a[1:])[1]) if bands.q > 1 else np.empty(0)


def phi_gap_value(pot: Potential, lam):
    """``Phi(lam) + (1/q) log(g/e)``: zero on the bands, positive in the gaps."""
    _require_square(pot, "phi_gap_value")
    cm = comb_map(pot, lam)
    k = cm.kappa
    out = (np.sinh(2 * k) - 2 * k) / pot.q
    return out[0] if np.ndim(lam) == 0 else out


def robin_constants(pot: Potential):
    """Closed-form ``(l_V, l_sigma)`` of the square class.

    ``Phi = -l_V`` on the bands gives ``l_V = (1/q) log(g/e)``; the capacity
    of ``sigma_g`` is ``g**(1/(2q))`` so ``l_sigma = (1/q) log g``.
    """
    q, g = pot.q, pot.g
    return (np.log(g) - 1.0) / q, np.log(g) / q


# --------------------------------------------------------------------------
# quadrature over band sets
# --------------------------------------------------------------------------

_GL_CACHE: dict = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def integrate_bands(f: Callable, bands: BandSet, nodes: int = 200) -> float:
    """``sum_l int_{a_l}^{b_l} f``, absorbing square-root edge behaviour.

    Each band is mapped by ``lam = c + h cos t`` so ``f(lam) dlam`` becomes
    ``f(c + h cos t) h sin t dt``, smooth for densities with inverse-square-root
    or square-root edges; Gauss-Legendre in ``t`` then converges spectrally.
    """
    x, w = _gauss_legendre(nodes)
    t = 0.5 * np.pi * (x + 1.0)
    wt = 0.5 * np.pi * w
    total = 0.0
    for a, b in bands.intervals:
        c, h = 0.5 * (a + b), 0.5 * (b - a)
        lam = c + h * np.cos(t)
        total += np.sum(wt * f(lam) * h * np.sin(t))
    return float(total)


def band_nodes(bands: BandSet, nodes: int = 200):
    """Nodes and weights of the cosine-substituted rule used by ``integrate_bands``."""
    x, w = _gauss_legendre(nodes)
    t = 0.5 * np.pi * (x + 1.0)
    wt = 0.5 * np.pi * w
    lams, ws = [], []
    for a, b in bands.intervals:
        c, h = 0.5 * (a + b), 0.5 * (b - a)
        lams.append(c + h * np.cos(t))
        ws.append(wt * h * np.sin(t))
    return np.concatenate(lams), np.concatenate(ws)


def log_potential(density: Callable, bands: BandSet, lam) -> np.ndarray:
    """``int log|lam - mu| density(mu) dmu`` over the bands.

    The cosine substitution removes edge singularities; inside a band the
    logarithmic singularity becomes a subinterval end point.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    out = np.empty_like(lam)
    for i, x in enumerate(lam):
        total = 0.0
        for a, b in bands.intervals:
            c, h = 0.5 * (a + b), 0.5 * (b - a)

            def integrand(t):
                mu = c + h * np.cos(t)
                return density(mu) * h * np.sin(t) * np.log(abs(x - mu))

            # an interior singularity is moved to a subinterval end, where
            # QUADPACK's extrapolation handles it
            cuts = [0.0, np.pi]
            if a < x < b:
                cuts.insert(1, float(np.arccos((x - c) / h)))
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                val, _ = integrate.quad(integrand, lo, hi, limit=400, epsabs=1e-13, epsrel=1e-12)
                total += val
        out[i] = total
    return out
