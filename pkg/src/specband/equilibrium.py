"""Equilibrium measures of logarithmic energies by convex minimization.

Measures are discretized as piecewise-constant densities on a cell
partition.  The energy kernel is the exact cell average of ``-log|x - y|``
over pairs of cells, which is positive definite on zero-mass vectors (the
naive "drop the diagonal" discretization is not).  The simplex-constrained
quadratic program is solved by projected gradient with Barzilai-Borwein steps
and monotone backtracking, then polished by solving the KKT system on the
detected support.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from . import potential as pt
from .errors import DomainTooSmall, EquilibriumInputError, NoConvergence, SingleBand
from .potential import BandSet, Potential


@dataclass
class SolverParams:
    tol: float = 5e-3          # acceptance bound on the sup Euler-Lagrange residual
    pg_tol: float = 1e-8       # stopping bound on the gradient spread over the support
    max_iter: int = 20000
    polish: bool = True
    support_threshold: float = 0.01   # cell weight threshold, times 1/grid_size
    min_gap_cells: int = 3

    @classmethod
    def from_dict(cls, d: dict | None) -> "SolverParams":
        d = dict(d or {})
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise EquilibriumInputError(f"unknown solver parameters {sorted(unknown)}",
                                        operation="SolverParams")
        return cls(**d)


@dataclass
class DiscreteMeasure:
    """Cell masses on a partition ``edges``; ``nodes`` are the cell midpoints."""

    edges: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.edges.size != self.weights.size + 1:
            raise EquilibriumInputError("need one more edge than weights", operation="DiscreteMeasure")
        if np.any(np.diff(self.edges) < 0):
            raise EquilibriumInputError("cell edges must be nondecreasing", operation="DiscreteMeasure")
        if np.any(self.weights < 0):
            raise EquilibriumInputError("weights must be nonnegative", operation="DiscreteMeasure")

    @property
    def nodes(self) -> np.ndarray:
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def density(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.widths > 0, self.weights / self.widths, 0.0)

    def density_at(self, x):
        """Piecewise-constant density value at ``x`` (average of the two cells at a boundary)."""
        x = np.asarray(x, dtype=float)
        d = self.density()
        right = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, d.size - 1)
        left = np.clip(np.searchsorted(self.edges, x, side="left") - 1, 0, d.size - 1)
        return 0.5 * (d[left] + d[right])

    def tail(self, x):
        """Mass of ``(x, inf)``, linear inside each cell."""
        x = np.asarray(x, dtype=float)
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        below = np.interp(x, self.edges, cum)
        return self.total_mass - below

    def integrate(self, f: Callable) -> float:
        """``int f dm`` with the density constant on cells (3-point Gauss per cell)."""
        x, w = np.polynomial.legendre.leggauss(3)
        h = self.widths
        vals = sum(0.5 * wi * f(self.nodes + 0.5 * xi * h) for xi, wi in zip(x, w))
        return float(np.sum(self.weights * vals))

    @classmethod
    def from_tail(cls, tail: Callable, edges) -> "DiscreteMeasure":
        """Cell masses from a tail function ``x -> m((x, inf))``."""
        edges = np.asarray(edges, dtype=float)
        t = np.asarray(tail(edges), dtype=float)
        return cls(edges, np.maximum(t[:-1] - t[1:], 0.0))

    @classmethod
    def from_density(cls, density: Callable, edges, points: int = 8) -> "DiscreteMeasure":
        edges = np.asarray(edges, dtype=float)
        x, w = np.polynomial.legendre.leggauss(points)
        mid, h = 0.5 * (edges[1:] + edges[:-1]), np.diff(edges)
        mass = sum(0.5 * wi * h * density(mid + 0.5 * xi * h) for xi, wi in zip(x, w))
        return cls(edges, np.maximum(mass, 0.0))


@dataclass
class EquilibriumResult:
    measure: DiscreteMeasure
    support: BandSet
    lagrange_constant: float
    el_residual_sup: float
    el_min_slack: float
    iterations: int
    converged: bool
    kind: str                      # "fixed" or "external"
    energy_history: list = field(default_factory=list)
    field_values: np.ndarray | None = None   # cell averages of V/g, external problems only

    def record(self) -> dict:
        return {
            "kind": self.kind,
            "support_edges": list(self.support.edges),
            "lagrange_constant": self.lagrange_constant,
            "el_residual_sup": self.el_residual_sup,
            "el_min_slack": self.el_min_slack,
            "iterations": self.iterations,
            "converged": self.converged,
            "grid_size": int(self.measure.weights.size),
        }


@dataclass(frozen=True)
class FrequencyVector:
    values: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any((v <= 0) | (v >= 1)) or np.any(np.diff(v) >= 0):
            raise NoConvergence(f"frequencies not strictly decreasing in (0,1): {v}",
                                operation="frequencies")
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)

    def __len__(self):
        return len(self.values)


# --------------------------------------------------------------------------
# discretization
# --------------------------------------------------------------------------

def _F(t):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(t == 0, 0.0, 0.5 * t * t * np.log(np.abs(t)) - 0.75 * t * t)


def cell_kernel(edges) -> np.ndarray:
    """Cell-averaged ``-log|x - y|`` for every pair of cells of ``edges``.

    Zero-width cells (band boundaries shared by gap filler) are not allowed.
    """
    e = np.asarray(edges, dtype=float)
    h = np.diff(e)
    if np.any(h <= 0):
        raise EquilibriumInputError("cell widths must be positive", operation="cell_kernel")
    x1, x2 = e[:-1, None], e[1:, None]
    y1, y2 = e[None, :-1], e[None, 1:]
    integral = _F(x2 - y1) - _F(x1 - y1) - _F(x2 - y2) + _F(x1 - y2)
    return -integral / np.outer(h, h)


def cell_average(f: Callable, edges) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(3)
    e = np.asarray(edges, dtype=float)
    mid, h = 0.5 * (e[1:] + e[:-1]), np.diff(e)
    return sum(0.5 * wi * f(mid + 0.5 * xi * h) for xi, wi in zip(x, w))


def band_cells(bands: BandSet, per_band: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-graded cells on each band (refined toward the edges).

    Returns the cell edges of the concatenated partition and a mask of the
    cells that are real (the gaps between bands are single filler cells that
    the solver keeps at zero weight).
    """
    chunks, mask = [], []
    k = np.arange(per_band + 1)
    for i, (a, b) in enumerate(bands.intervals):
        c, h = 0.5 * (a + b), 0.5 * (b - a)
        e = c - h * np.cos(np.pi * k / per_band)
        e[0], e[-1] = a, b
        chunks.append(e if i == 0 else e)
        mask.extend([True] * per_band)
        if i < bands.q - 1:
            mask.append(False)
    edges = np.concatenate(chunks)
    return edges, np.asarray(mask)


def project_simplex(c: np.ndarray) -> np.ndarray:
    """Euclidean projection onto ``{w >= 0, sum w = 1}``."""
    a = -np.sort(-c)
    css = (np.cumsum(a) - 1.0) / np.arange(1, c.size + 1)
    k = np.nonzero(a > css)[0][-1]
    return np.maximum(c - css[k], 0.0)


# --------------------------------------------------------------------------
# the quadratic program  min  w.K.w + f.w  over the simplex
# --------------------------------------------------------------------------

def _energy(K, f, w):
    return float(w @ K @ w + f @ w)


def _spread(grad, w):
    s = w > 0
    return float(grad[s].max() - grad[s].min())


def _frank_wolfe(K, f, w, steps):
    for _ in range(steps):
        grad = 2 * K @ w + f
        d = -w.copy()
        d[np.argmin(grad)] += 1.0
        curv = d @ K @ d
        slope = grad @ d
        if slope >= 0:
            break
        t = 1.0 if curv <= 0 else min(1.0, -slope / (2 * curv))
        w = w + t * d
    return w


def _solve_qp(K, f, params: SolverParams, w0=None):
    n = f.size
    w = np.full(n, 1.0 / n) if w0 is None else w0.copy()
    grad = 2 * K @ w + f
    e = _energy(K, f, w)
    history = [e]
    step = 1.0 / max(np.abs(K).max(), 1e-300)
    it = 0
    stall = 0
    for it in range(1, params.max_iter + 1):
        while True:
            wn = project_simplex(w - step * grad)
            d = wn - w
            en = _energy(K, f, wn)
            if en <= e + grad @ d + 0.5 / step * (d @ d) or step < 1e-18:
                break
            step *= 0.5
        if en > e:
            # backtracking failed to make progress; switch to conditional-gradient steps
            wn = _frank_wolfe(K, f, w, 50)
            en = _energy(K, f, wn)
            stall += 1
            if en > e:
                break
        gn = 2 * K @ wn + f
        s, y = wn - w, gn - grad
        sy = s @ y
        w, grad, e = wn, gn, en
        history.append(e)
        step = (s @ s) / sy if sy > 0 else 2 * step
        if it % 20 == 0 and _spread(grad, w) < params.pg_tol:
            break
        if stall > 20:
            break
    return w, it, history


def _face_polish(K, f, w, max_rounds=20):
    """Exact minimizer over the face spanned by the current support.

    Solves ``2 K_SS w_S - c = -f_S, -sum w_S = -1`` (symmetric form) and adjusts the active set
    until the KKT conditions hold.  Returns ``None`` if no consistent face is
    found.
    """
    active = w > 0
    for _ in range(max_rounds):
        S = np.nonzero(active)[0]
        m = S.size
        M = np.zeros((m + 1, m + 1))
        M[:m, :m] = 2 * K[np.ix_(S, S)]
        M[:m, m] = -1.0
        M[m, :m] = -1.0
        rhs = np.concatenate([-f[S], [-1.0]])
        try:
            sol = linalg.solve(M, rhs, assume_a="sym")
        except (linalg.LinAlgError, ValueError):
            return None
        wS, c = sol[:m], sol[m]
        neg = wS < 0
        wn = np.zeros_like(w)
        wn[S] = np.maximum(wS, 0.0)
        grad = 2 * K @ wn + f
        add = (~active) & (grad < c - 1e-12 * max(1.0, abs(c)))
        if not neg.any() and not add.any():
            return wn / wn.sum()
        active = active.copy()
        active[S[neg]] = False
        active |= add
        if not active.any():
            return None
    return None


def _residuals(grad, w, mask):
    """Constant ``l``, sup |grad - c| on support and min slack off support (``c = -l``)."""
    supp = (w > 0) & mask
    c = float(np.sum(w[supp] * grad[supp]) / np.sum(w[supp]))
    sup = float(np.max(np.abs(grad[supp] - c)))
    off = (~supp) & mask
    slack = float(np.min(grad[off] - c)) if off.any() else np.inf
    return -c, sup, slack


def _minimize(K, f, params, mask=None):
    n = f.size
    if mask is None:
        mask = np.ones(n, dtype=bool)
    idx = np.nonzero(mask)[0]
    Km, fm = K[np.ix_(idx, idx)], f[idx]
    wm, it, history = _solve_qp(Km, fm, params)
    if params.polish:
        wp = _face_polish(Km, fm, wm)
        if wp is not None:
            ep = _energy(Km, fm, wp)
            if ep <= history[-1] + 1e-12 * abs(history[-1]):
                wm = wp
                history.append(min(ep, history[-1]))
    w = np.zeros(n)
    w[idx] = wm
    return w, it, history


def _support_from_weights(edges, w, params: SolverParams) -> BandSet:
    n = w.size
    above = w > params.support_threshold / n
    idx = np.nonzero(above)[0]
    if idx.size == 0:
        raise NoConvergence("empty support", operation="support")
    runs = np.split(idx, np.nonzero(np.diff(idx) > params.min_gap_cells)[0] + 1)
    return BandSet.from_intervals([(edges[r[0]], edges[r[-1] + 1]) for r in runs])


# --------------------------------------------------------------------------
# public operations
# --------------------------------------------------------------------------

def minimize_fixed_support(bands: BandSet, grid_size: int = 400, params=None) -> EquilibriumResult:
    """Equilibrium measure of ``bands`` (no external field).

    ``grid_size`` is the number of cells per band.  The Lagrange constant is
    the Robin constant ``l_sigma = 2 * int log|x - y| nu(dy)`` on the bands,
    so ``exp(l_sigma / 2)`` is the capacity.
    """
    params = SolverParams.from_dict(params) if not isinstance(params, SolverParams) else params
    if grid_size < 200:
        raise EquilibriumInputError("grid_size must be at least 200 cells per band",
                                    operation="minimize_fixed_support")
    edges, mask = band_cells(bands, grid_size)
    K = cell_kernel(edges)
    f = np.zeros(K.shape[0])
    w, it, history = _minimize(K, f, params, mask)
    grad = 2 * K @ w
    l, sup, slack = _residuals(grad, w, mask)
    converged = sup <= params.tol
    result = EquilibriumResult(DiscreteMeasure(edges, w), bands, l, sup, slack, it, converged,
                               "fixed", history)
    if not converged:
        raise NoConvergence(f"Euler-Lagrange residual {sup:.3g} exceeds {params.tol}",
                            operation="minimize_fixed_support", partial=result)
    return result


def default_domain(pot: Potential) -> float:
    """Half-width ``L`` where the field clearly dominates the logarithmic attraction."""
    x = 1.0
    vmin = np.min(pot.field(np.linspace(-x, x, 201)))
    while True:
        grid = np.linspace(-x, x, 2001)
        vmin = min(vmin, float(np.min(pot.field(grid))))
        if min(pot.field(x), pot.field(-x)) - vmin >= 5.0 + 2.0 * np.log1p(2 * x):
            return float(x)
        x *= 1.05


def minimize_external_field(pot: Potential, domain=None, grid_size: int = 2000,
                            params=None) -> EquilibriumResult:
    """Equilibrium measure in the external field ``V / g`` on ``[-L, L]``.

    ``domain`` is ``L`` or a pair ``(lo, hi)``.  The Lagrange constant is
    ``l_V`` with ``V/g - 2 int log|x - y| N(dy) = -l_V`` on the support.
    """
    params = SolverParams.from_dict(params) if not isinstance(params, SolverParams) else params
    if grid_size < 1000:
        raise EquilibriumInputError("grid_size must be at least 1000",
                                    operation="minimize_external_field")
    if domain is None:
        domain = default_domain(pot)
    lo, hi = (-float(domain), float(domain)) if np.ndim(domain) == 0 else map(float, domain)
    if not hi > lo:
        raise EquilibriumInputError("empty domain", operation="minimize_external_field")
    edges = np.linspace(lo, hi, grid_size + 1)
    K = cell_kernel(edges)
    f = cell_average(pot.field, edges)
    w, it, history = _minimize(K, f, params)
    grad = 2 * K @ w + f
    l, sup, slack = _residuals(grad, w, np.ones(w.size, dtype=bool))
    support = _support_from_weights(edges, w, params)
    converged = sup <= params.tol and slack >= -params.tol
    result = EquilibriumResult(DiscreteMeasure(edges, w), support, l, sup, slack, it, converged,
                               "external", history, f)
    edge_mass = w[:5].sum() + w[-5:].sum()
    if edge_mass > 1e-6:
        raise DomainTooSmall(f"mass {edge_mass:.3g} within 5 cells of the domain boundary",
                             operation="minimize_external_field", partial=result)
    if not converged:
        raise NoConvergence(f"Euler-Lagrange residuals ({sup:.3g}, {slack:.3g}) exceed {params.tol}",
                            operation="minimize_external_field", partial=result)
    return result


def el_residual(measure: DiscreteMeasure, field: Potential | BandSet | None = None,
                support_threshold: float = 0.0):
    """``(sup |Phi + l| on the support, min (Phi + l) off it)`` for any discrete measure.

    ``field`` is the potential (external-field problem) or the band set
    (fixed-support problem, where cells outside the bands are ignored).
    """
    if isinstance(measure, EquilibriumResult):
        measure = measure.measure
    edges, w = measure.edges, measure.weights / measure.total_mass
    ok = measure.widths > 0
    e_ok = edges[np.concatenate([[True], ok])]
    w = w[ok]
    K = cell_kernel(e_ok)
    if isinstance(field, Potential):
        f = cell_average(field.field, e_ok)
        mask = np.ones(w.size, dtype=bool)
    else:
        f = np.zeros(w.size)
        if isinstance(field, BandSet):
            mid = 0.5 * (e_ok[1:] + e_ok[:-1])
            mask = field.band_index(mid) > 0
        else:
            mask = np.ones(w.size, dtype=bool)
    grad = 2 * K @ w + f
    wt = np.where(w > support_threshold, w, 0.0)
    _, sup, slack = _residuals(grad, wt, mask)
    return sup, slack


def frequencies(result: EquilibriumResult) -> FrequencyVector:
    """Masses ``m((a_{l+1}, inf))`` for l = 1..q-1 of the result's support."""
    bands = result.support
    if bands.q < 2:
        raise SingleBand("one-band support has no frequencies", operation="frequencies")
    return FrequencyVector(tuple(float(result.measure.tail(a)) for a in bands.a[1:]))


# --------------------------------------------------------------------------
# cross-identities
# --------------------------------------------------------------------------

def _outside_tail(pot: Potential, lam):
    """Tail of ``nu_{g'}`` at ``lam`` while ``lam`` is outside ``sigma_{g'}``.

    As ``g' -> 0`` the bands shrink onto the zeros of ``v``; until ``lam``
    is swallowed the tail is the fraction of zeros above ``lam``.
    """
    zeros = pt.real_roots(pot.coeffs)
    return np.sum(zeros[None, :] > np.asarray(lam)[:, None], axis=1) / pot.q


def _nu_tail_on_bands(pot: Potential, lam, gp):
    """Tail of ``nu_{g'}`` at points ``lam`` known to lie in ``sigma_{g'}`` (per-point ``g'``).

    Bands never merge while ``g'`` stays regular, so band ``l`` always holds
    the ``l``-th zero of ``v`` and lies between consecutive critical points.
    """
    v = pot.v_poly
    q = pot.q
    crit = pt.real_roots(v.deriv().coef)
    zeros = pt.real_roots(v.coef)
    l = 1 + np.searchsorted(crit, lam)
    # orientation: v has the sign of -v'(zero) at the left end of the band
    s = -np.sign(v.deriv()(zeros))[l - 1]
    u = v(lam) / (2.0 * np.sqrt(gp))
    theta = (-q + l - 1) * np.pi + np.arccos(np.clip(s * u, -1.0, 1.0))
    return -theta / (np.pi * q)


def averaged_nu_tail(pot: Potential, lam, order: int = 32):
    """``g^{-1} int_0^g nu_{g'}((lam, inf)) dg'`` for the square class.

    For each ``lam`` the integrand is constant for ``g' < g* = v(lam)**2 / 4``
    and has a square-root onset at ``g*``; the remaining range is integrated by
    Gauss-Legendre after ``g' = g* + (g - g*) t**2``.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    g = pot.g
    gstar = np.minimum(pot.v(lam) ** 2 / 4.0, g)
    const = _outside_tail(pot, lam)
    x, wts = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * wts
    total = gstar * const
    for ti, wi in zip(t, wt):
        gp = gstar + (g - gstar) * ti * ti
        vals = np.where(gp > 0, _nu_tail_on_bands(pot, lam, np.maximum(gp, 1e-300)), const)
        total = total + wi * 2.0 * (g - gstar) * ti * vals
    return total / g


def check_nnu(pot: Potential, g: float | None = None, order: int = 32, samples: int = 400,
              method: str = "auto", grid_size: int = 2000, domain=None) -> float:
    """Sup distance between the tail of ``N_g`` and the ``g'``-average of ``nu_{g'}`` tails.

    ``method="closed"`` uses the explicit square-class formulas, ``"numeric"``
    solves both equilibrium problems at every Gauss node (Gauss-Legendre on
    ``(g/1000, g]``).
    """
    if g is not None:
        pot = pot.with_g(g)
    if method == "auto":
        method = "closed" if pot.is_square else "numeric"
    if method == "closed":
        if not pot.is_square:
            raise EquilibriumInputError("closed-form check needs a square-class potential",
                                        operation="check_nnu")
        bands = pot.bands
        pad = 0.1 * bands.span
        lam = np.linspace(bands.edges[0] - pad, bands.edges[-1] + pad, samples)
        lam = np.union1d(lam, bands.edges)
        avg = averaged_nu_tail(pot, lam, order)
        N = pt.tail_functions(pot, lam)[0]
        return float(np.max(np.abs(avg - N)))
    if method != "numeric":
        raise EquilibriumInputError(f"unknown method {method!r}", operation="check_nnu")
    g = pot.g
    eps = g / 1000.0
    res = minimize_external_field(pot, domain, grid_size)
    lam = res.measure.edges
    x, wts = np.polynomial.legendre.leggauss(order)
    gp = eps + (g - eps) * 0.5 * (x + 1.0)
    wt = (g - eps) * 0.5 * wts
    # the first slab (0, eps] uses the tail at its midpoint
    nodes = np.concatenate([[eps / 2], gp])
    weights = np.concatenate([[eps], wt])
    avg = np.zeros_like(lam)
    for gi, wi in zip(nodes, weights):
        sup = minimize_external_field(pot.with_g(gi), domain, grid_size).support
        nu = minimize_fixed_support(sup)
        avg += wi * nu.measure.tail(lam)
    return float(np.max(np.abs(avg / g - res.measure.tail(lam))))


def lyapunov_potential_identity(pot: Potential, lam_samples, order: int = 32) -> float:
    """``sup |V(lam) - 2 int_0^g gamma_{g'}(lam) dg'|`` over the samples.

    ``gamma_{g'}(lam)`` vanishes once ``lam`` is in ``sigma_{g'}``, i.e. for
    ``g' >= g* = v(lam)**2/4``; on ``(0, g*)`` we substitute
    ``g' = g* s**2`` with ``s = 1 - (1-t)**2`` to smooth both the logarithmic
    end at 0 and the square-root end at ``g*``.
    """
    from . import jacobi

    if not pot.is_square:
        raise EquilibriumInputError("needs a square-class potential",
                                    operation="lyapunov_potential_identity")
    lam = np.atleast_1d(np.asarray(lam_samples, dtype=float))
    x, wts = np.polynomial.legendre.leggauss(order)
    t = 0.5 * (x + 1.0)
    wt = 0.5 * wts
    s = 1.0 - (1.0 - t) ** 2
    ds = 2.0 * (1.0 - t)
    errs = []
    for lj in lam:
        gstar = min(pot.v(lj) ** 2 / 4.0, pot.g)
        total = 0.0
        if gstar > 0:
            for si, dsi, wi in zip(s, ds, wt):
                gp = gstar * si * si
                gamma = jacobi.lyapunov_square(pot.with_g(gp), lj)
                total += wi * gamma * 2.0 * gstar * si * dsi
        errs.append(abs(pot.V(lj) - 2.0 * total))
    return float(np.max(errs))
