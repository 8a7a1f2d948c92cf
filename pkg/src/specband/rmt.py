"""Monte Carlo for the beta = 2 log-gas and determinantal-kernel statistics.

The eigenvalue density of the unitary-invariant ensemble with weight
``exp(-n V / g)`` is ``prod_{i<j} |x_i - x_j|**2 exp(-n sum V(x_j) / g)``.
Chains use single-eigenvalue Gaussian Metropolis moves; the random numbers
of chain ``c`` come from ``SeedSequence(seed, spawn_key=(c,))`` so runs are
reproducible independently of the worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numba
import numpy as np

from . import jacobi, orthopoly
from . import potential as pt
from .errors import InsufficientSamples, NonConfining, RmtInputError
from .potential import Potential

BLOCK = 200          # sweeps per pre-drawn random block
ESCAPE = 50.0


@dataclass
class EnsembleSample:
    n: int
    potential: Potential
    configs: np.ndarray        # (chains, retained, n), each row sorted
    seed: int
    burn_in: int
    thin: int
    acceptance: np.ndarray     # per chain, after burn-in
    steps: np.ndarray          # frozen proposal widths per chain

    @property
    def chains(self) -> int:
        return self.configs.shape[0]

    @property
    def retained(self) -> int:
        return self.configs.shape[1]

    def pooled(self) -> np.ndarray:
        return self.configs.reshape(-1)

    def meta(self) -> dict:
        return {"n": self.n, "potential": self.potential.to_spec(), "seed": self.seed,
                "burn_in": self.burn_in, "thin": self.thin, "chains": self.chains,
                "retained": self.retained, "acceptance": self.acceptance.tolist(),
                "steps": self.steps.tolist()}

    def save(self, path) -> None:
        """Binary rows of sorted eigenvalues (float64, little endian) plus a JSON sidecar."""
        path = Path(path)
        self.configs.astype("<f8").tofile(path)
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(self.meta(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "EnsembleSample":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        data = np.fromfile(path, dtype="<f8").reshape(meta["chains"], meta["retained"], meta["n"])
        return cls(meta["n"], Potential.from_spec(meta["potential"]), data, meta["seed"],
                   meta["burn_in"], meta["thin"], np.asarray(meta["acceptance"]),
                   np.asarray(meta["steps"]))


@dataclass
class LinearStatistic:
    tag: str
    series: np.ndarray         # (chains, retained) values of n^{-1} sum phi(x_l)
    mean: complex
    variance: float            # pooled variance of the series (real and imaginary parts summed)
    se: complex                # autocorrelation-corrected standard error (per real/imag part)
    tau: float                 # largest integrated autocorrelation time over chains


# --------------------------------------------------------------------------
# sampler kernel
# --------------------------------------------------------------------------

@numba.njit(cache=True, nogil=True)
def _horner(c, x):
    acc = 0.0
    for k in range(c.size - 1, -1, -1):
        acc = acc * x + c[k]
    return acc


@numba.njit(cache=True, nogil=True)
def _run_block(x, coeffs, n_scale, step, normals, uniforms, out, thin, offset):
    """Metropolis sweeps over one random block; stores every ``thin``-th sweep from ``offset``."""
    n = x.size
    sweeps = normals.shape[0]
    accepted = 0
    stored = 0
    for t in range(sweeps):
        for k in range(n):
            y = x[k] + step * normals[t, k]
            dlog = -n_scale * (_horner(coeffs, y) - _horner(coeffs, x[k]))
            for j in range(n):
                if j != k:
                    dy = abs(y - x[j])
                    if dy == 0.0:
                        dlog = -np.inf
                        break
                    dlog += 2.0 * (np.log(dy) - np.log(abs(x[k] - x[j])))
            if np.log(uniforms[t, k]) < dlog:
                x[k] = y
                accepted += 1
        if out.shape[0] > 0 and (t - offset) >= 0 and (t - offset) % thin == 0:
            idx = (t - offset) // thin
            if idx < out.shape[0]:
                out[idx, :] = np.sort(x)
                stored += 1
    return accepted, stored


def _initial_config(pot: Potential, n: int) -> np.ndarray:
    """Quantiles of the equilibrium measure when explicit, else of a uniform guess."""
    u = (np.arange(n) + 0.5) / n
    if pot.is_square:
        bands = pot.bands
        grid = np.linspace(bands.edges[0], bands.edges[-1], 20001)
        tail = pt.tail_functions(pot, grid)[0]
        return np.interp(u, tail[::-1], grid[::-1])
    from .equilibrium import default_domain
    half = 0.5 * default_domain(pot)
    return -half + 2 * half * u


def _chain(pot, n, coeffs, seed, chain, sweeps, burn_in, thin, step0):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(chain,)))
    x = _initial_config(pot, n).astype(float)
    step = step0
    n_scale = float(n)
    # burn-in with step adaptation toward 30-50% acceptance
    done = 0
    escapes = 0
    empty = np.empty((0, n))
    while done < burn_in:
        m = min(BLOCK, burn_in - done)
        for sub in range(0, m, 50):
            k = min(50, m - sub)
            acc, _ = _run_block(x, coeffs, n_scale, step, rng.standard_normal((k, n)),
                                rng.random((k, n)), empty, 1, 0)
            rate = acc / (k * n)
            if rate < 0.3:
                step *= 0.8
            elif rate > 0.5:
                step *= 1.25
        done += m
        escapes = escapes + 1 if np.max(np.abs(x)) > ESCAPE else 0
        if escapes >= 2:
            raise NonConfining("walker left |x| <= 50 during burn-in", operation="sample_loggas")
    retained = sweeps // thin
    out = np.empty((retained, n))
    accepted = 0
    t = 0
    while t < sweeps:
        m = min(BLOCK, sweeps - t)
        first = (-t) % thin
        start_idx = (t + first) // thin
        buf = np.empty(((m - first + thin - 1) // thin if m > first else 0, n))
        acc, stored = _run_block(x, coeffs, n_scale, step, rng.standard_normal((m, n)),
                                 rng.random((m, n)), buf, thin, first)
        out[start_idx:start_idx + stored] = buf[:stored]
        accepted += acc
        t += m
        escapes = escapes + 1 if np.max(np.abs(x)) > ESCAPE else 0
        if escapes >= 2:
            raise NonConfining("walker left |x| <= 50", operation="sample_loggas")
    return out, accepted / (sweeps * n), step


def sample_loggas(pot: Potential, n: int, chains: int = 4, sweeps: int = 10000, seed: int = 0,
                  burn_in: int | None = None, thin: int = 1, step: float | None = None,
                  workers: int = 1) -> EnsembleSample:
    """Metropolis samples of the ``n``-point log-gas; ``sweeps`` counts post-burn-in sweeps per chain."""
    if not 1 <= n <= 256:
        raise RmtInputError("n must lie in 1..256", operation="sample_loggas")
    if chains < 1 or sweeps < 1 or thin < 1:
        raise RmtInputError("chains, sweeps and thin must be positive", operation="sample_loggas")
    if sweeps % thin:
        raise RmtInputError("sweeps must be a multiple of thin", operation="sample_loggas")
    if burn_in is None:
        burn_in = max(1000, sweeps // 10)
    coeffs = np.ascontiguousarray(np.asarray(pot.V_poly.coef, dtype=float) / pot.g)
    step0 = step if step is not None else 1.0 / np.sqrt(n)

    def run(c):
        return _chain(pot, n, coeffs, seed, c, sweeps, burn_in, thin, step0)

    if workers > 1 and chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(run, range(chains)))
    else:
        results = [run(c) for c in range(chains)]
    configs = np.stack([r[0] for r in results])
    acc = np.array([r[1] for r in results])
    steps = np.array([r[2] for r in results])
    return EnsembleSample(n, pot, configs, seed, burn_in, thin, acc, steps)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def integrated_autocorrelation(x: np.ndarray, c: float = 5.0) -> float:
    """Integrated autocorrelation time ``1/2 + sum rho_t`` with Sokal's automatic window."""
    x = np.asarray(x, dtype=float)
    N = x.size
    x = x - x.mean()
    var = x @ x / N
    if var == 0 or N < 4:
        return 0.5
    size = 1 << int(np.ceil(np.log2(2 * N)))
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conj(f), size)[:N] / (N * var)
    tau = 0.5
    for t in range(1, N):
        tau += acf[t]
        if t >= c * tau:
            break
    return float(max(tau, 0.5))


def _mean_se(series: np.ndarray):
    """Pooled mean and standard error of the mean over chains of a real series."""
    means, var_means, taus = [], [], []
    for row in series:
        tau = integrated_autocorrelation(row)
        means.append(row.mean())
        var_means.append(row.var() * 2.0 * tau / row.size)
        taus.append(tau)
    C = series.shape[0]
    return float(np.mean(means)), float(np.sqrt(np.sum(var_means)) / C), float(max(taus))


def test_function(spec) -> tuple[str, Callable]:
    """Resolve a test-function description to ``(tag, callable)``."""
    if callable(spec):
        return getattr(spec, "__name__", "custom"), spec
    kind = spec.get("kind")
    if kind == "resolvent":
        z = complex(*spec["z"]) if isinstance(spec["z"], (list, tuple)) else complex(spec["z"])
        return f"resolvent({z})", lambda x: 1.0 / (x - z)
    if kind == "polynomial":
        c = np.asarray(spec["coeffs"], dtype=float)
        return "polynomial", lambda x: np.polynomial.polynomial.polyval(x, c)
    if kind == "indicator":
        a, b = spec["interval"]
        return f"indicator({a},{b})", lambda x: ((x > a) & (x < b)).astype(float)
    raise RmtInputError(f"unknown test function {spec!r}", operation="test_function")


def linear_statistic(sample: EnsembleSample, phi) -> LinearStatistic:
    """``N_n[phi] = n^{-1} sum phi(x_l)`` per retained configuration with error bars."""
    tag, f = test_function(phi)
    series = np.mean(f(sample.configs), axis=2)
    if np.iscomplexobj(series):
        mr, sr, tr = _mean_se(series.real)
        mi, si, ti = _mean_se(series.imag)
        var = float(series.real.var() + series.imag.var())
        return LinearStatistic(tag, series, complex(mr, mi), var, complex(sr, si), max(tr, ti))
    m, s, t = _mean_se(series)
    return LinearStatistic(tag, series, m, float(series.var()), s, t)


def covariance(sample: EnsembleSample, phi1, phi2):
    """Bilinear covariance ``E[XY] - E[X]E[Y]`` of two linear statistics and its standard error."""
    x = linear_statistic(sample, phi1).series
    y = linear_statistic(sample, phi2).series
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    prod = xc * yc
    if np.iscomplexobj(prod):
        mr, sr, _ = _mean_se(prod.real)
        mi, si, _ = _mean_se(prod.imag)
        return complex(mr, mi), complex(sr, si)
    m, s, _ = _mean_se(prod)
    return m, s


def covariance_scaling(pot: Potential, phi1, phi2, n_list, mc_params: dict | None = None) -> list:
    """``n**2 Cov{N_n[phi1], N_n[phi2]}`` for each n with errors and consecutive ratios."""
    mc = dict(mc_params or {})
    rows = []
    for n in n_list:
        if not 8 <= n <= 128:
            raise RmtInputError("n must lie in [8, 128]", operation="covariance_scaling")
        sample = sample_loggas(pot, n, **mc)
        cov, se = covariance(sample, phi1, phi2)
        if abs(cov) == 0 and abs(se) == 0:
            rel = 0.0
        else:
            rel = abs(se) / abs(cov) if abs(cov) > 0 else np.inf
        if rel > 0.5:
            raise InsufficientSamples(f"relative error {rel:.2f} of the covariance at n = {n}",
                                      operation="covariance_scaling")
        rows.append({"n": int(n), "cov": cov, "se": se, "scaled": cov * n * n,
                     "scaled_se": se * n * n})
    for a, b in zip(rows[:-1], rows[1:]):
        b["ratio"] = b["scaled"] / a["scaled"] if a["scaled"] != 0 else np.nan
    return rows


# --------------------------------------------------------------------------
# kernel formulas
# --------------------------------------------------------------------------

def _kernel_rule(pot: Potential, n: int, points_per_panel: int = 20, panels: int = 30):
    base = orthopoly.auto_rule(pot, n, n)
    return orthopoly.build_quadrature(pot, n, base.L, points_per_panel, panels)


def kernel_covariance(pot: Potential, n: int, phi1, phi2, panels: int = 30) -> complex:
    """``Cov{N_n[phi1], N_n[phi2]}`` from the reproducing kernel.

    ``Cov(sum phi1, sum phi2) = 1/2 iint (phi1(x)-phi1(y))(phi2(x)-phi2(y)) K_n(x,y)**2``.
    """
    _, f1 = test_function(phi1)
    _, f2 = test_function(phi2)
    table = orthopoly.stieltjes_recurrence(pot, n, n)
    rule = _kernel_rule(pot, n, panels=panels)
    x, w = rule.nodes, rule.weights
    K = orthopoly.kernel_matrix(table, n, x)
    Kt = np.sqrt(w)[:, None] * K * np.sqrt(w)[None, :]
    a, b = f1(x), f2(x)
    da = a[:, None] - a[None, :]
    db = b[:, None] - b[None, :]
    val = 0.5 * np.sum(da * db * Kt * Kt) / n**2
    return complex(val) if np.iscomplexobj(val) else float(val)


@dataclass(frozen=True)
class GapProbability:
    value: float
    raw: float
    clamped: bool


def gap_probability(pot: Potential, n: int, interval, quad_order: int = 40,
                    table=None) -> GapProbability:
    """``det(1 - K_n)`` restricted to ``interval`` by Nystrom discretization."""
    a, b = float(interval[0]), float(interval[1])
    if not b > a:
        return GapProbability(1.0, 1.0, False)
    if quad_order < 40:
        raise RmtInputError("quad_order must be at least 40", operation="gap_probability")
    if table is None:
        table = orthopoly.stieltjes_recurrence(pot, n, n)
    # outside the truncation range the kernel vanishes to double precision
    L = table.rule.L
    a, b = max(a, -L), min(b, L)
    if not b > a:
        return GapProbability(1.0, 1.0, False)
    # panels no wider than those of the rule that resolves the kernel
    panels = max(1, int(np.ceil((b - a) * table.rule.panels / (2 * L))))
    t, w = np.polynomial.legendre.leggauss(quad_order)
    h = (b - a) / panels
    left = a + h * np.arange(panels)
    x = (left[:, None] + 0.5 * h * (t + 1)).ravel()
    w = np.tile(0.5 * h * w, panels)
    K = orthopoly.kernel_matrix(table, n, x)
    M = np.sqrt(w)[:, None] * K * np.sqrt(w)[None, :]
    M = 0.5 * (M + M.T)
    eig = np.linalg.eigvalsh(M)
    raw = float(np.prod(1.0 - eig))
    value = min(max(raw, 0.0), 1.0)
    return GapProbability(value, raw, value != raw)


def empty_interval_frequency(sample: EnsembleSample, interval):
    """Fraction of configurations with no eigenvalue in ``interval`` and its standard error."""
    a, b = interval
    hit = np.any((sample.configs > a) & (sample.configs < b), axis=2)
    series = (~hit).astype(float)
    m, s, _ = _mean_se(series)
    return m, s


def equilibrium_integral(pot: Potential, phi, which: str = "N", nodes: int = 400) -> complex:
    """``int phi dN_g`` (``which="N"``) or ``int phi d nu_g`` for the square class."""
    _, f = test_function(phi)
    dens = pt.density_N if which == "N" else pt.density_nu
    lam, w = pt.band_nodes(pot.bands, nodes)
    return complex(np.sum(w * f(lam) * dens(pot, lam)))


def functional_correspondence(pot: Potential, phi, n: int, g_nodes: int = 32,
                              mc_params: dict | None = None, sample: EnsembleSample | None = None):
    """Monte Carlo mean of ``N_n[phi]`` against ``int_0^1 dg' int phi d nu_{g g'}``.

    Returns ``(lhs, lhs_se, rhs)``.
    """
    if not pot.is_square:
        raise RmtInputError("needs a square-class potential", operation="functional_correspondence")
    x, w = np.polynomial.legendre.leggauss(g_nodes)
    t, wt = 0.5 * (x + 1.0), 0.5 * w
    rhs = sum(wi * equilibrium_integral(pot.with_g(pot.g * ti), phi, "nu") for ti, wi in zip(t, wt))
    if sample is None:
        sample = sample_loggas(pot, n, **dict(mc_params or {}))
    stat = linear_statistic(sample, phi)
    return stat.mean, stat.se, rhs


def _resolvent_block(op, z, m):
    return jacobi.resolvent_entries(op, z, m, [(0, 0), (-1, -1), (0, -1)])


def _resolvent_derivative(op, z, m):
    """``d/dz (J - z)^{-1}_{jk} = ((J - z)^{-2})_{jk}`` for the same index triple."""
    cols = {}
    c = m // 2
    d, e = op.coefficients(-c, m)
    from scipy import linalg
    ab = np.zeros((3, m), dtype=complex)
    ab[0, 1:] = e
    ab[1, :] = d - z
    ab[2, :-1] = e
    rhs = np.zeros((m, 2), dtype=complex)
    rhs[c, 0] = 1.0
    rhs[c - 1, 1] = 1.0
    sol = linalg.solve_banded((1, 1), ab, rhs)
    cols[0], cols[-1] = sol[:, 0], sol[:, 1]
    return np.array([cols[0] @ cols[0], cols[-1] @ cols[-1], cols[0] @ cols[-1]])


def variance_formula_eval(pot: Potential, z1: complex, z2: complex, shift: int = 0,
                          m: int = 4000) -> complex:
    """Limiting ``n**2 Cov{N_n[phi_z1], N_n[phi_z2]}`` from the periodic limit operator.

    ``r_{-1}**2 (D_00 D_{-1,-1} - D_{0,-1}**2)`` with ``D_jk`` the divided
    difference of ``G_jk`` between ``z1`` and ``z2``; ``shift`` rotates the
    period window.
    """
    for z in (z1, z2):
        if abs(complex(z).imag) < 1e-8:
            raise RmtInputError("spectral parameters must be off the real axis",
                                operation="variance_formula_eval")
    op = jacobi.periodic_from_square(pot)
    p = op.period
    r = np.roll(np.asarray(op.r), -shift)
    s = np.roll(np.asarray(op.s), -shift)
    op = jacobi.JacobiOperator.periodic(r, s)
    if abs(z1 - z2) < 1e-8:
        D = _resolvent_derivative(op, z1, m)
    else:
        D = (_resolvent_block(op, z1, m) - _resolvent_block(op, z2, m)) / (z1 - z2)
    r_prev = r[(-1) % p]
    return complex(r_prev**2 * (D[0] * D[1] - D[2] ** 2))
