"""Command-line front end: ``specband <subcommand> [flags]``.

Configuration is layered: built-in defaults, then a JSON ``--config`` file,
then explicit flags.  The resolved configuration is written to
``resolved-config.json`` in the output directory and re-runs to identical
outputs.  Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import equilibrium as eq
from . import jacobi, orthopoly, riemann, rmt, verify
from . import potential as pt
from .errors import ConfigError, SpecbandError
from .io import OutputDir
from .potential import BandSet, Potential

DEFAULT_POTENTIAL = {"kind": "square", "v": [0.0, -1.0], "g": 1.0}

# per-subcommand numeric parameters and their defaults
PARAMS = {
    "equilibrium": {"problem": "external", "grid_size": 2000, "domain": None, "bands": None},
    "recurrence": {"n": 40, "l_max": 60},
    "bands": {},
    "ids": {"m": 2000, "grid": 1001, "r": None, "s": None},
    "hill": {"r": None, "s": None},
    "lyapunov": {"r": None, "s": None, "lam": [-3.0, 3.0], "grid": 601},
    "surface": {"bands": None},
    "theta-fit": {"bands": None, "source": "periodic", "n": 60, "targets": None, "count": 6},
    "mc": {"n": 64, "chains": 4, "sweeps": 10000, "burn_in": None, "thin": 1,
           "statistics": [{"kind": "polynomial", "coeffs": [0, 0, 1]}], "save_samples": False},
    "gap": {"n": 8, "interval": [-0.25, 0.25], "quad_order": 40},
    "covariance": {"n_list": [16, 32], "phi1": {"kind": "resolvent", "z": [0, 2]},
                   "phi2": {"kind": "resolvent", "z": [0, -2]}, "chains": 4, "sweeps": 20000,
                   "burn_in": None},
    "verify-all": {"suite": "quick"},
}
TOP_KEYS = {"subcommand", "potential", "params", "seed", "out", "format", "workers"}


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def _json_arg(text, what):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} is not valid JSON: {text!r}", operation="config") from exc


def resolve_config(args) -> dict:
    cfg = {"subcommand": args.command, "potential": dict(DEFAULT_POTENTIAL),
           "params": dict(PARAMS[args.command]), "seed": 0, "out": "specband-out",
           "format": "csv", "workers": int(os.environ.get("SPECBAND_WORKERS", "1") or 1)}
    if args.config:
        try:
            with open(args.config) as fh:
                user = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}", operation="config") from exc
        unknown = set(user) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}", operation="config")
        if user.get("subcommand", args.command) != args.command:
            raise ConfigError(f"config is for {user['subcommand']!r}, not {args.command!r}",
                              operation="config")
        params = user.get("params", {})
        bad = set(params) - set(PARAMS[args.command])
        if bad:
            raise ConfigError(f"unknown parameters for {args.command}: {sorted(bad)}",
                              operation="config")
        cfg["params"].update(params)
        for key in ("potential", "seed", "out", "format", "workers"):
            if key in user:
                cfg[key] = user[key]
    if args.v is not None:
        cfg["potential"] = {"kind": "square", "v": _json_arg(args.v, "--v"),
                            "g": cfg["potential"].get("g", 1.0)}
    if args.V is not None:
        cfg["potential"] = {"kind": "poly", "V": _json_arg(args.V, "--V"),
                            "g": cfg["potential"].get("g", 1.0)}
    if args.g is not None:
        cfg["potential"]["g"] = args.g
    for key in ("seed", "out", "format", "workers"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if getattr(args, "suite", None) is not None:
        cfg["params"]["suite"] = args.suite
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}", operation="config")
        k, v = item.split("=", 1)
        if k not in PARAMS[args.command]:
            raise ConfigError(f"unknown parameter {k!r} for {args.command}", operation="config")
        cfg["params"][k] = _json_arg(v, f"--set {k}")
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["format"] not in ("csv", "json"):
        raise ConfigError("format must be csv or json", operation="config")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a nonnegative integer", operation="config")
    if not isinstance(cfg["workers"], int) or cfg["workers"] < 1:
        raise ConfigError("workers must be a positive integer", operation="config")
    p = cfg["params"]
    for key in ("grid_size", "n", "l_max", "m", "grid", "chains", "sweeps", "thin", "quad_order",
                "count"):
        if key in p and p[key] is not None and (not isinstance(p[key], int) or p[key] < 1):
            raise ConfigError(f"{key} must be a positive integer", operation="config")
    if cfg["subcommand"] == "verify-all" and p["suite"] not in verify.SUITES:
        raise ConfigError(f"suite must be one of {sorted(verify.SUITES)}", operation="config")
    Potential.from_spec(cfg["potential"])


def _operator(cfg) -> jacobi.JacobiOperator:
    p = cfg["params"]
    if p.get("r") is not None:
        return jacobi.JacobiOperator.periodic(p["r"], p.get("s"))
    return jacobi.periodic_from_square(Potential.from_spec(cfg["potential"]))


def _bands(cfg) -> BandSet:
    edges = cfg["params"].get("bands")
    if edges is not None:
        return BandSet(tuple(edges))
    return Potential.from_spec(cfg["potential"]).bands


# --------------------------------------------------------------------------
# subcommands; each returns the summary line
# --------------------------------------------------------------------------

def cmd_equilibrium(cfg, out):
    p = cfg["params"]
    pot = Potential.from_spec(cfg["potential"])
    if p["problem"] == "external":
        res = eq.minimize_external_field(pot, p["domain"], p["grid_size"])
    elif p["problem"] == "fixed":
        res = eq.minimize_fixed_support(_bands(cfg), p["grid_size"])
    else:
        raise ConfigError("problem must be 'external' or 'fixed'", operation="equilibrium")
    out.write_json("equilibrium.json", res.record())
    m = res.measure
    out.write_table("measure", ["node", "weight"], zip(m.nodes, m.weights), cfg["format"])
    return (f"equilibrium {p['problem']}: support={np.round(res.support.edges, 6).tolist()} "
            f"l={res.lagrange_constant:.8f} residual={res.el_residual_sup:.2e} "
            f"slack={res.el_min_slack:.2e}")


def cmd_recurrence(cfg, out):
    p = cfg["params"]
    pot = Potential.from_spec(cfg["potential"])
    table = orthopoly.stieltjes_recurrence(pot, p["n"], p["l_max"])
    out.write_json("recurrence.meta.json", table.header())
    out.write_table("recurrence", ["l", "r", "s"],
                    zip(range(table.l_max + 1), table.r, table.s), cfg["format"])
    n = int(p["n"])
    rn = table.r[n] if n <= table.l_max else float("nan")
    return f"recurrence n={n} l_max={table.l_max}: r_0={table.r[0]:.10f} r_n={rn:.10f}"


def cmd_bands(cfg, out):
    bands = Potential.from_spec(cfg["potential"]).bands
    out.write_table("bands", ["band", "a", "b"],
                    [(l + 1, a, b) for l, (a, b) in enumerate(bands.intervals)], cfg["format"])
    return "bands q={} edges={}".format(bands.q, ",".join(f"{e:.12g}" for e in bands.edges))


def cmd_ids(cfg, out):
    p = cfg["params"]
    op = _operator(cfg)
    bands = jacobi.hill_discriminant(op).bands
    pad = 0.1 * bands.span
    lam = np.linspace(bands.edges[0] - pad, bands.edges[-1] + pad, p["grid"])
    k = jacobi.ids_estimate(op, p["m"], lam)
    cols, rows = ["lambda", "k_m"], [lam, k]
    extra = ""
    if p.get("r") is None:
        nu = pt.tail_functions(Potential.from_spec(cfg["potential"]), lam)[1]
        cols.append("nu_g")
        rows.append(nu)
        extra = f" sup|k_m-nu_g|={np.max(np.abs(k - nu)):.2e}"
    out.write_table("ids", cols, zip(*rows), cfg["format"])
    return f"ids m={p['m']} points={lam.size}{extra}"


def cmd_hill(cfg, out):
    hill = jacobi.hill_discriminant(_operator(cfg))
    out.write_json("hill.json", {"coeffs": hill.coeffs, "bands": hill.bands.edges})
    out.write_table("hill", ["power", "coefficient"], enumerate(hill.coeffs), cfg["format"])
    return "hill coeffs={} bands={}".format(np.round(hill.coeffs, 12).tolist(),
                                           np.round(hill.bands.edges, 12).tolist())


def cmd_lyapunov(cfg, out):
    p = cfg["params"]
    lam = np.linspace(p["lam"][0], p["lam"][1], p["grid"])
    gamma = jacobi.lyapunov_exponent(_operator(cfg), lam)
    out.write_table("lyapunov", ["lambda", "gamma"], zip(lam, gamma), cfg["format"])
    return f"lyapunov points={lam.size} max={np.max(gamma):.6f} zero-fraction={np.mean(gamma == 0):.3f}"


def cmd_surface(cfg, out):
    surface = riemann.surface_from_bands(_bands(cfg))
    rec = surface.record()
    rec["rie_distance"] = riemann.rie_relation_check(surface)
    out.write_json("surface.json", rec)
    return (f"surface genus={surface.genus} U={np.round(surface.U, 10).tolist()} "
            f"l_sigma={surface.l_sigma:.10f} rie={rec['rie_distance']:.1e}")


def cmd_theta_fit(cfg, out):
    p = cfg["params"]
    pot = Potential.from_spec(cfg["potential"])
    surface = riemann.surface_from_bands(_bands(cfg))
    if p["targets"] is not None:
        targets = np.asarray(p["targets"], dtype=float)
    elif p["source"] == "periodic":
        r = np.asarray(jacobi.periodic_from_square(pot).r)
        targets = r[np.arange(p["count"]) % r.size]
    elif p["source"] == "orthopoly":
        n = p["n"]
        targets = orthopoly.stieltjes_recurrence(pot, n, n + p["count"]).r[n:n + p["count"]]
    else:
        raise ConfigError("source must be 'periodic' or 'orthopoly'", operation="theta-fit")
    x, resid = riemann.shift_equivalence_fit(surface, targets)
    orbit = riemann.orbit(surface, x, targets.size)
    out.write_json("fit.json", {"shift": x, "residual": resid, "U": surface.U})
    out.write_table("orbit", ["k", "R", "target_squared"],
                    zip(range(targets.size), orbit, targets**2), cfg["format"])
    return f"theta-fit shift={np.round(x, 10).tolist()} residual={resid:.2e}"


def _mc_kwargs(cfg):
    p = cfg["params"]
    return {"chains": p["chains"], "sweeps": p["sweeps"], "burn_in": p["burn_in"],
            "seed": cfg["seed"], "workers": cfg["workers"]}


def cmd_mc(cfg, out):
    p = cfg["params"]
    pot = Potential.from_spec(cfg["potential"])
    sample = rmt.sample_loggas(pot, p["n"], thin=p["thin"], **_mc_kwargs(cfg))
    rows = []
    for spec in p["statistics"]:
        st = rmt.linear_statistic(sample, spec)
        m, se = complex(st.mean), complex(st.se)
        rows.append((st.tag, m.real, m.imag, se.real, se.imag, st.tau))
    out.write_table("statistics", ["statistic", "mean_re", "mean_im", "se_re", "se_im", "tau"],
                    rows, cfg["format"])
    out.write_json("sample.json", sample.meta())
    if p["save_samples"]:
        sample.save(out.path("samples.bin"))
    first = rows[0]
    return (f"mc n={p['n']} configs={sample.chains * sample.retained} "
            f"acceptance={np.round(sample.acceptance, 3).tolist()} "
            f"{first[0]}={first[1]:.6f}+-{first[3]:.6f}")


def cmd_gap(cfg, out):
    p = cfg["params"]
    pot = Potential.from_spec(cfg["potential"])
    res = rmt.gap_probability(pot, p["n"], p["interval"], p["quad_order"])
    out.write_json("gap.json", {"n": p["n"], "interval": p["interval"], "value": res.value,
                                "raw": res.raw, "clamped": res.clamped})
    return f"gap n={p['n']} interval={p['interval']} E={res.value:.10f}"


def cmd_covariance(cfg, out):
    p = cfg["params"]
    pot = Potential.from_spec(cfg["potential"])
    mc = _mc_kwargs(cfg)
    rows = rmt.covariance_scaling(pot, p["phi1"], p["phi2"], p["n_list"], mc)
    table = [(r["n"], complex(r["scaled"]).real, complex(r["scaled"]).imag,
              abs(complex(r["scaled_se"])), complex(r.get("ratio", np.nan)).real) for r in rows]
    out.write_table("covariance", ["n", "n2cov_re", "n2cov_im", "n2cov_se", "ratio"], table,
                    cfg["format"])
    return "covariance " + " ".join(f"n={t[0]}:{t[1]:.5f}+-{t[3]:.5f}" for t in table)


def cmd_verify_all(cfg, out):
    results = verify.run_suite(cfg["params"]["suite"], cfg["workers"])
    for r in results:
        print(r.line())
    out.write_table("verify", ["criterion", "title", "passed", "detail"],
                    [(r.number, r.title, r.passed, r.detail) for r in results], cfg["format"])
    failed = [r.number for r in results if not r.passed]
    if failed:
        raise verify_failure(failed)
    return f"verify-all {cfg['params']['suite']}: {len(results)} criteria passed"


def verify_failure(failed):
    return SpecbandError(f"criteria {failed} failed", operation="verify-all", module="cli")


COMMANDS = {
    "equilibrium": cmd_equilibrium, "recurrence": cmd_recurrence, "bands": cmd_bands,
    "ids": cmd_ids, "hill": cmd_hill, "lyapunov": cmd_lyapunov, "surface": cmd_surface,
    "theta-fit": cmd_theta_fit, "mc": cmd_mc, "gap": cmd_gap, "covariance": cmd_covariance,
    "verify-all": cmd_verify_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specband",
                                     description="Equilibrium measures, orthogonal polynomials, "
                                                 "Jacobi operators and log-gas statistics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--workers", type=int, help="worker threads (default $SPECBAND_WORKERS or 1)")
        sp.add_argument("--format", choices=["csv", "json"])
        sp.add_argument("--v", help="square class: JSON coefficients of v, ascending")
        sp.add_argument("--V", help="general class: JSON coefficients of V, ascending")
        sp.add_argument("--g", type=float, help="amplitude g")
        sp.add_argument("--set", action="append", metavar="KEY=JSON",
                        help="override one subcommand parameter")
        if name == "verify-all":
            sp.add_argument("--suite", choices=sorted(verify.SUITES))
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = OutputDir(cfg["out"])
        out.write_json("resolved-config.json", cfg)
        print(COMMANDS[args.command](cfg, out))
        return 0
    except SpecbandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3 if exc.numerical else 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
