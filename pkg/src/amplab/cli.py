"""Command-line orchestration: config, subcommands, manifests.

Every run writes its artifacts into one output directory together with a
``manifest.json`` recording the config snapshot, per-stage seeds, wall-clock
times, and a sha256 digest of every emitted file.  Result files (CSV, JSON,
binary dumps) are byte-identical across reruns of the same config; the
manifest itself carries the wall-clock and is the one volatile file.

Exit codes: 0 success, 1 parameter/validation errors, 2 numerical failures.
"""

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .errors import DomainError, NumericalError, ParameterError, StabilityError, ValidationError
from . import diagnostics, extremes, fieldio
from .feynman_kac import fk_estimate
from .field_synthesis import LatticeSpec, synthesize_grid
from .heat_solver import SolverGrid, solve, terminal_profile
from .path_spectrum import (
    critical_coupling,
    eigen_spectrum,
    kernel_matrix,
    path_amplification,
    amplification_upper_bound,
    static_path,
)
from .spectral_model import (
    CorrelationEvaluator,
    lambda_matrix,
    load_tabulated_csv,
    make_spectral_density,
)

SUBCOMMANDS = (
    "synthesize", "solve", "fk", "spectrum", "gc",
    "extremes", "poisson-check", "scan", "iid-demo", "all",
)

# Stage tags feed the per-stage seed derivation; stable across versions.
_STAGE_TAG = {
    "synthesize": 1, "solve": 2, "fk": 3, "spectrum": 4, "gc": 5,
    "extremes": 6, "poisson-check": 7, "scan": 8, "iid-demo": 9,
}

_DEFAULTS = {
    "spectral": {
        "family": "gaussian-isotropic",
        "sigma": 1.0,
        "sigma_k": 1.0,
        "sigma_omega": 1.0,
        "csv": None,
    },
    "grid": {
        "L_dom": 32.0,   # solver interval length
        "n_x": 256,
        "T": 1.0,
        "n_t": 1024,
        "n_q": 200,      # quadrature nodes for the path spectrum
        "n_p": 20000,    # Monte Carlo paths
        "M": 64,         # mode-sum size (fk uses lattice fields here, M kept for API parity)
    },
    "couplings": {"g": [0.1]},
    "windows": {"max": 64.0, "octaves": 7},
    "ensemble": {"realizations": 8, "repetitions": 100},
    "fk": {"x": [0.0], "n_steps": 256},
    "extremes": {
        "half_width": 10.0,
        "horizon": 2.0,
        "n_realizations": 0,  # exceedance MC off by default; it dominates runtime
        "m_values": [14.0, 16.0, 18.0, 20.0],
    },
    "poisson": {"a": [0.1, 0.5, 1.0, 5.0]},
    "iid": {
        "alphas": [2.5, 1.5, 0.5],
        "n_values": [1000, 3162, 10000, 31623, 100000, 316228, 1000000],
    },
    "run": {"seed": 0, "out": "amplab-run"},
    "tolerances": {"poisson_discrepancy": 1e-12, "imag_residual": 1e-12},
}


def parse_config(path=None, overrides=None) -> dict:
    """Merge defaults, an optional JSON file, and flag overrides; validate.

    Unknown sections or keys are an error listing every offender, so typos
    never silently fall back to defaults.
    """
    cfg = {sec: dict(vals) for sec, vals in _DEFAULTS.items()}
    if path is not None:
        try:
            fh = open(path)
        except OSError as exc:
            raise ValidationError(f"config {path}: {exc.strerror}")
        with fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"config {path}: invalid JSON ({exc})")
        if not isinstance(user, dict):
            raise ValidationError(f"config {path}: top level must be an object")
        unknown = []
        for sec, vals in user.items():
            if sec not in cfg:
                unknown.append(sec)
                continue
            if not isinstance(vals, dict):
                raise ValidationError(f"config section {sec!r} must be an object")
            for key in vals:
                if key not in cfg[sec]:
                    unknown.append(f"{sec}.{key}")
            cfg[sec].update({k: v for k, v in vals.items() if k in cfg[sec]})
        if unknown:
            raise ValidationError("unknown config keys: " + ", ".join(sorted(unknown)))
    for sec, key, value in overrides or ():
        if value is not None:
            cfg[sec][key] = value
    _validate(cfg)
    return cfg


def _validate(cfg) -> None:
    grid = cfg["grid"]
    def positive(sec, key):
        if not (isinstance(cfg[sec][key], (int, float)) and cfg[sec][key] > 0):
            raise ParameterError(f"{sec}.{key} must be positive, got {cfg[sec][key]!r}")
    for key in ("L_dom", "T"):
        positive("grid", key)
    for key in ("n_x", "n_t", "n_q", "n_p", "M"):
        positive("grid", key)
        if int(grid[key]) != grid[key]:
            raise ParameterError(f"grid.{key} must be an integer, got {grid[key]!r}")
    gs = cfg["couplings"]["g"]
    if not isinstance(gs, (list, tuple)) or not gs:
        raise ParameterError("couplings.g must be a nonempty list")
    for g in gs:
        if not (isinstance(g, (int, float)) and g >= 0):
            raise ParameterError(f"couplings.g entries must be >= 0, got {g!r}")
    positive("windows", "max")
    positive("windows", "octaves")
    positive("ensemble", "realizations")
    positive("ensemble", "repetitions")
    if int(cfg["run"]["seed"]) != cfg["run"]["seed"]:
        raise ParameterError(f"run.seed must be an integer, got {cfg['run']['seed']!r}")
    fam = cfg["spectral"]["family"]
    if fam not in ("gaussian-isotropic", "gaussian-anisotropic", "tabulated-grid"):
        raise ParameterError(f"spectral.family unknown: {fam!r}")


def _density(cfg):
    sp = cfg["spectral"]
    if sp["family"] == "gaussian-isotropic":
        return make_spectral_density("gaussian-isotropic", sigma=sp["sigma"])
    if sp["family"] == "gaussian-anisotropic":
        return make_spectral_density(
            "gaussian-anisotropic", sigma_k=sp["sigma_k"], sigma_omega=sp["sigma_omega"]
        )
    if sp["csv"] is None:
        raise ParameterError("spectral.csv is required for the tabulated-grid family")
    return load_tabulated_csv(sp["csv"])


def _stage_seed(master: int, name: str) -> int:
    ss = np.random.SeedSequence((int(master), 0xC11, _STAGE_TAG[name]))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("AMPLAB_THREADS", "1")))
    except ValueError:
        return 1


def _pool_map(fn, items):
    # Deterministic merge: results land by index no matter the worker count.
    n = _workers()
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _field_lattice(cfg) -> LatticeSpec:
    grid = cfg["grid"]
    dx = grid["L_dom"] / int(grid["n_x"])
    n_t = max(int(grid["n_t"] // 8), 16)  # field lattice can be coarser in t than the solver
    dt = grid["T"] / (n_t - 1)
    return LatticeSpec(
        x0=-0.5 * grid["L_dom"], dx=dx, n_x=int(grid["n_x"]), t0=0.0, dt=dt, n_t=n_t
    )


def _stage_synthesize(cfg, out, seed):
    dens = _density(cfg)
    fld = synthesize_grid(dens, _field_lattice(cfg), seed=seed)
    path = os.path.join(out, "field.sfld")
    fieldio.dump_field(fld, path)
    summary = os.path.join(out, "field.json")
    fieldio.write_json(summary, _jsonable({
        "n_x": fld.spec.n_x, "n_t": fld.spec.n_t, "dx": fld.spec.dx, "dt": fld.spec.dt,
        "seed": seed, "max_square": fld.max_square(), "variance": float(fld.values.var()),
    }))
    return [path, summary]


def _solver_grid(cfg) -> SolverGrid:
    grid = cfg["grid"]
    return SolverGrid(
        L_dom=float(grid["L_dom"]), n_x=int(grid["n_x"]),
        T=float(grid["T"]), n_t=int(grid["n_t"]),
    )


def _stage_solve(cfg, out, seed):
    dens = _density(cfg)
    fld = synthesize_grid(dens, _field_lattice(cfg), seed=_stage_seed(cfg["run"]["seed"], "synthesize"))
    grid = _solver_grid(cfg)
    gs = [float(g) for g in cfg["couplings"]["g"]]
    sols = _pool_map(lambda g: solve(fld, g, grid), gs)
    written = []
    for i, (g, sol) in enumerate(zip(gs, sols)):
        path = os.path.join(out, f"solution_{i}.psi1")
        fieldio.dump_solution(path, sol.x, sol.times, sol.psi, seed=fld.seed, g=g)
        x, prof = terminal_profile(sol)
        csv = os.path.join(out, f"profile_{i}.csv")
        fieldio.write_csv(csv, ["x", "psi"], [x, prof])
        written += [path, csv]
    meta = os.path.join(out, "solve.json")
    fieldio.write_json(meta, _jsonable({
        "g": gs, "scheme": grid.scheme, "n_x": grid.n_x, "n_t": grid.n_t,
        "field_seed": fld.seed, "log_mode": [s.log_mode for s in sols],
    }))
    return written + [meta]


def _stage_fk(cfg, out, seed):
    dens = _density(cfg)
    fld = synthesize_grid(dens, _field_lattice(cfg), seed=_stage_seed(cfg["run"]["seed"], "synthesize"))
    grid = cfg["grid"]
    rows = []
    for g in cfg["couplings"]["g"]:
        for x in cfg["fk"]["x"]:
            est = fk_estimate(
                fld, float(g), x=float(x), horizon=float(grid["T"]),
                n_paths=int(grid["n_p"]), n_steps=int(cfg["fk"]["n_steps"]), seed=seed,
            )
            rows.append((float(g), float(x), est.mean, est.se, est.log_mean, est.log_mode))
    csv = os.path.join(out, "fk.csv")
    cols = list(zip(*rows))
    fieldio.write_csv(csv, ["g", "x", "mean", "se", "log_mean", "log_mode"],
                      [np.array(c, dtype=float) for c in cols])
    meta = os.path.join(out, "fk.json")
    fieldio.write_json(meta, _jsonable({
        "n_paths": int(grid["n_p"]), "n_steps": int(cfg["fk"]["n_steps"]), "seed": seed,
        "records": [dict(zip(("g", "x", "mean", "se", "log_mean", "log_mode"), r)) for r in rows],
    }))
    return [csv, meta]


def _stage_spectrum(cfg, out, seed):
    dens = _density(cfg)
    corr = CorrelationEvaluator(dens)
    horizon = float(cfg["grid"]["T"])
    op = kernel_matrix(corr, static_path(horizon), int(cfg["grid"]["n_q"]))
    spec = eigen_spectrum(op)
    csv = os.path.join(out, "eigenvalues.csv")
    fieldio.write_csv(csv, ["index", "mu"],
                      [np.arange(1, spec.eigenvalues.size + 1), spec.eigenvalues])
    records = []
    for g in cfg["couplings"]["g"]:
        amp = path_amplification(spec, float(g))
        records.append({
            "g": float(g), "diverged": amp.diverged, "log_value": amp.log_value,
            "upper_bound": amplification_upper_bound(spec, float(g)),
            "truncation_bound": amp.truncation_bound,
        })
    meta = os.path.join(out, "spectrum.json")
    fieldio.write_json(meta, _jsonable({
        "horizon": horizon, "n_q": int(cfg["grid"]["n_q"]),
        "mu1": spec.mu1, "trace": spec.trace, "amplification": records,
    }))
    return [csv, meta]


def _stage_gc(cfg, out, seed):
    dens = _density(cfg)
    corr = CorrelationEvaluator(dens)
    res = critical_coupling(corr, float(cfg["grid"]["T"]), n_interior=8, n_starts=4, seed=seed)
    meta = os.path.join(out, "gc.json")
    fieldio.write_json(meta, _jsonable({
        "g_c": res.g_c, "mu_max": res.mu_max, "horizon": res.horizon,
        "upper_bound": res.upper_bound, "n_interior": res.n_interior,
        "n_starts": res.n_starts, "spread": res.spread, "seed": seed,
    }))
    return [meta]


def _stage_extremes(cfg, out, seed):
    dens = _density(cfg)
    ex = cfg["extremes"]
    horizon = float(ex["horizon"])
    lam = lambda_matrix(dens)
    law = extremes.tail_constant(horizon, lam)
    rs = np.linspace(0.05, 4.0, 80) * np.sqrt(horizon)
    csv = os.path.join(out, "range_law.csv")
    fieldio.write_csv(csv, ["r", "density", "cdf"],
                      [rs, extremes.sup_abs_density(rs, horizon), extremes.sup_abs_cdf(rs, horizon)])
    payload = {
        "horizon": horizon, "mean_range": law.mean_range, "tail_constant": law.a_const,
        "lam_det": law.lam_det, "half_width": float(ex["half_width"]),
        "scaling_ratio_2T": extremes.tail_constant(2.0 * horizon, lam).a_const / law.a_const,
    }
    written = [csv]
    if int(ex["n_realizations"]) > 0:
        table = extremes.field_max_exceedance_mc(
            dens, float(ex["half_width"]), horizon, ex["m_values"],
            n_realizations=int(ex["n_realizations"]), seed=seed,
        )
        ecsv = os.path.join(out, "exceedance.csv")
        fieldio.write_csv(ecsv, ["m", "empirical", "asymptote", "log_ratio"],
                          [table.m, table.empirical, table.asymptote, table.log_ratio])
        payload["exceedance_realizations"] = int(ex["n_realizations"])
        written.append(ecsv)
    meta = os.path.join(out, "extremes.json")
    fieldio.write_json(meta, _jsonable(payload))
    return written + [meta]


def _stage_poisson(cfg, out, seed):
    tol = float(cfg["tolerances"]["poisson_discrepancy"])
    rows = [extremes.poisson_summation_check(float(a)) for a in cfg["poisson"]["a"]]
    meta = os.path.join(out, "poisson.json")
    fieldio.write_json(meta, _jsonable({
        "tolerance": tol,
        "checks": [{
            "a": c.parameter, "direct": c.direct_sum.real, "dual": c.dual_sum.real,
            "discrepancy": c.discrepancy, "imag_residual": c.imag_residual,
        } for c in rows],
    }))
    worst = max(c.discrepancy for c in rows)
    if worst > tol:
        raise NumericalError(f"lattice-identity discrepancy {worst:.3e} exceeds {tol:.1e}")
    return [meta]


def _stage_scan(cfg, out, seed):
    dens = _density(cfg)
    rep = diagnostics.intermittency_scan(
        dens, float(cfg["grid"]["T"]), [float(g) for g in cfg["couplings"]["g"]],
        window_max=float(cfg["windows"]["max"]),
        n_realizations=int(cfg["ensemble"]["realizations"]),
        seed=seed, n_octaves=int(cfg["windows"]["octaves"]),
    )
    written = []
    summary = []
    for i, case in enumerate(rep.cases):
        cols = {"realization": [], "L": [], "avg": [], "f": [], "rho": [], "phi": []}
        for d in case.realizations:
            for j, w in enumerate(d.windows):
                cols["realization"].append(d.realization)
                cols["L"].append(w)
                cols["avg"].append(d.averages[j])
                cols["f"].append(d.thresholds_f[j])
                cols["rho"].append(d.peak_shares[j])
                cols["phi"].append(d.occupancies[j])
        csv = os.path.join(out, f"scan_curves_{i}.csv")
        fieldio.write_csv(csv, ["realization", "L", "avg", "f", "rho", "phi"],
                          [np.array(cols[k], dtype=float) for k in ("realization", "L", "avg", "f", "rho", "phi")])
        written.append(csv)
        summary.append({
            "g": case.g, "counts": case.counts, "majority": case.majority_label,
            "median_peak_share": case.median_share,
            "median_occupancy": case.median_occupancy,
            "median_average": case.median_average,
        })
    meta = os.path.join(out, "scan.json")
    fieldio.write_json(meta, _jsonable({
        "horizon": rep.horizon, "windows": rep.windows, "seed": seed,
        "n_realizations": rep.n_realizations,
        "thresholds": {
            "stable_tol": rep.thresholds.stable_tol, "peak_share": rep.thresholds.peak_share,
            "occupancy": rep.thresholds.occupancy, "growth": rep.thresholds.growth,
        },
        "cases": summary,
    }))
    return written + [meta]


def _stage_iid(cfg, out, seed):
    rep = diagnostics.iid_regime_demo(
        alphas=tuple(cfg["iid"]["alphas"]),
        n_values=tuple(cfg["iid"]["n_values"]),
        repetitions=int(cfg["ensemble"]["repetitions"]),
        seed=seed,
    )
    cols = {"alpha": [], "N": [], "mean": [], "iqr": []}
    for res in rep.results:
        for i, n in enumerate(res.n_values):
            cols["alpha"].append(res.alpha)
            cols["N"].append(n)
            cols["mean"].append(res.mean_of_means[i])
            cols["iqr"].append(res.fluctuation_scale[i])
    csv = os.path.join(out, "iid_curves.csv")
    fieldio.write_csv(csv, ["alpha", "N", "mean", "iqr"],
                      [np.array(cols[k], dtype=float) for k in ("alpha", "N", "mean", "iqr")])
    meta = os.path.join(out, "iid.json")
    fieldio.write_json(meta, _jsonable({
        "repetitions": rep.repetitions, "seed": seed,
        "results": [{
            "alpha": r.alpha, "fitted_exponent": r.fitted_exponent,
            "theoretical_exponent": r.theoretical_exponent,
            "theoretical_mean": r.theoretical_mean,
            "final_mean": r.mean_of_means[-1],
            "top_share_majority": r.top_share_majority, "top_count": r.top_count,
        } for r in rep.results],
    }))
    return [csv, meta]


_STAGES = {
    "synthesize": _stage_synthesize,
    "solve": _stage_solve,
    "fk": _stage_fk,
    "spectrum": _stage_spectrum,
    "gc": _stage_gc,
    "extremes": _stage_extremes,
    "poisson-check": _stage_poisson,
    "scan": _stage_scan,
    "iid-demo": _stage_iid,
}


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run_subcommand(name: str, cfg: dict) -> int:
    """Execute one subcommand (or every stage for 'all') and write the manifest."""
    out = cfg["run"]["out"]
    os.makedirs(out, exist_ok=True)
    names = list(_STAGES) if name == "all" else [name]
    master = int(cfg["run"]["seed"])
    stages = []
    for stage in names:
        seed = _stage_seed(master, stage)
        t0 = time.perf_counter()
        files = _STAGES[stage](cfg, out, seed)
        stages.append({
            "name": stage,
            "seed": seed,
            "wall_clock_s": round(time.perf_counter() - t0, 3),
            "outputs": [
                {"path": os.path.relpath(f, out), "sha256": _digest(f)} for f in files
            ],
        })
    manifest = {
        "tool": "amplab",
        "version": __version__,
        "command": name,
        "config": cfg,
        "stages": stages,
    }
    fieldio.write_json(os.path.join(out, "manifest.json"), _jsonable(manifest))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="amplab",
        description="Stochastic amplifier lab: synthesis, solves, spectra, tails, scans.",
    )
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="master seed (overrides run.seed)")
    p.add_argument("--out", help="output directory (overrides run.out)")
    p.add_argument("--g", type=float, nargs="+", help="coupling list (overrides couplings.g)")
    p.add_argument("--T", type=float, help="time horizon (overrides grid.T)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; the contract reserves 2 for
        # numerical failures, so rewrite to 1 (help stays 0).
        return 0 if exc.code in (0, None) else 1
    try:
        cfg = parse_config(args.config, overrides=[
            ("run", "seed", args.seed),
            ("run", "out", args.out),
            ("couplings", "g", args.g),
            ("grid", "T", args.T),
        ])
        return run_subcommand(args.subcommand, cfg)
    except (ParameterError, ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, StabilityError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
