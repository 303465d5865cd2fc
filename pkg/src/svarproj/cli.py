"""Command-line front end.

Four subcommands sharing one JSON config file:

    svarproj estimate  config.json      reduced-form summary
    svarproj project   config.json      baseline projection region + plot CSV
    svarproj calibrate config.json      calibrated radius + nested-region CSV
    svarproj coverage  config.json      frequentist (radius, ApproxCL) table

Exit codes: 0 success, 1 solver or numeric failure (partial output is still
written), 2 input error (bad file, bad config). Identical (config, seed)
runs write byte-identical documents; the only environment overrides are
SVARPROJ_SEED and SVARPROJ_OUTPUT_DIR. Everything else lives in the config
file; see the README for the full key reference.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (CalibrateConfig, calibrate_frequentist,
                        calibrate_radius, dm_interval, gk_robust_region,
                        robust_credibility)
from .errors import (BracketFailure, ConfigError, DataFormatError,
                     DegenerateWishart, DimensionMismatch, DomainError,
                     EmptyIdentifiedSet, NoFeasibleStart, NormalizationMissing,
                     NoValidDraws, ShortSample, SingularDesign, SingularSigma,
                     SingularUpdate, SvarProjError, UnitRoot)
from .idset import BoundsConfig, bounds_batch
from .posterior import (NwHyper, gaussian_posterior_draws, nw_posterior_draws,
                        uhlig_credible_bands)
from .projection import (ProjectionConfig, chi2_quantile, effective_dof,
                         projection_region)
from .restrictions import bh_labor_market_preset, load_restrictions
from .solver import SolverConfig
from .varcore import (Target, VarSpec, estimate, load_csv, stability_margin)

_INPUT_ERRORS = (ConfigError, DataFormatError, DimensionMismatch, DomainError,
                 ShortSample, NormalizationMissing, FileNotFoundError)
_NUMERIC_ERRORS = (SingularDesign, SingularSigma, SingularUpdate, UnitRoot,
                   DegenerateWishart, NoFeasibleStart, EmptyIdentifiedSet,
                   NoValidDraws, BracketFailure)


@dataclass(frozen=True)
class RunConfig:
    data: str
    lags: int
    restrictions: object
    demean: bool = True
    alpha: float = 0.68
    horizons: tuple[int, ...] = (0,)
    variables: tuple[int, ...] = ()
    shocks: tuple[int, ...] = ()
    cumulative: bool = False
    methods: tuple[str, ...] = ()
    source: str = "gaussian_approx"
    M: int = 1000
    eta: float = 0.005
    seed: int = 0
    c: float | None = None
    radii: tuple[float, ...] = ()
    coverage_m: int = 200
    coverage_k: int = 5
    coverage_target: tuple[int, int, int] | None = None
    strict_empty: bool = False
    output_dir: str = "out"
    starts: int = 8
    inner_starts: int = 10
    batch_starts: int = 4
    scan_grid: int = 720
    feas_tol: float = 1e-8
    opt_tol: float = 1e-6
    max_iter: int = 500
    config_hash: str = ""

    def solver_config(self) -> SolverConfig:
        return SolverConfig(feas_tol=self.feas_tol, opt_tol=self.opt_tol,
                            max_iter=self.max_iter)

    def bounds_config(self) -> BoundsConfig:
        return BoundsConfig(starts=self.inner_starts,
                            batch_starts=self.batch_starts, seed=self.seed,
                            scan_grid=self.scan_grid,
                            solver=self.solver_config())

    def projection_config(self) -> ProjectionConfig:
        return ProjectionConfig(starts=self.starts, seed=self.seed,
                                solver=self.solver_config(),
                                inner=self.bounds_config())


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def load_config(path: str) -> RunConfig:
    """Parse and validate the JSON config, applying environment overrides."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    _require(isinstance(raw, dict), f"{path}: top level must be an object")
    _require("data" in raw, f"{path}: missing required key 'data'")
    _require("lags" in raw, f"{path}: missing required key 'lags'")
    _require("restrictions" in raw, f"{path}: missing required key 'restrictions'")

    digest = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()

    horizons = raw.get("horizons", [0])
    if isinstance(horizons, int):
        horizons = list(range(horizons))
    _require(isinstance(horizons, list) and horizons
             and all(isinstance(h, int) and h >= 0 for h in horizons),
             "horizons must be a positive count or a list of ints >= 0")
    targets_block = raw.get("targets", {})
    _require(isinstance(targets_block, dict),
             "targets must be an object with variables/shocks/cumulative")

    alpha = float(raw.get("alpha", 0.68))
    _require(0.0 < alpha < 1.0, f"alpha must be in (0, 1), got {alpha}")
    lags = int(raw["lags"])
    _require(lags >= 1, f"lags must be >= 1, got {lags}")

    solver_block = raw.get("solver", {})
    _require(isinstance(solver_block, dict), "solver must be an object")

    seed = int(raw.get("seed", 0))
    env_seed = os.environ.get("SVARPROJ_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError:
            raise ConfigError(f"SVARPROJ_SEED must be an integer, got {env_seed!r}") from None
    output_dir = os.environ.get("SVARPROJ_OUTPUT_DIR") or raw.get("output_dir", "out")

    cov_target = raw.get("coverage_target")
    if cov_target is not None:
        _require(isinstance(cov_target, dict)
                 and {"horizon", "variable", "shock"} <= set(cov_target),
                 "coverage_target needs horizon, variable and shock")
        cov_target = (int(cov_target["horizon"]), int(cov_target["variable"]),
                      int(cov_target["shock"]))

    base = Path(path).resolve().parent

    def resolve(p):
        q = Path(p)
        return str(q if q.is_absolute() else base / q)

    restrictions = raw["restrictions"]
    if isinstance(restrictions, str):
        restrictions = resolve(restrictions)
    else:
        _require(isinstance(restrictions, dict) and "preset" in restrictions,
                 "restrictions must be a file path or {preset: ..., ...}")

    return RunConfig(
        data=resolve(raw["data"]),
        lags=lags,
        restrictions=restrictions,
        demean=bool(raw.get("demean", True)),
        alpha=alpha,
        horizons=tuple(horizons),
        variables=tuple(int(v) for v in targets_block.get("variables", [])),
        shocks=tuple(int(s) for s in targets_block.get("shocks", [])),
        cumulative=bool(targets_block.get("cumulative", False)),
        methods=tuple(str(m) for m in raw.get("methods", [])),
        source=str(raw.get("source", "gaussian_approx")),
        M=int(raw.get("M", 1000)),
        eta=float(raw.get("eta", 0.005)),
        seed=seed,
        c=None if raw.get("c") is None else float(raw["c"]),
        radii=tuple(float(r) for r in raw.get("radii", [])),
        coverage_m=int(raw.get("coverage_m", 200)),
        coverage_k=int(raw.get("coverage_k", 5)),
        coverage_target=cov_target,
        strict_empty=bool(raw.get("strict_empty", False)),
        output_dir=str(output_dir),
        starts=int(solver_block.get("starts", 8)),
        inner_starts=int(solver_block.get("inner_starts", 10)),
        batch_starts=int(solver_block.get("batch_starts", 4)),
        scan_grid=int(solver_block.get("scan_grid", 720)),
        feas_tol=float(solver_block.get("feas_tol", 1e-8)),
        opt_tol=float(solver_block.get("opt_tol", 1e-6)),
        max_iter=int(solver_block.get("max_iter", 500)),
        config_hash=digest,
    )


def _load_inputs(cfg: RunConfig):
    data = load_csv(cfg.data)
    spec = VarSpec(n=data.n, p=cfg.lags, demean=cfg.demean)
    if isinstance(cfg.restrictions, str):
        rset = load_restrictions(cfg.restrictions)
    else:
        name = cfg.restrictions["preset"]
        if name != "bh_labor_market":
            raise ConfigError(f"unknown preset {name!r}")
        rset = bh_labor_market_preset(float(cfg.restrictions.get("V", 1.0)))
    if rset.n != data.n:
        raise ConfigError(
            f"restriction set is for n={rset.n}, data has {data.n} columns")
    return data, spec, rset


def _targets(cfg: RunConfig, n: int) -> list[Target]:
    variables = cfg.variables or tuple(range(1, n + 1))
    shocks = cfg.shocks or tuple(range(1, n + 1))
    out = []
    for i in variables:
        for j in shocks:
            for k in cfg.horizons:
                out.append(Target(k=k, i=i, j=j, cumulative=cfg.cumulative))
    return out


def _provenance(cfg: RunConfig) -> dict:
    return {"seed": cfg.seed, "version": __version__,
            "config_hash": cfg.config_hash}


def _clean(x):
    """NaN-free JSON scalars: non-finite floats become null."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, (np.floating, np.integer)):
        return _clean(x.item())
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(doc), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if isinstance(v, float) and not math.isfinite(v)
                             else (repr(v) if isinstance(v, float) else v)
                             for v in row])


def _target_key(t: Target) -> dict:
    return {"horizon": t.k, "variable": t.i, "shock": t.j,
            "cumulative": t.cumulative}


def cmd_estimate(cfg: RunConfig) -> int:
    data, spec, _ = _load_inputs(cfg)
    rf = estimate(data, spec)
    doc = {
        "provenance": _provenance(cfg),
        "n": rf.n, "p": rf.p, "T": rf.T, "d": rf.d,
        "demean": rf.demean,
        "names": list(data.names),
        "A": rf.A, "Sigma": rf.Sigma, "mu": rf.mu,
        "stability_margin": stability_margin(rf.A),
        "omega_diagonal": np.diag(rf.Omega),
    }
    _write_json(Path(cfg.output_dir) / "estimate.json", doc)
    return 0


def cmd_project(cfg: RunConfig) -> int:
    data, spec, rset = _load_inputs(cfg)
    rf = estimate(data, spec)
    targets = _targets(cfg, rf.n)
    c = chi2_quantile(rf.d, cfg.alpha) if cfg.c is None else cfg.c
    pcfg = cfg.projection_config()
    region = projection_region(rf, rset, targets, c, pcfg)
    plugin = projection_region(rf, rset, targets, 0.0, pcfg)
    rows = []
    intervals = []
    for h, t in enumerate(targets):
        lo, hi = region.interval(h)
        plo, phi = plugin.interval(h)
        rows.append([t.k, t.i, t.j, lo, hi, plo, phi])
        intervals.append({**_target_key(t), "lower": lo, "upper": hi,
                          "plugin_lower": plo, "plugin_upper": phi,
                          "status": region.status[h], "c": c,
                          "method": "baseline"})
    doc = {
        "provenance": _provenance(cfg),
        "alpha": cfg.alpha, "c": c, "d": rf.d, "T": rf.T,
        "alpha_equivalent": region.alpha_equivalent,
        "effective_dof": effective_dof(c, cfg.alpha) if c > 0 else 0.0,
        "empty_at_center": region.empty_at_center,
        "intervals": intervals,
    }
    out = Path(cfg.output_dir)
    _write_json(out / "project.json", doc)
    _write_csv(out / "project_plot.csv",
               ["horizon", "variable", "shock", "lower", "upper",
                "plugin_lower", "plugin_upper"], rows)
    return 1 if any(s == "failed" for s in region.status) else 0


def cmd_calibrate(cfg: RunConfig) -> int:
    data, spec, rset = _load_inputs(cfg)
    rf = estimate(data, spec)
    targets = _targets(cfg, rf.n)
    if cfg.source == "normal_wishart":
        draws = nw_posterior_draws(NwHyper.flat(rf.n, rf.p), rf, data, cfg.M,
                                   cfg.seed)
    elif cfg.source == "gaussian_approx":
        draws = gaussian_posterior_draws(rf, cfg.M, cfg.seed)
    else:
        raise ConfigError(f"unknown draw source {cfg.source!r}")
    ccfg = CalibrateConfig(bounds=cfg.bounds_config(),
                           projection=cfg.projection_config(),
                           strict_empty=cfg.strict_empty)
    bounds_arr = bounds_batch(draws.draws, spec, rset, targets, ccfg.bounds)
    c_base = chi2_quantile(rf.d, cfg.alpha)
    cache: dict = {}
    result = calibrate_radius(rf, rset, targets, draws, cfg.alpha, cfg.eta,
                              ccfg, bounds_array=bounds_arr,
                              region_cache=cache)
    base_region = cache.get(round(c_base, 9))
    if base_region is None:
        base_region = projection_region(rf, rset, targets, c_base,
                                        ccfg.projection)
    cal_region = result.region
    rows = []
    intervals = []
    for h, t in enumerate(targets):
        blo, bhi = base_region.interval(h)
        clo, chi = cal_region.interval(h)
        rows.append([t.k, t.i, t.j, blo, bhi, clo, chi])
        entry = {**_target_key(t),
                 "baseline_lower": blo, "baseline_upper": bhi,
                 "calibrated_lower": clo, "calibrated_upper": chi,
                 "baseline_c": c_base, "calibrated_c": result.c_star,
                 "status": cal_region.status[h], "method": "calibrated"}
        if "gk" in cfg.methods:
            gl, gu = gk_robust_region(bounds_arr, h, cfg.alpha)
            entry["gk_lower"], entry["gk_upper"] = gl, gu
        intervals.append(entry)
    doc = {
        "provenance": _provenance(cfg),
        "alpha": cfg.alpha, "eta": result.eta, "M": cfg.M,
        "source": draws.source,
        "baseline_c": c_base,
        "c_star": result.c_star,
        "achieved": result.achieved,
        "effective_dof": result.effective_dof,
        "d": rf.d,
        "excluded_draws": result.excluded_draws,
        "credibility_at_baseline": robust_credibility(
            bounds_arr, base_region, strict=cfg.strict_empty),
        "trace": [list(step) for step in result.iterations],
        "intervals": intervals,
    }
    if "dm" in cfg.methods:
        r = math.sqrt(result.c_star) if result.c_star > 0 else 0.0
        doc["dm_intervals"] = [
            {**_target_key(t),
             **_dm_entry(rf, rset, t, r)} for t in targets]
    if "uhlig" in cfg.methods:
        bands = uhlig_credible_bands(NwHyper.flat(rf.n, rf.p), rf, data, rset,
                                     targets, cfg.alpha, cfg.M, cfg.seed)
        doc["uhlig"] = {
            "acceptance_rate": bands.acceptance_rate,
            "n_accepted": bands.n_accepted,
            "bands": [{**_target_key(t),
                       "lower": float(bands.bands[h, 0]),
                       "upper": float(bands.bands[h, 1])}
                      for h, t in enumerate(bands.targets)],
        }
    out = Path(cfg.output_dir)
    _write_json(out / "calibrate.json", doc)
    _write_csv(out / "calibrate_plot.csv",
               ["horizon", "variable", "shock", "baseline_lower",
                "baseline_upper", "calibrated_lower", "calibrated_upper"],
               rows)
    return 1 if any(s == "failed" for s in cal_region.status) else 0


def _dm_entry(rf, rset, t, r):
    dm = dm_interval(rf, rset, t, r)
    return {"lower": dm.lower, "upper": dm.upper,
            "sigma_lower": dm.sigma_lower, "sigma_upper": dm.sigma_upper,
            "r": dm.r, "delta": dm.delta}


def cmd_coverage(cfg: RunConfig) -> int:
    data, spec, rset = _load_inputs(cfg)
    rf = estimate(data, spec)
    if cfg.coverage_target is not None:
        k, i, j = cfg.coverage_target
        target = Target(k=k, i=i, j=j, cumulative=cfg.cumulative)
    else:
        target = _targets(cfg, rf.n)[0]
    radii = list(cfg.radii) or [chi2_quantile(rf.d, cfg.alpha)]
    r_star, table = calibrate_frequentist(
        [rf.mu], radii, rf.Omega, rf.T, rset, target, cfg.alpha,
        cfg.coverage_m, cfg.coverage_k, cfg.seed,
        config=cfg.projection_config())
    doc = {
        "provenance": _provenance(cfg),
        "alpha": cfg.alpha, "M": cfg.coverage_m, "K": cfg.coverage_k,
        "target": _target_key(target),
        "r_star": r_star,
        "table": [list(row) for row in table],
    }
    out = Path(cfg.output_dir)
    _write_json(out / "coverage.json", doc)
    _write_csv(out / "coverage_table.csv", ["radius", "approx_cl"],
               [list(row) for row in table])
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="svarproj",
        description="Projection inference for set-identified structural VARs")
    parser.add_argument("--threads", type=int, default=0,
                        help="cap compiled-kernel worker threads (0 = library default)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("estimate", cmd_estimate), ("project", cmd_project),
                     ("calibrate", cmd_calibrate), ("coverage", cmd_coverage)):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON run configuration")
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    if args.threads > 0:
        try:
            import numba
            numba.set_num_threads(args.threads)
        except ImportError:
            pass
    try:
        cfg = load_config(args.config)
        return args.func(cfg)
    except _INPUT_ERRORS as exc:
        print(f"svarproj: input error: {exc}", file=sys.stderr)
        return 2
    except _NUMERIC_ERRORS as exc:
        print(f"svarproj: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except SvarProjError as exc:
        print(f"svarproj: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
