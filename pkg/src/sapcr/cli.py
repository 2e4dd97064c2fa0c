"""Command-line driver: ``sapcr <command> --config cfg.yaml --out dir``.

Every command writes ``<command>.csv`` (stable columns, no timestamps) plus a
``<command>.json`` sidecar holding the resolved parameters, seeds and run metadata.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import math
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import geometry
from .config import ExperimentConfig, load_config, network_to_dict, sweep_values
from .errors import ConfigError, InfeasibleProtectionError, NumericError, ParameterError
from .op_analysis import empty_ball_radius, op_at
from .sap_mac import ase, beta_min, optimal_beta, primary_outage
from .simulator import (MacKind, SlotConfig, bin_conditional, compare_macs,
                        fit_axis_length, naive_op, node_problem_census, sample_typical_pairs,
                        wilson_interval)
from .validation import run_criteria

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ACCEPTANCE = 0, 2, 3, 4


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "nan" if math.isnan(x) else format(float(x), ".12g")
    return "" if x is None else str(x)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return None if not math.isfinite(float(x)) else float(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return _jsonable(dataclasses.asdict(x))
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def _version() -> str:
    try:
        return metadata.version("sapcr")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_sidecar(path: Path, command: str, cfg: ExperimentConfig, extra: dict, workers: int):
    meta = {
        "command": command,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "version": _version(),
        "config_source": cfg.source,
        "config": cfg.raw,
        "seed": cfg.seed,
        "workers": workers,
        "resolved_params": network_to_dict(cfg.params),
        "numerics": dataclasses.asdict(cfg.numerics),
    }
    meta.update(extra)
    path.write_text(json.dumps(_jsonable(meta), indent=2, sort_keys=True) + "\n")


def _out(out) -> Path:
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _betas(cfg: ExperimentConfig, default) -> np.ndarray:
    return cfg.beta if len(cfg.beta) else np.asarray(default, dtype=float)


def _slot_config(sim: dict) -> SlotConfig:
    kw = {}
    if "half_width_m" in sim:
        kw["half_width"] = float(sim["half_width_m"])
    if "probes_per_primary" in sim:
        kw["probes_per_primary"] = int(sim["probes_per_primary"])
    if "primary_rx_mode" in sim:
        kw["primary_rx_mode"] = sim["primary_rx_mode"]
    if "sensing" in sim:
        kw["sensing"] = sim["sensing"]
    if "theta_grid" in sim:
        kw["theta_grid"] = tuple(sweep_values(sim["theta_grid"]))
    return SlotConfig(**kw)


def _macs(sim: dict, params):
    if "macs" not in sim:
        return None
    try:
        return tuple(MacKind(m) for m in sim["macs"])
    except ValueError as exc:
        raise ConfigError(f"simulation/macs: {exc}", path="simulation/macs") from exc


# ---------------------------------------------------------------------------
# commands


def cmd_op_curve(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """Conditional OP against sensed interference, or against beta at a fixed empty ball."""
    p = cfg.params
    sim = cfg.simulation
    n = int(sim.get("n_samples", 100_000))
    sensing = sim.get("sensing", "averaged")
    R_fixed = cfg.raw.get("empty_ball_radius_m")
    rows = []
    extra = {}
    if R_fixed is not None:
        betas = _betas(cfg, np.geomspace(0.01, 100, 25))
        s = sample_typical_pairs(p, n, cfg.seed, nearest=float(R_fixed), sensing=sensing,
                                 workers=workers) if n > 0 else None
        columns = ["beta", "analytic_op", "mc_op", "ci_low", "ci_high", "naive_op"]
        for b in betas:
            an = op_at(float(R_fixed), p, float(b), cfg=cfg.numerics).value
            if s is None:
                rows.append([b, an, math.nan, math.nan, math.nan, math.nan])
                continue
            hits = int(np.sum(s.rx_sir >= b))
            lo, hi = wilson_interval(hits, n)
            rows.append([b, an, hits / n, float(lo), float(hi),
                         float(np.mean(naive_op(s.interference, p, b)))])
        extra["mode"] = "beta_sweep"
        extra["empty_ball_radius_m"] = R_fixed
    else:
        if n <= 0:
            raise ConfigError("simulation/n_samples must be positive for the interference "
                              "curve", path="simulation/n_samples")
        betas = _betas(cfg, [1.0])
        s = sample_typical_pairs(p, n, cfg.seed, sensing=sensing, workers=workers)
        columns = ["beta", "interference_w", "count", "analytic_op", "mc_op", "ci_low",
                   "ci_high", "naive_op"]
        bins = int(sim.get("bins", 40))
        min_count = int(sim.get("min_bin_count", 100))
        for b in betas:
            tab = bin_conditional(s, float(b), bins=bins, min_count=min_count)
            for i, I in enumerate(tab.centers):
                an = op_at(empty_ball_radius(float(I), p, cfg.numerics), p, float(b),
                           cfg=cfg.numerics).value
                rows.append([b, I, tab.counts[i], an, tab.prob[i], tab.ci_low[i],
                             tab.ci_high[i], float(naive_op(I, p, b))])
        extra["mode"] = "interference_bins"
        extra["sampling_radius_m"] = s.radius
    out = _out(out)
    write_csv(out / "op_curve.csv", columns, rows)
    write_sidecar(out / "op_curve.json", "op-curve", cfg,
                  dict(extra, n_samples=n, sensing=sensing), workers)
    return out / "op_curve.csv"


def cmd_ase_sweep(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """Analytical SaP ASE over beta with optional simulated curves for every MAC."""
    p = cfg.params
    sim = cfg.simulation
    extra = {}
    try:
        bmin = beta_min(p)
    except InfeasibleProtectionError as exc:
        bmin = math.nan
        extra["beta_min_note"] = str(exc)
    pol = optimal_beta(p, cfg=cfg.numerics) if math.isfinite(bmin) else None
    markers = {}
    if math.isfinite(bmin):
        for b, tag in ((bmin, "beta_min"), (pol.beta_root, "beta_root"), (pol.beta, "beta_star")):
            markers[b] = f"{markers[b]}|{tag}" if b in markers else tag
    betas = sorted(set(float(b) for b in _betas(cfg, np.geomspace(0.1, 100, 30)))
                   | {b for b in markers if b > 0})
    columns = ["beta", "marker", "mac", "source", "ase", "ase_ci", "coverage", "access_rate",
               "primary_outage", "feasible"]
    rows = []
    for b in betas:
        r = ase(p, b, cfg.numerics)
        ok = r.feasible and (not math.isfinite(bmin) or b >= bmin * (1 - 1e-12))
        rows.append([b, markers.get(b, ""), "sap", "analytic", r.ase, math.nan, math.nan,
                     min(r.c_star, 1.0), r.constraint_outage, ok])
    n_topo = int(sim.get("n_topologies", 0))
    if n_topo > 0:
        res = compare_macs(p, betas, _macs(sim, p), n_topo, int(sim.get("slots_per_topology", 20)),
                           cfg.seed, _slot_config(sim), workers)
        for b in betas:
            for label, rep in sorted(res[b].items()):
                if "@" in label:
                    continue
                rows.append([b, markers.get(b, ""), label, "simulated", rep.ase_estimate,
                             rep.ase_ci, rep.coverage, rep.access_rate, rep.primary_outage,
                             rep.primary_outage <= p.tau])
    if pol is not None:
        extra["policy"] = {"beta_star": pol.beta, "beta_root": pol.beta_root, "beta_min": bmin,
                           "c_star": pol.c_star, "feasible": pol.feasible,
                           "expected_op": pol.expected_op}
    out = _out(out)
    write_csv(out / "ase_sweep.csv", columns, rows)
    write_sidecar(out / "ase_sweep.json", "ase-sweep", cfg, extra, workers)
    return out / "ase_sweep.csv"


def cmd_validate(cfg: ExperimentConfig, out, workers: int = 1, tolerance_scale: float = 1.0):
    """Run the acceptance checks; returns the list of results."""
    sec = cfg.section("validate")
    results = run_criteria(sec.get("criteria"), cfg.seed, float(sec.get("sample_scale", 1.0)),
                           tolerance_scale, workers)
    out = _out(out)
    write_csv(out / "validate.csv", ["criterion", "name", "passed", "measured", "tolerance",
                                     "detail"],
              [[r.number, r.name, r.passed, r.measured, r.tolerance, r.detail] for r in results])
    write_sidecar(out / "validate.json", "validate", cfg,
                  {"tolerance_scale": tolerance_scale,
                   "results": [{"criterion": r.number, "passed": r.passed,
                                "measured": r.measured, "tolerance": r.tolerance,
                                "extra": r.extra} for r in results]}, workers)
    return results


def cmd_fit_l(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """Fit the optimal joint-unblocked axis length against the blockage factor."""
    p = cfg.params
    sec = cfg.section("fit_l")
    sim = cfg.simulation
    xi = [float(x) for x in sec.get("xi_per_m", [0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06])]
    shapes = tuple(tuple(float(v) for v in s) for s in sec.get("shapes_m", [[15.0, 10.0]]))
    grid = sweep_values(sec["axis_grid_m"]) if "axis_grid_m" in sec else None
    beta = float(_betas(cfg, [1.0])[0])
    fit = fit_axis_length(p, xi, beta, cfg.seed, n_samples=int(sim.get("n_samples", 50_000)),
                          L_grid=grid, shapes=shapes,
                          min_count=int(sim.get("min_bin_count", 1000)),
                          weighting=sec.get("weighting", "mass"), workers=workers)
    rows = []
    for pt in fit.points:
        pub = geometry.axis_length_from_blockage_factor(pt.xi).value
        fitted = float(np.polyval(fit.coeffs, pt.xi)) if fit.coeffs is not None else math.nan
        rows.append([pt.xi, pt.d_len, pt.d_wid, pt.lambda_b, pt.l_star, pt.gap, pt.flat,
                     pt.unbounded, fitted, pub])
    out = _out(out)
    write_csv(out / "fit_l.csv", ["xi_per_m", "length_m", "width_m", "lambda_b_per_m2",
                                  "l_star_m", "gap", "flat", "unbounded", "quintic_l_m",
                                  "published_l_m"], rows)
    coeffs = list(fit.coeffs) if fit.coeffs is not None else [math.nan] * 6
    write_csv(out / "fit_l_coeffs.csv", ["power", "fitted", "published"],
              [[5 - i, c, geometry.PUBLISHED_AXIS_FIT[i]] for i, c in enumerate(coeffs)])
    write_sidecar(out / "fit_l.json", "fit-l", cfg,
                  {"beta": beta, "sse": fit.sse, "published_sse": fit.published_sse,
                   "coefficients_high_to_low": coeffs}, workers)
    return out / "fit_l.csv"


def cmd_census(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """Hidden/exposed primary census per beamwidth, with paired seeds."""
    p = cfg.params
    sec = cfg.section("census")
    n = int(cfg.simulation.get("n_samples", 20_000))
    widths = [float(w) for w in sec.get("beamwidths_deg", [360.0, 90.0, 30.0, 10.0])]
    r_bins = sec.get("distance_bins_m")
    beta = float(_betas(cfg, [1.0])[0])
    rows, near = [], []
    for w in widths:
        q = p.replace(omega=math.radians(w))
        rep = node_problem_census(q, beta, n, cfg.seed, r_bins=r_bins, workers=workers)
        rows.append([w, rep.n_samples, rep.common, rep.exposed, rep.hidden, rep.exposed_rate,
                     rep.hidden_rate])
        for i in range(len(rep.nearest_counts)):
            near.append([w, rep.nearest_bins[i], rep.nearest_bins[i + 1],
                         rep.nearest_counts[i], rep.nearest_exposed_rate[i]])
    out = _out(out)
    write_csv(out / "census.csv", ["beamwidth_deg", "n_samples", "common", "exposed", "hidden",
                                   "exposed_rate", "hidden_rate"], rows)
    write_csv(out / "census_nearest.csv", ["beamwidth_deg", "r_low_m", "r_high_m", "count",
                                           "exposed_rate"], near)
    write_sidecar(out / "census.json", "census", cfg, {"n_samples": n}, workers)
    return out / "census.csv"


def cmd_compare_macs(cfg: ExperimentConfig, out, workers: int = 1) -> Path:
    """Slot simulation of every MAC on shared topologies and random numbers."""
    p = cfg.params
    sim = cfg.simulation
    if len(cfg.beta):
        betas = [float(b) for b in cfg.beta]
    else:
        bm = beta_min(p)
        betas = [bm, 4 * bm, 8 * bm, 16 * bm]
    res = compare_macs(p, betas, _macs(sim, p), int(sim.get("n_topologies", 20)),
                       int(sim.get("slots_per_topology", 20)), cfg.seed, _slot_config(sim),
                       workers)
    rows = []
    for b in betas:
        for label, r in sorted(res[b].items()):
            rows.append([b, label, r.threshold, r.ase_estimate, r.ase_ci, r.coverage,
                         r.coverage_ci, r.access_rate, r.primary_outage, r.primary_outage_ci,
                         r.primary_samples, r.n_topologies, r.n_slots])
    out = _out(out)
    write_csv(out / "compare_macs.csv",
              ["beta", "mac", "threshold", "ase", "ase_ci", "coverage", "coverage_ci",
               "access_rate", "primary_outage", "primary_outage_ci", "primary_samples",
               "n_topologies", "n_slots"], rows)
    write_sidecar(out / "compare_macs.json", "compare-macs", cfg,
                  {"betas": betas, "analytic_primary_outage": [primary_outage(p, b)
                                                               for b in betas]}, workers)
    return out / "compare_macs.csv"


COMMANDS = {
    "op-curve": cmd_op_curve,
    "ase-sweep": cmd_ase_sweep,
    "validate": cmd_validate,
    "fit-l": cmd_fit_l,
    "census": cmd_census,
    "compare-macs": cmd_compare_macs,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sapcr", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or "").splitlines()[0])
        sp.add_argument("--config", required=True, help="YAML or JSON experiment file")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--tolerance-scale", type=float, default=1.0,
                        help="multiplies every acceptance tolerance (validate only)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative", path="seed")
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.command == "validate":
            results = cmd_validate(cfg, args.out, args.workers, args.tolerance_scale)
            for r in results:
                print(r.line())
            return EXIT_OK if all(r.passed for r in results) else EXIT_ACCEPTANCE
        path = COMMANDS[args.command](cfg, args.out, args.workers)
        print(path)
        return EXIT_OK
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, InfeasibleProtectionError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
