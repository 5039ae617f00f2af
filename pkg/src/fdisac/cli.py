"""Command-line front end: ``simulate``, ``sweep``, ``link-budget``, ``codebook``.

Exit codes: 0 success, 1 infeasible design (a JSON report goes to stdout
and ``infeasible.json``), 2 configuration or usage error. The output
directory defaults to ``$FDISAC_OUT_DIR`` or ``./fdisac_out``. Every
command that writes files finishes with ``manifest.json`` listing each
file with its SHA-256.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .array_channel import Target, codebook_angles, dft_codebook, steering_vector
from .beamforming import beam_gain_pattern
from .cancellation import save_cancellers
from .config import default_config_text, load_config, parse_config
from .errors import ConfigError, InfeasibleError
from .link_budget import (SHADOW_MODES, BudgetParams, LinkBudgetDomainError,
                          gain_range_table, required_gain, write_budget_csv)
from .isac_optimizer import save_trace, solve_op
from .radar import velocity_resolution
from .jsonio import dumps, write_json
from .simulator import (SWEEP_FIELDS, aggregate, match_estimates, run_monte_carlo,
                        simulate_frame, write_rows_csv)

__all__ = ["main", "build_parser", "parse_grid", "OUT_DIR_ENV", "EXIT_OK", "EXIT_INFEASIBLE",
           "EXIT_CONFIG"]

OUT_DIR_ENV = "FDISAC_OUT_DIR"
EXIT_OK, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 1, 2

FIELD_ALIASES = {"power": "tx_power_dbm", "k": "n_targets", "K": "n_targets",
                 "taps": "n_taps", "cpi": "n_cpi_symbols"}
PATTERN_GRID_DEG = np.round(np.arange(-90.0, 90.0 + 1e-9, 0.5), 6)


class UsageError(Exception):
    """Bad or conflicting command-line flags (exit code 2)."""


def parse_grid(text: str) -> list[float]:
    """``"start:step:stop"`` (inclusive) or a comma list; empty grids are errors."""
    text = text.strip()
    if not text:
        raise UsageError("grid is empty")
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise UsageError(f"grid {text!r}: expected start:step:stop")
            start, step, stop = parts
            if step == 0 or (stop - start) * step < 0:
                raise UsageError(f"grid {text!r} is empty")
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [float(np.round(start + i * step, 12)) for i in range(n)]
        vals = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"grid {text!r}: not numeric") from None
    if not vals:
        raise UsageError("grid is empty")
    return vals


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get(OUT_DIR_ENV) or "fdisac_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, config: str | None, seed: int | None,
                   files: list[Path], extra: dict | None = None) -> Path:
    """Inventory of emitted files; written last, no timestamps."""
    doc = {"command": command, "config": config, "out_dir": str(out), "seed_override": seed,
           "files": [{"path": p.name, "bytes": p.stat().st_size, "sha256": _sha256(p)}
                     for p in sorted(files, key=lambda q: q.name)]}
    if extra:
        doc.update(extra)
    return write_json(out / "manifest.json", doc)


def _load(path: str | None, seed: int | None):
    if path is None:
        return parse_config("", seed)
    return load_config(path, seed)


def _write_pattern(path: Path, rf, array) -> Path:
    gains = np.stack([beam_gain_pattern(rf[:, [j]], array, PATTERN_GRID_DEG)
                      for j in range(rf.shape[1])], axis=1)
    total = beam_gain_pattern(rf, array, PATTERN_GRID_DEG)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle_deg", "total_gain_db"] + [f"chain_{j}_gain_db" for j in range(rf.shape[1])])
        for i, a in enumerate(PATTERN_GRID_DEG):
            w.writerow([f"{a:.1f}", f"{total[i]:.6f}"] + [f"{g:.6f}" for g in gains[i]])
    return path


def _write_comparison(path: Path, targets, estimates, pairs) -> Path:
    matched = {k: e for k, e in pairs}
    used = {id(e) for e in matched.values()}
    cols = ["target", "true_angle_deg", "true_range_m", "true_velocity_mps", "est_angle_deg",
            "est_range_m", "est_velocity_mps", "range_error_m", "velocity_error_mps", "matched"]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for k, t in enumerate(targets):
            e = matched.get(k)
            true = [repr(t.angle_deg), repr(t.range_m), repr(t.velocity_mps)]
            if e is None:
                w.writerow([k] + true + ["", "", "", "", "", 0])
            else:
                w.writerow([k] + true + [repr(e.angle_deg), repr(e.range_m), repr(e.velocity_mps),
                                         repr(e.range_m - t.range_m),
                                         repr(e.velocity_mps - t.velocity_mps), 1])
        for e in estimates:
            if id(e) not in used:
                w.writerow(["", "", "", "", repr(e.angle_deg), repr(e.range_m),
                            repr(e.velocity_mps), "", "", 0])
    return path


def _infeasible(out: Path, exc: InfeasibleError, command: str, config, seed, files) -> int:
    doc = exc.to_dict()
    files.append(write_json(out / "infeasible.json", doc))
    write_manifest(out, command, config, seed, files, {"status": "infeasible"})
    summary = {k: v for k, v in doc.items() if k != "detail"}
    print(dumps(summary, indent=None))
    return EXIT_INFEASIBLE


def cmd_simulate(args) -> int:
    scenario, opts = _load(args.config, args.seed)
    out = _out_dir(args.out)
    files: list[Path] = []
    try:
        cfg = solve_op(scenario, objective=opts.objective, rate_floor=opts.rate_floor_bps_hz)
    except InfeasibleError as exc:
        return _infeasible(out, exc, "simulate", args.config, args.seed, files)
    frame = simulate_frame(scenario, cfg, keep_grids=False)
    n_cpi = scenario.n_cpi_symbols
    pairs = match_estimates(scenario.targets, frame.estimates, scenario.ofdm, n_cpi)
    est_doc = {
        "n_targets": scenario.n_targets,
        "estimates": [asdict(e) for e in frame.estimates],
        "per_target": [{"target": k, "range_error_m": e.range_m - scenario.targets[k].range_m,
                        "velocity_error_mps": e.velocity_mps - scenario.targets[k].velocity_mps,
                        "angle_error_deg": e.angle_deg - scenario.targets[k].angle_deg}
                       for k, e in pairs],
        "velocity_resolution_mps": velocity_resolution(scenario.ofdm, n_cpi),
    }
    files.append(write_json(out / "estimates.json", est_doc))
    files.append(_write_comparison(out / "comparison.csv", scenario.targets, frame.estimates, pairs))
    metrics = dict(frame.metrics)
    metrics.update(solver_rate_bps_hz=cfg.achieved_rate, rho=cfg.rho,
                   constraints=cfg.constraint_report.to_dict())
    files.append(write_json(out / "metrics.json", metrics))
    files.append(_write_pattern(out / "beam_pattern_tx.csv", cfg.beamformer.v_rf, scenario.array))
    files.append(_write_pattern(out / "beam_pattern_rx.csv", cfg.beamformer.w_rf, scenario.array))
    save_trace(out / "trace.json", cfg)
    files.append(out / "trace.json")
    save_cancellers(out / "cancellers.json", cfg.analog, cfg.digital)
    files.append(out / "cancellers.json")
    write_manifest(out, "simulate", args.config, args.seed, files, {"status": "ok"})
    print(f"rate {cfg.achieved_rate:.3f} bps/Hz, min target SINR {cfg.min_target_sinr_db:.2f} dB, "
          f"{len(frame.estimates)} detections, {len(pairs)}/{scenario.n_targets} targets matched")
    print(f"outputs in {out}")
    return EXIT_OK


def _budget_from_scenario(scenario) -> BudgetParams:
    t = scenario.targets[0] if scenario.targets else Target(0.0, 1.0)
    return BudgetParams(tx_power_dbm=scenario.constraints.power_dbm,
                        noise_floor_dbm=scenario.noise_floor_dbm, nf_db=scenario.nf_node_db,
                        target=Target(0.0, 1.0, rcs_m2=t.rcs_m2, ploss_exp=t.ploss_exp,
                                      shadow_db=t.shadow_db),
                        wavelength_m=scenario.ofdm.wavelength_m,
                        max_range_m=3e8 / (2 * scenario.ofdm.scs_hz))


def cmd_sweep(args) -> int:
    field = FIELD_ALIASES.get(args.field, args.field)
    grid = parse_grid(args.grid)
    scenario, opts = _load(args.config, args.seed)
    out = _out_dir(args.out)
    if field == "gain":
        rows = gain_range_table(grid, parse_grid(args.sinr), _budget_from_scenario(scenario))
        path = write_budget_csv(out / "sweep_gain.csv", rows)
        write_manifest(out, "sweep", args.config, args.seed, [path], {"field": "gain"})
        print(f"{len(rows)} rows -> {path}")
        return EXIT_OK
    if field not in SWEEP_FIELDS:
        raise UsageError(f"unknown sweep field {args.field!r}; choose from "
                         f"{sorted(SWEEP_FIELDS + ('gain',) + tuple(FIELD_ALIASES))}")
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    # run r re-reads the config with seed + r, so random targets are redrawn
    factory = lambda run: _load(args.config, opts.seed + run)[0]
    try:
        rows = run_monte_carlo(factory, n_runs=args.runs, sweep=(field, grid),
                               simulate=not args.no_simulate)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    files = [write_rows_csv(out / f"sweep_{field}.csv", rows),
             write_rows_csv(out / f"sweep_{field}_summary.csv", aggregate(rows))]
    write_manifest(out, "sweep", args.config, args.seed, files, {"field": field})
    for a in aggregate(rows):
        print(f"{field}={a['value']:g}: feasible {a['feasible_fraction']:.2f}, "
              f"mean rate {a['rate_mean']:.3f} bps/Hz")
    return EXIT_OK


def cmd_link_budget(args) -> int:
    if args.gain is not None and args.range is not None:
        raise UsageError("--gain and --range are mutually exclusive")
    changes = {}
    for flag, name in (("tx_power_dbm", "tx_power_dbm"), ("noise_floor_dbm", "noise_floor_dbm"),
                       ("nf_db", "nf_db"), ("shadow", "shadow_mode"),
                       ("max_range_m", "max_range_m")):
        if getattr(args, flag) is not None:
            changes[name] = getattr(args, flag)
    if args.carrier_hz is not None:
        changes["wavelength_m"] = 299792458.0 / args.carrier_hz
    tkw = {}
    if args.rcs_dbsm is not None:
        tkw["rcs_m2"] = 10 ** (args.rcs_dbsm / 10)
    if args.ploss_exp is not None:
        tkw["ploss_exp"] = args.ploss_exp
    if args.shadow_db is not None:
        tkw["shadow_db"] = args.shadow_db
    try:
        if tkw:
            changes["target"] = Target(0.0, 1.0, **tkw)
        params = BudgetParams(**changes)
        sinrs = parse_grid(args.sinr)
        if args.gain is not None:
            rows = gain_range_table(parse_grid(args.gain), sinrs, params)
        else:
            rng_m = 150.0 if args.range is None else args.range
            rows = [(required_gain(rng_m, s, params), rng_m, s) for s in sinrs]
    except LinkBudgetDomainError as exc:
        print(dumps({"error": "domain", "message": str(exc)}, indent=None))
        return EXIT_INFEASIBLE
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    print(f"{'gain_db':>10} {'range_m':>12} {'sinr_db':>8}")
    for g, r, s in rows:
        print(f"{g:10.2f} {r:12.2f} {s:8.1f}")
    if args.csv:
        write_budget_csv(args.csv, rows)
    return EXIT_OK


def cmd_codebook(args) -> int:
    scenario, _ = _load(args.config, None)
    n = args.n_elements or scenario.array.subarray_size
    bits = args.bits or scenario.codebook_bits
    if n < 1 or bits < 1:
        raise UsageError("--n-elements and --bits must be >= 1")
    cb = dft_codebook(n, bits)
    angles = codebook_angles(bits, scenario.array.element_spacing)
    steer = np.stack([steering_vector(a, n, scenario.array.element_spacing)
                      for a in PATTERN_GRID_DEG], axis=1)
    gain = np.abs(cb.conj() @ steer) ** 2
    with np.errstate(divide="ignore"):
        gain_db = np.maximum(10 * np.log10(gain), -300.0)
    out = _out_dir(args.out)
    p1 = out / "codebook_angles.csv"
    with p1.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["codeword", "steer_angle_deg"])
        for i, a in enumerate(angles):
            w.writerow([i, f"{a:.6f}"])
    p2 = out / "codebook_patterns.csv"
    with p2.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle_deg"] + [f"cw_{i}_gain_db" for i in range(len(cb))])
        for j, a in enumerate(PATTERN_GRID_DEG):
            w.writerow([f"{a:.1f}"] + [f"{g:.6f}" for g in gain_db[:, j]])
    write_manifest(out, "codebook", args.config, None, [p1, p2], {"bits": bits, "n_elements": n})
    print(f"{len(cb)} codewords of {n} elements -> {out}")
    return EXIT_OK


def cmd_config(args) -> int:
    sys.stdout.write(default_config_text())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdisac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--config", "-c", help="scenario INI file (defaults: reference scenario)")
        sp.add_argument("--out", "-o", help=f"output directory (default ${OUT_DIR_ENV} or ./fdisac_out)")
        if seed:
            sp.add_argument("--seed", type=int, help="override [scenario] seed")

    sp = sub.add_parser("simulate", help="solve the design problem and simulate one CPI")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="Monte-Carlo sweep of one field")
    common(sp)
    sp.add_argument("--field", required=True,
                    help=f"one of {', '.join(SWEEP_FIELDS)}, gain (aliases: power, K, taps, cpi)")
    sp.add_argument("--grid", required=True, help="start:step:stop or comma list")
    sp.add_argument("--runs", type=int, default=1, help="runs per grid point (seeds seed..seed+runs-1)")
    sp.add_argument("--no-simulate", action="store_true", help="solve only, skip the CPI simulation")
    sp.add_argument("--sinr", default="0,5,10,15", help="SINR grid for --field gain (dB)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("link-budget", help="sensing range versus beamforming gain")
    sp.add_argument("--gain", help="combined TX+RX gain in dB (grid allowed); prints range")
    sp.add_argument("--range", type=float, help="range in m; prints required gain (default 150)")
    sp.add_argument("--sinr", default="10", help="SINR target(s) in dB")
    sp.add_argument("--tx-power-dbm", dest="tx_power_dbm", type=float)
    sp.add_argument("--noise-floor-dbm", dest="noise_floor_dbm", type=float)
    sp.add_argument("--nf-db", dest="nf_db", type=float)
    sp.add_argument("--rcs-dbsm", dest="rcs_dbsm", type=float)
    sp.add_argument("--ploss-exp", dest="ploss_exp", type=float)
    sp.add_argument("--shadow-db", dest="shadow_db", type=float)
    sp.add_argument("--shadow", choices=SHADOW_MODES, help="shadowing on one or both legs")
    sp.add_argument("--carrier-hz", dest="carrier_hz", type=float)
    sp.add_argument("--max-range-m", dest="max_range_m", type=float)
    sp.add_argument("--csv", help="also write the table to this CSV file")
    sp.set_defaults(func=cmd_link_budget)

    sp = sub.add_parser("codebook", help="dump DFT codebook steer angles and beam patterns")
    common(sp, seed=False)
    sp.add_argument("--bits", type=int)
    sp.add_argument("--n-elements", dest="n_elements", type=int)
    sp.set_defaults(func=cmd_codebook)

    sp = sub.add_parser("config", help="print the full default scenario file")
    sp.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(dumps({"error": "config", "field": exc.field, "message": str(exc)}, indent=None),
              file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(dumps({"error": "usage", "message": str(exc)}, indent=None), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
