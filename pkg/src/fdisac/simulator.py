"""Frame-level simulation, radar processing and Monte-Carlo sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .array_channel import steering_vector
from .beamforming import achievable_rate
from .cancellation import apply_cancellation, residual_rf_power, watts_to_dbm
from .errors import InfeasibleError
from .jsonio import write_json
from .isac_optimizer import OptimizedConfig, solve_op
from .radar import (
    TargetEstimate,
    extract_targets,
    max_unambiguous_range,
    merge_detections,
    range_doppler_map,
    range_resolution,
    sensing_sinr,
    suppress_sidelobes,
    velocity_resolution,
)
from .scenario import MAX_TARGET_RANGE_M, Scenario, table_scenario
from .signal_model import ChannelSet, complex_noise, node_noise, node_rx_signal, user_rx_signal
from .waveform import ResourceGrid, random_qam_grid

__all__ = [
    "FrameResult",
    "simulate_frame",
    "process_radar",
    "match_estimates",
    "apply_sweep",
    "run_monte_carlo",
    "aggregate",
    "write_rows_csv",
    "SWEEP_FIELDS",
    "write_json",
]

RANGE_OVERSAMPLE = 4
DOPPLER_OVERSAMPLE = 1
REFERENCE_REG = 0.1
GATE_COST = 1e12


@dataclass
class FrameResult:
    """One simulated CPI.

    ``rx_node_raw`` is the node RX chain output after the analog combiner
    and tap canceller, ``rx_node_clean`` the same after digital
    cancellation. Grids are ``None`` when not retained.
    """

    tx_grid: ResourceGrid | None
    rx_node_raw: ResourceGrid | None
    rx_node_clean: ResourceGrid | None
    rx_user: ResourceGrid | None
    metrics: dict
    estimates: list = field(default_factory=list)


def _check_dims(scenario: Scenario, config: OptimizedConfig):
    arr = scenario.array
    bf = config.beamformer
    expect = {
        "v_rf": (bf.v_rf.shape, (arr.n_tx_antennas, arr.n_tx_rf)),
        "w_rf": (bf.w_rf.shape, (arr.n_rx_antennas, arr.n_rx_rf)),
        "v_bb rows": (bf.v_bb.shape[0], arr.n_tx_rf),
        "analog": ((config.analog.n_rx_rf, config.analog.n_tx_rf), (arr.n_rx_rf, arr.n_tx_rf)),
        "digital": (config.digital.d_matrix.shape, (arr.n_rx_rf, arr.n_tx_rf)),
    }
    for name, (got, want) in expect.items():
        if tuple(np.atleast_1d(got)) != tuple(np.atleast_1d(want)):
            raise ValueError(f"{name} has shape {got}, scenario expects {want}")


def simulate_frame(scenario: Scenario, config: OptimizedConfig, n_symbols: int | None = None,
                   seed=None, noise: bool = True, keep_grids: bool = True,
                   radar: bool | None = None, channels: ChannelSet | None = None) -> FrameResult:
    """Transmit one CPI of random QAM data and process what comes back.

    Per resource element the node receives
    ``W^H (H_radar(m, n) + H_bb) V s + A s + W^H z`` with ``s = V_bb x``,
    then subtracts ``D s``. The user receives ``H_DL V s + z_u``.

    Parameters
    ----------
    n_symbols : int, optional
        CPI length; defaults to ``scenario.n_cpi_symbols``.
    seed : optional
        Frame seed; defaults to one derived from ``scenario.seed``.
    radar : bool, optional
        Run radar processing; by default only when the design has target
        priors to look at.
    """
    _check_dims(scenario, config)
    if channels is None or channels.scenario != scenario:
        channels = ChannelSet(scenario)
    bf = config.beamformer
    n_sym = scenario.n_cpi_symbols if n_symbols is None else int(n_symbols)
    seed = scenario.seed + 101 if seed is None else seed
    rng = np.random.default_rng(seed)
    x = random_qam_grid(scenario.ofdm, bf.n_streams, scenario.qam_order,
                        seed=rng.integers(2**63), n_symbols=n_sym).entries
    s = x @ bf.v_bb.T
    y_raw = node_rx_signal(channels, bf.v_rf, bf.w_rf, s, config.analog)
    if noise:
        y_raw += node_noise(rng, y_raw.shape, scenario.noise_node_w, bf.w_rf)
    y_clean = apply_cancellation(y_raw, config.digital, s)
    y_user = user_rx_signal(channels, bf.v_rf, s)
    if noise:
        y_user += complex_noise(rng, y_user.shape, scenario.noise_user_w)

    h_si = channels.h_bb + channels.radar_matrix().entries
    sinr, _ = sensing_sinr(channels, bf, config.analog, config.digital)
    metrics = {
        "rate_bps_hz": achievable_rate(channels.h_dl, bf.precoder(), scenario.noise_user_w),
        "target_sinr_db": [float(v) for v in sinr],
        "residual_si_dbm": [float(v) for v in residual_rf_power(h_si, config.analog, bf.v_rf,
                                                                bf.v_bb, bf.w_rf)],
        "rx_power_raw_dbm": [float(v) for v in watts_to_dbm(np.mean(np.abs(y_raw) ** 2, axis=(0, 1)))],
        "rx_power_clean_dbm": [float(v) for v in watts_to_dbm(np.mean(np.abs(y_clean) ** 2, axis=(0, 1)))],
        "user_rx_power_dbm": float(watts_to_dbm(np.mean(np.sum(np.abs(y_user) ** 2, axis=2)))),
        "tx_power_dbm": float(watts_to_dbm(bf.power())),
    }
    if radar is None:
        radar = bool(config.target_priors_deg)
    estimates = process_radar(scenario, bf, y_clean, s) if radar else []
    if keep_grids:
        return FrameResult(ResourceGrid(s), ResourceGrid(y_raw), ResourceGrid(y_clean),
                           ResourceGrid(y_user), metrics, estimates)
    return FrameResult(None, None, None, None, metrics, estimates)


def process_radar(scenario: Scenario, beamformer, cleaned, tx_samples,
                  max_range_m: float | None = None) -> list[TargetEstimate]:
    """Range/velocity per RX look direction, merged across chains.

    For each distinct RX look direction the modulation is removed with the
    signal actually radiated toward that direction, ``a_T^H V_rf s``, so
    the echo of a target in that beam reduces to its delay/Doppler phase
    ramp. Detections of the same scatterer on several chains collapse to
    the strongest one, whose look direction becomes the angle estimate.
    Without sensing look directions nothing is processed.
    """
    ofdm = scenario.ofdm
    arr = scenario.array
    if max_range_m is None:
        max_range_m = min(2.0 * MAX_TARGET_RANGE_M, max_unambiguous_range(ofdm) / 2)
    cleaned = np.asarray(getattr(cleaned, "entries", cleaned))
    s = np.asarray(getattr(tx_samples, "entries", tx_samples))
    dirs = list(beamformer.rx_dirs_deg)
    n_cpi = cleaned.shape[1]
    found, done = [], set()
    for chain, d in enumerate(dirs):
        if d in done:
            continue
        done.add(d)
        a_t = steering_vector(d, arr.n_tx_antennas, arr.element_spacing)
        ref = s @ (a_t.conj() @ beamformer.v_rf)
        if not np.any(ref):
            continue
        rd = range_doppler_map(cleaned[:, :, chain], ref, ofdm, reference="regularized",
                               range_oversample=RANGE_OVERSAMPLE,
                               doppler_oversample=DOPPLER_OVERSAMPLE, reg=REFERENCE_REG,
                               max_range_m=max_range_m)
        found += suppress_sidelobes(
            extract_targets(rd, d, scenario.detection_offset_db, max_range_m, chain),
            range_resolution(ofdm), velocity_resolution(ofdm, n_cpi))
    return merge_detections(found, 2.0 * range_resolution(ofdm),
                            2.0 * velocity_resolution(ofdm, n_cpi))


def match_estimates(targets, estimates, ofdm, n_cpi: int, gate_cells: float = 2.0):
    """Optimal one-to-one association of estimates to true targets.

    Cost is the squared offset in resolution cells; pairs further than
    ``gate_cells`` in range or velocity stay unmatched. Returns
    ``[(target_index, estimate), ...]``.
    """
    if not targets or not estimates:
        return []
    dr, dv = range_resolution(ofdm), velocity_resolution(ofdm, n_cpi)
    tr = np.array([[t.range_m, t.velocity_mps] for t in targets])
    es = np.array([[e.range_m, e.velocity_mps] for e in estimates])
    er = np.abs(tr[:, None, 0] - es[None, :, 0]) / dr
    ev = np.abs(tr[:, None, 1] - es[None, :, 1]) / dv
    gated = (er <= gate_cells) & (ev <= gate_cells)
    # gate before assigning, or a far pair can displace a close one
    cost = np.where(gated, er ** 2 + ev ** 2, GATE_COST)
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), estimates[c]) for r, c in zip(rows, cols) if gated[r, c]]


SWEEP_FIELDS = ("tx_power_dbm", "n_targets", "lambda_s_db", "n_taps", "n_cpi_symbols")


def apply_sweep(scenario: Scenario, name: str, value) -> Scenario:
    """Scenario with one sweepable field set. ``n_targets`` keeps the first K targets."""
    if name == "tx_power_dbm":
        return scenario.with_power_dbm(float(value))
    if name == "n_targets":
        k = int(value)
        if not 0 <= k <= len(scenario.targets):
            raise ValueError(f"n_targets={k} outside [0, {len(scenario.targets)}]")
        return scenario.replace(targets=scenario.targets[:k])
    if name == "lambda_s_db":
        return scenario.replace(constraints=scenario.constraints.__class__(
            **{**scenario.constraints.__dict__, "lambda_s_db": float(value)}))
    if name == "n_taps":
        return scenario.replace(constraints=scenario.constraints.__class__(
            **{**scenario.constraints.__dict__, "n_taps": int(value)}))
    if name == "n_cpi_symbols":
        return scenario.replace(n_cpi_symbols=int(value))
    raise ValueError(f"unknown sweep field {name!r}; choose from {SWEEP_FIELDS}")


def _run_one(scenario: Scenario, simulate: bool, n_symbols: int | None) -> dict:
    row = {"feasible": True, "error": "", "rate_bps_hz": np.nan, "min_sinr_db": np.nan,
           "tx_power_used_dbm": np.nan, "n_targets": scenario.n_targets, "n_detected": 0,
           "n_matched": 0, "range_rmse_m": np.nan, "range_rel_rmse": np.nan,
           "velocity_rmse_mps": np.nan}
    channels = ChannelSet(scenario)
    try:
        cfg = solve_op(scenario, channels=channels)
    except InfeasibleError as exc:
        row.update(feasible=False, error=exc.constraint)
        return row
    row.update(rate_bps_hz=cfg.achieved_rate, min_sinr_db=cfg.min_target_sinr_db,
               tx_power_used_dbm=float(watts_to_dbm(cfg.beamformer.power())))
    if simulate:
        fr = simulate_frame(scenario, cfg, n_symbols=n_symbols, keep_grids=False, channels=channels)
        n_cpi = scenario.n_cpi_symbols if n_symbols is None else n_symbols
        pairs = match_estimates(scenario.targets, fr.estimates, scenario.ofdm, n_cpi)
        row["n_detected"] = len(fr.estimates)
        row["n_matched"] = len(pairs)
        if pairs:
            er = np.array([e.range_m - scenario.targets[k].range_m for k, e in pairs])
            rel = er / np.array([scenario.targets[k].range_m for k, _ in pairs])
            ev = np.array([e.velocity_mps - scenario.targets[k].velocity_mps for k, e in pairs])
            row.update(range_rmse_m=float(np.sqrt(np.mean(er ** 2))),
                       range_rel_rmse=float(np.sqrt(np.mean(rel ** 2))),
                       velocity_rmse_mps=float(np.sqrt(np.mean(ev ** 2))))
        row["_pairs"] = [(scenario.targets[k], e) for k, e in pairs]
    return row


def run_monte_carlo(scenario_factory: Callable[[int], Scenario] | Scenario | None = None,
                    n_runs: int = 1, sweep: tuple[str, Sequence] | None = None,
                    simulate: bool = True, n_symbols: int | None = None):
    """Re-solve and (optionally) simulate every (sweep point, run) pair.

    ``scenario_factory(run)`` returns the scenario of one run (default:
    the reference scenario with seed ``run``); a fixed ``Scenario`` is
    reused for every run with its seed offset by the run index. ``sweep``
    is ``(field, values)`` with a field from :data:`SWEEP_FIELDS`.
    Infeasible solves are kept as rows with ``feasible = False``.

    Returns
    -------
    list of dict
        One row per sweep point and run, ordered point-major.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if scenario_factory is None:
        scenario_factory = lambda run: table_scenario(seed=run)
    elif isinstance(scenario_factory, Scenario):
        base = scenario_factory
        scenario_factory = lambda run: base.replace(seed=base.seed + run)
    name, values = sweep if sweep is not None else ("", [None])
    values = list(values)
    if not values:
        raise ValueError("sweep grid is empty")
    rows = []
    for p_idx, value in enumerate(values):
        for run in range(n_runs):
            sc = scenario_factory(run)
            if name:
                sc = apply_sweep(sc, name, value)
            row = {"point": p_idx, "field": name, "value": value, "run": run, "seed": sc.seed}
            row.update(_run_one(sc, simulate, n_symbols))
            rows.append(row)
    return rows


def aggregate(rows: Sequence[dict]) -> list[dict]:
    """Per sweep point: mean/std over feasible runs, and the mean with infeasible runs at zero rate."""
    out = []
    for p in sorted({r["point"] for r in rows}):
        pts = [r for r in rows if r["point"] == p]
        feas = [r for r in pts if r["feasible"]]
        rates = np.array([r["rate_bps_hz"] for r in feas])
        pairs = [pr for r in feas for pr in r.get("_pairs", [])]
        n_true = sum(r["n_targets"] for r in feas)
        agg = {"point": p, "field": pts[0]["field"], "value": pts[0]["value"], "n_runs": len(pts),
               "feasible_fraction": len(feas) / len(pts),
               "rate_mean": float(rates.mean()) if rates.size else float("nan"),
               "rate_std": float(rates.std()) if rates.size else float("nan"),
               "rate_mean_infeasible_zero": float(np.sum(rates) / len(pts)),
               "detection_rate": (len(pairs) / n_true) if n_true else float("nan")}
        if pairs:
            er = np.array([e.range_m - t.range_m for t, e in pairs])
            ev = np.array([e.velocity_mps - t.velocity_mps for t, e in pairs])
            agg.update(range_rmse_m=float(np.sqrt(np.mean(er ** 2))),
                       velocity_rmse_mps=float(np.sqrt(np.mean(ev ** 2))))
        else:
            agg.update(range_rmse_m=float("nan"), velocity_rmse_mps=float("nan"))
        out.append(agg)
    return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return "nan" if np.isnan(v) else repr(float(v))
    return "" if v is None else str(v)


def write_rows_csv(path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    """Deterministic CSV: fixed column order, ``repr`` floats, private keys dropped."""
    path = Path(path)
    if columns is None:
        columns = [k for k in rows[0] if not k.startswith("_")] if rows else []
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
    return path
