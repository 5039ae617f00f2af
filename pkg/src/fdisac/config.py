"""INI scenario files: flat sections, units in key names, Table defaults.

An empty file yields the reference scenario. Every key is optional::

    [scenario]
    seed = 0
    n_targets = 6              ; random placement unless [targets] lists them
    n_comm_targets = 2         ; DL paths follow this many random targets
    n_cpi_symbols = 1024
    genie_doa = false

    [targets]
    target_0 = 24.7, 22.3, 1.1 ; angle_deg, range_m, velocity_mps

    [constraints]
    tx_power_dbm = 30
    lambda_s_db = 10

Unknown sections or keys, malformed numbers and out-of-range values raise
:class:`ConfigError` naming ``section.key``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .array_channel import ArrayConfig, DirectSiParams, OfdmParams, Target
from .cancellation import SaturationSpec, dbm_to_watts
from .errors import ConfigError
from .scenario import OpConstraints, Scenario, table_scenario

__all__ = ["RunOptions", "SCHEMA", "load_config", "parse_config", "default_config_text"]

_bool = "bool"

# section -> key -> (type, default)
SCHEMA = {
    "scenario": {
        "seed": (int, 0),
        "n_targets": (int, 6),
        "n_comm_targets": (int, 2),
        "n_cpi_symbols": (int, 1024),
        "n_cal_symbols": (int, 14),
        "qam_order": (int, 4),
        "codebook_bits": (int, 5),
        "genie_doa": (_bool, False),
        "detection_offset_db": (float, 13.0),
        "alpha_mode": (str, "power"),
    },
    "ofdm": {
        "carrier_hz": (float, 28e9),
        "scs_hz": (float, 120e3),
        "n_subcarriers": (int, 792),
        "n_symbols": (int, 14),
        "symbol_duration_s": (float, 8.92e-6),
        "bandwidth_hz": (float, 500e6),
    },
    "array": {
        "n_tx_rf": (int, 8),
        "n_rx_rf": (int, 8),
        "subarray_size": (int, 16),
        "element_spacing_wavelengths": (float, 0.5),
    },
    "target_defaults": {
        "rcs_m2": (float, 100.0),
        "ploss_exp": (float, 2.86),
        "shadow_db": (float, 20.0),
    },
    "user": {
        "n_ue": (int, 4),
        "pathloss_db": (float, 110.0),
        "paths_deg": (str, ""),
    },
    "self_interference": {
        "pathloss_db": (float, 40.0),
        "rician_kappa_db": (float, 35.0),
        "seed": (int, -1),
    },
    "noise": {
        "noise_floor_dbm": (float, -87.0),
        "nf_node_db": (float, 7.0),
        "nf_user_db": (float, 3.0),
    },
    "constraints": {
        "tx_power_dbm": (float, 30.0),
        "lambda_s_db": (float, 10.0),
        "lambda_sic_dbm": (float, -30.0),
        "n_taps": (int, 8),
        "objective": (str, "comm"),
        "rate_floor_bps_hz": (float, 0.0),
    },
}


@dataclass(frozen=True)
class RunOptions:
    """Solver options that are not part of the physical scenario."""

    objective: str = "comm"
    rate_floor_bps_hz: float = 0.0
    seed: int = 0


def default_config_text() -> str:
    """The full schema with defaults, as an INI document."""
    lines = []
    for sec, keys in SCHEMA.items():
        lines.append(f"[{sec}]")
        for k, (typ, val) in keys.items():
            if typ is _bool:
                val = "true" if val else "false"
            lines.append(f"{k} = {val}")
        lines.append("")
    lines += ["[targets]", "; target_0 = angle_deg, range_m, velocity_mps", ""]
    return "\n".join(lines)


def _convert(sec: str, key: str, raw: str, typ):
    where = f"{sec}.{key}"
    try:
        if typ is _bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is int:
            f = float(raw)
            if not f.is_integer():
                raise ValueError(raw)
            return int(f)
        if typ is float:
            v = float(raw)
            if np.isnan(v):
                raise ValueError(raw)
            return v
        return raw.strip()
    except ValueError:
        kind = {int: "an integer", float: "a number", _bool: "a boolean"}.get(typ, "text")
        raise ConfigError(where, f"expected {kind}, got {raw!r}") from None


def _floats(where: str, raw: str, n: int) -> list[float]:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != n:
        raise ConfigError(where, f"expected {n} comma-separated numbers, got {raw!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise ConfigError(where, f"expected numbers, got {raw!r}") from None


def parse_config(text: str, seed_override: int | None = None) -> tuple[Scenario, RunOptions]:
    """Build a scenario from INI text (see module docstring)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", f"not a valid INI document: {exc}") from None
    vals = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
    targets_raw = {}
    for sec in cp.sections():
        if sec == "targets":
            targets_raw = dict(cp.items(sec))
            continue
        if sec not in SCHEMA:
            raise ConfigError(sec, f"unknown section; expected one of {sorted(SCHEMA) + ['targets']}")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"{sec}.{key}", "unknown key")
            vals[sec][key] = _convert(sec, key, raw, SCHEMA[sec][key][0])

    sc_v, c_v = vals["scenario"], vals["constraints"]
    if seed_override is not None:
        sc_v["seed"] = int(seed_override)
    try:
        ofdm = OfdmParams(**vals["ofdm"])
    except ValueError as exc:
        raise ConfigError("ofdm", str(exc)) from None
    a = vals["array"]
    try:
        array = ArrayConfig(a["n_tx_rf"], a["n_rx_rf"], a["subarray_size"],
                            a["element_spacing_wavelengths"])
    except ValueError as exc:
        raise ConfigError("array", str(exc)) from None
    if c_v["objective"] not in ("comm", "sensing"):
        raise ConfigError("constraints.objective", "must be 'comm' or 'sensing'")
    if sc_v["alpha_mode"] not in ("power", "amplitude"):
        raise ConfigError("scenario.alpha_mode", "must be 'power' or 'amplitude'")
    if sc_v["n_targets"] < 0:
        raise ConfigError("scenario.n_targets", "must be >= 0")
    for key in ("n_cpi_symbols", "n_cal_symbols", "codebook_bits"):
        if sc_v[key] < 1:
            raise ConfigError(f"scenario.{key}", "must be >= 1")
    if sc_v["qam_order"] not in (4, 16, 64, 256):
        raise ConfigError("scenario.qam_order", "must be one of 4, 16, 64, 256")
    if c_v["n_taps"] < 0:
        raise ConfigError("constraints.n_taps", "must be >= 0")
    if vals["user"]["n_ue"] < 1:
        raise ConfigError("user.n_ue", "must be >= 1")

    td = vals["target_defaults"]
    try:
        constraints = OpConstraints(
            power_budget_w=float(dbm_to_watts(c_v["tx_power_dbm"])),
            lambda_s_db=c_v["lambda_s_db"],
            sat_spec=SaturationSpec.uniform(array.n_rx_rf, c_v["lambda_sic_dbm"]),
            n_taps=c_v["n_taps"])
    except ValueError as exc:
        raise ConfigError("constraints", str(exc)) from None

    base = table_scenario(n_targets=sc_v["n_targets"], seed=sc_v["seed"],
                          n_comm_targets=sc_v["n_comm_targets"],
                          target_kwargs=td)
    targets = base.targets
    user_paths = base.user_paths
    if targets_raw:
        parsed = []
        for key in sorted(targets_raw, key=lambda k: (len(k), k)):
            ang, rng_m, vel = _floats(f"targets.{key}", targets_raw[key], 3)
            try:
                parsed.append(Target(ang, rng_m, vel, **td))
            except ValueError as exc:
                raise ConfigError(f"targets.{key}", str(exc)) from None
        targets = tuple(parsed)
        rng = np.random.default_rng(sc_v["seed"])
        if targets:
            pick = rng.choice(len(targets), size=min(sc_v["n_comm_targets"], len(targets)),
                              replace=False)
            user_paths = tuple((targets[i].angle_deg, float(rng.uniform(-90, 90)))
                               for i in sorted(pick))
    if vals["user"]["paths_deg"]:
        paths = []
        for i, item in enumerate(vals["user"]["paths_deg"].split(";")):
            node, user = _floats(f"user.paths_deg[{i}]", item.replace(":", ","), 2)
            if abs(node) > 90 or abs(user) > 90:
                raise ConfigError(f"user.paths_deg[{i}]", "angles must lie in [-90, 90]")
            paths.append((node, user))
        user_paths = tuple(paths)
    si = vals["self_interference"]
    si_seed = base.direct_si.seed if si["seed"] < 0 else si["seed"]
    try:
        direct_si = DirectSiParams(si["pathloss_db"], si["rician_kappa_db"], si_seed)
        scenario = Scenario(
            ofdm=ofdm, array=array, targets=targets, n_ue=vals["user"]["n_ue"],
            user_paths=user_paths, user_pathloss_db=vals["user"]["pathloss_db"],
            direct_si=direct_si, noise_floor_dbm=vals["noise"]["noise_floor_dbm"],
            nf_node_db=vals["noise"]["nf_node_db"], nf_user_db=vals["noise"]["nf_user_db"],
            constraints=constraints, codebook_bits=sc_v["codebook_bits"],
            n_cpi_symbols=sc_v["n_cpi_symbols"], n_cal_symbols=sc_v["n_cal_symbols"],
            qam_order=sc_v["qam_order"], seed=base.seed, genie_doa=sc_v["genie_doa"],
            detection_offset_db=sc_v["detection_offset_db"], alpha_mode=sc_v["alpha_mode"])
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from None
    return scenario, RunOptions(c_v["objective"], c_v["rate_floor_bps_hz"], sc_v["seed"])


def load_config(path, seed_override: int | None = None) -> tuple[Scenario, RunOptions]:
    """Read and parse a scenario file; an unreadable file is a config error."""
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
    return parse_config(text, seed_override)
