"""Closed-form monostatic sensing range from the radar-equation path gain.

Solves ``P_tx + G - L(d) = N0 + NF + SINR`` for the range ``d``, where
``L(d)`` is the path loss of a point target in dB, and the inverse
problem (beamforming gain needed to reach a range).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .array_channel import SPEED_OF_LIGHT, OfdmParams, Target

__all__ = [
    "SHADOW_MODES",
    "BudgetParams",
    "LinkBudgetDomainError",
    "path_loss_db",
    "sensing_range",
    "required_gain",
    "gain_range_table",
    "write_budget_csv",
]

SHADOW_MODES = ("one_way", "round_trip")


class LinkBudgetDomainError(ValueError):
    """The budget has no positive, finite range solution."""


def _default_target() -> Target:
    # range is a placeholder; the template only carries RCS, n_p and shadowing
    return Target(angle_deg=0.0, range_m=1.0)


@dataclass(frozen=True)
class BudgetParams:
    """Inputs of the sensing-range budget.

    ``combined_gain_db`` is the TX plus RX beamforming gain. With
    ``shadow_mode="round_trip"`` (default) the target's shadowing loss is
    charged on both legs, otherwise once. ``max_range_m`` caps solutions
    at the OFDM unambiguous range ``c / (2 scs)``.
    """

    tx_power_dbm: float = 30.0
    combined_gain_db: float = 40.0
    sinr_target_db: float = 10.0
    noise_floor_dbm: float = -87.0
    nf_db: float = 7.0
    target: Target = field(default_factory=_default_target)
    wavelength_m: float = SPEED_OF_LIGHT / 28e9
    shadow_mode: str = "round_trip"
    max_range_m: float = SPEED_OF_LIGHT / (2 * OfdmParams().scs_hz)

    def __post_init__(self):
        for name in ("tx_power_dbm", "noise_floor_dbm", "nf_db", "wavelength_m"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if np.isnan(self.combined_gain_db) or np.isnan(self.sinr_target_db):
            raise ValueError("gain and SINR must not be NaN")
        if self.shadow_mode not in SHADOW_MODES:
            raise ValueError(f"shadow_mode must be one of {SHADOW_MODES}")
        if self.wavelength_m <= 0 or not self.max_range_m > 0:
            raise ValueError("wavelength_m and max_range_m must be positive")

    @property
    def shadow_passes(self) -> int:
        return 2 if self.shadow_mode == "round_trip" else 1

    def replace(self, **changes) -> "BudgetParams":
        return replace(self, **changes)


def _loss_offset_db(params: BudgetParams) -> float:
    """Range-independent part of the path loss: ``L(d) = offset + 10 n_p log10 d``."""
    t = params.target
    return (-10.0 * np.log10(params.wavelength_m ** 2 * t.rcs_m2 / (4 * np.pi) ** 2)
            + params.shadow_passes * t.shadow_db)


def path_loss_db(range_m, params: BudgetParams):
    """Two-way target path loss in dB (negative of the radar-equation gain)."""
    d = np.asarray(range_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("range must be > 0")
    return _loss_offset_db(params) + 10.0 * params.target.ploss_exp * np.log10(d)


def sensing_range(params: BudgetParams) -> float:
    """Largest range at which the echo meets the SINR target, in metres.

    Capped at ``params.max_range_m`` (so an unbounded budget, e.g. a
    SINR target of minus infinity, returns the unambiguous range).

    Raises
    ------
    LinkBudgetDomainError
        If the budget gives no positive range (e.g. ``combined_gain_db``
        of minus infinity).
    """
    allowed_loss = (params.tx_power_dbm + params.combined_gain_db - params.noise_floor_dbm
                    - params.nf_db - params.sinr_target_db)
    if np.isnan(allowed_loss):
        raise LinkBudgetDomainError("budget is undefined (inf - inf)")
    if allowed_loss == np.inf:
        return float(params.max_range_m)
    with np.errstate(over="ignore"):
        d = 10.0 ** ((allowed_loss - _loss_offset_db(params)) / (10.0 * params.target.ploss_exp))
    if not d > 0:
        raise LinkBudgetDomainError(
            f"no positive range: allowed path loss {allowed_loss:.1f} dB is unreachable")
    return float(min(d, params.max_range_m))


def required_gain(range_m: float, sinr_db: float, params: BudgetParams | None = None) -> float:
    """Combined TX+RX beamforming gain (dB) needed to reach ``range_m`` at ``sinr_db``.

    Exact inverse of :func:`sensing_range` below the range cap.
    """
    params = BudgetParams() if params is None else params
    if not range_m > 0:
        raise ValueError("range must be > 0")
    return float(path_loss_db(range_m, params) + params.noise_floor_dbm + params.nf_db
                 + sinr_db - params.tx_power_dbm)


def gain_range_table(gains_db: Iterable[float], sinrs_db: Iterable[float] = (0, 5, 10, 15),
                     params: BudgetParams | None = None) -> list[tuple[float, float, float]]:
    """``(gain_db, range_m, sinr_db)`` rows, SINR-major, for the range-vs-gain curves."""
    params = BudgetParams() if params is None else params
    rows = []
    for s in sinrs_db:
        for g in gains_db:
            p = params.replace(combined_gain_db=float(g), sinr_target_db=float(s))
            rows.append((float(g), sensing_range(p), float(s)))
    return rows


def write_budget_csv(path, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gain_db", "range_m", "sinr_db"])
        for g, r, s in rows:
            w.writerow([f"{g:.6f}", f"{r:.9g}", f"{s:.6f}"])
    return path
