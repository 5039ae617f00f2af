"""Scenario description shared by the optimizer, simulator and CLI."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .array_channel import ArrayConfig, DirectSiParams, OfdmParams, Target
from .cancellation import SaturationSpec, dbm_to_watts

__all__ = ["OpConstraints", "Scenario", "random_targets", "table_scenario"]

MAX_TARGET_RANGE_M = 80.0
MAX_TARGET_SPEED_MPS = 27.7


@dataclass(frozen=True)
class OpConstraints:
    """Budgets for the joint design: C1 power, C3 saturation, C4 sensing."""

    power_budget_w: float = 1.0
    lambda_s_db: float = 10.0
    sat_spec: SaturationSpec | None = None
    n_taps: int = 8

    def __post_init__(self):
        if not self.power_budget_w > 0:
            raise ValueError("power_budget_w must be > 0")
        if self.n_taps < 0:
            raise ValueError("n_taps must be >= 0")

    @property
    def power_dbm(self) -> float:
        return float(10 * np.log10(self.power_budget_w) + 30)

    def with_power_dbm(self, dbm: float) -> "OpConstraints":
        return replace(self, power_budget_w=float(dbm_to_watts(dbm)))


@dataclass(frozen=True)
class Scenario:
    """Everything needed to synthesize one frame and solve the design problem.

    ``user_paths`` lists ``(node_angle_deg, user_angle_deg)`` per DL path.
    Noise figures add to the thermal floor in dB.
    """

    ofdm: OfdmParams = field(default_factory=OfdmParams)
    array: ArrayConfig = field(default_factory=ArrayConfig)
    targets: tuple = ()
    n_ue: int = 4
    user_paths: tuple = ((0.0, 0.0),)
    user_pathloss_db: float = 110.0
    direct_si: DirectSiParams = field(default_factory=DirectSiParams)
    noise_floor_dbm: float = -87.0
    nf_node_db: float = 7.0
    nf_user_db: float = 3.0
    constraints: OpConstraints = field(default_factory=OpConstraints)
    codebook_bits: int = 5
    n_cpi_symbols: int = 1024
    n_cal_symbols: int = 14
    qam_order: int = 4
    seed: int = 0
    genie_doa: bool = False
    detection_offset_db: float = 13.0
    alpha_mode: str = "power"

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        object.__setattr__(self, "user_paths", tuple(tuple(map(float, p)) for p in self.user_paths))
        if self.constraints.sat_spec is None:
            object.__setattr__(self, "constraints", replace(
                self.constraints, sat_spec=SaturationSpec.uniform(self.array.n_rx_rf)))
        if len(self.constraints.sat_spec.lambda_sic_dbm) != self.array.n_rx_rf:
            raise ValueError("sat_spec needs one ceiling per RX RF chain")
        if self.n_ue < 1:
            raise ValueError("n_ue must be >= 1")
        if not self.user_paths:
            raise ValueError("at least one DL path is required")
        if self.n_cpi_symbols < 1 or self.n_cal_symbols < 1:
            raise ValueError("symbol counts must be >= 1")

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    @property
    def n_streams(self) -> int:
        return min(self.n_ue, self.array.n_tx_rf)

    @property
    def noise_node_w(self) -> float:
        return float(dbm_to_watts(self.noise_floor_dbm + self.nf_node_db))

    @property
    def noise_user_w(self) -> float:
        return float(dbm_to_watts(self.noise_floor_dbm + self.nf_user_db))

    def replace(self, **changes) -> "Scenario":
        return replace(self, **changes)

    def with_power_dbm(self, dbm: float) -> "Scenario":
        return replace(self, constraints=self.constraints.with_power_dbm(dbm))


def random_targets(n_targets: int, rng, max_range_m: float = MAX_TARGET_RANGE_M,
                   max_speed_mps: float = MAX_TARGET_SPEED_MPS, min_range_m: float = 1.0,
                   **target_kwargs) -> tuple:
    """DoA uniform in [-90, 90] deg, range uniform in [min, max], speed uniform in [0, max]."""
    rng = np.random.default_rng(rng)
    out = []
    for _ in range(n_targets):
        out.append(Target(angle_deg=float(rng.uniform(-90.0, 90.0)),
                          range_m=float(rng.uniform(min_range_m, max_range_m)),
                          velocity_mps=float(rng.uniform(0.0, max_speed_mps)),
                          **target_kwargs))
    return tuple(out)


def table_scenario(n_targets: int = 6, seed: int = 0, n_comm_targets: int = 2,
                   tx_power_dbm: float = 30.0, target_kwargs: dict | None = None,
                   **overrides) -> Scenario:
    """The reference vehicular scenario with randomly placed automobiles.

    The DL user is reached over paths along the directions of
    ``n_comm_targets`` randomly chosen targets (a random direction when
    there are no targets). ``target_kwargs`` (RCS, path-loss exponent,
    shadowing) apply to every random target.
    """
    rng = np.random.default_rng(seed)
    targets = random_targets(n_targets, rng, **(target_kwargs or {}))
    if targets:
        pick = rng.choice(len(targets), size=min(n_comm_targets, len(targets)), replace=False)
        tx_dirs = [targets[i].angle_deg for i in sorted(pick)]
    else:
        tx_dirs = [float(rng.uniform(-90.0, 90.0)) for _ in range(max(n_comm_targets, 1))]
    user_paths = tuple((a, float(rng.uniform(-90.0, 90.0))) for a in tx_dirs)
    constraints = OpConstraints(power_budget_w=float(dbm_to_watts(tx_power_dbm)))
    kwargs = dict(targets=targets, user_paths=user_paths, constraints=constraints,
                  direct_si=DirectSiParams(seed=int(rng.integers(2**31))),
                  seed=int(rng.integers(2**31)))
    kwargs.update(overrides)
    return Scenario(**kwargs)
