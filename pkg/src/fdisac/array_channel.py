"""Array geometry, DFT codebooks and channel synthesis.

All channel matrices follow the ``rows = RX side, cols = TX side`` layout.
Steering vectors are unnormalized (unit-modulus entries), so a matched
beam of ``N`` elements has power gain ``N**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.constants import speed_of_light

__all__ = [
    "SPEED_OF_LIGHT",
    "ArrayConfig",
    "Target",
    "OfdmParams",
    "ChannelMatrix",
    "DirectSiParams",
    "steering_vector",
    "subarray_steering",
    "dft_codebook",
    "codebook_angles",
    "target_amplitude",
    "radar_si_channel",
    "radar_phase",
    "direct_si_channel",
    "downlink_channel",
    "db2lin",
    "lin2db",
]

SPEED_OF_LIGHT = speed_of_light
CHANNEL_KINDS = ("radar", "direct_si", "composite_si", "downlink")


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


@dataclass(frozen=True)
class ArrayConfig:
    """Partially-connected hybrid array at the full-duplex node.

    Each RF chain drives ``subarray_size`` contiguous ULA elements on
    both the TX and the RX side.
    """

    n_tx_rf: int = 8
    n_rx_rf: int = 8
    subarray_size: int = 16
    element_spacing: float = 0.5

    def __post_init__(self):
        for name in ("n_tx_rf", "n_rx_rf", "subarray_size"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.element_spacing <= 0:
            raise ValueError("element_spacing must be positive")

    @property
    def n_tx_antennas(self) -> int:
        return self.n_tx_rf * self.subarray_size

    @property
    def n_rx_antennas(self) -> int:
        return self.n_rx_rf * self.subarray_size


@dataclass(frozen=True)
class Target:
    """Point scatterer seen by the monostatic node."""

    angle_deg: float
    range_m: float
    velocity_mps: float = 0.0
    rcs_m2: float = 100.0
    ploss_exp: float = 2.86
    shadow_db: float = 20.0

    def __post_init__(self):
        if abs(self.angle_deg) > 90:
            raise ValueError(f"angle_deg={self.angle_deg} outside [-90, 90]")
        if self.range_m <= 0:
            raise ValueError("range_m must be > 0")
        if self.rcs_m2 <= 0:
            raise ValueError("rcs_m2 must be > 0")
        if self.ploss_exp <= 0:
            raise ValueError("ploss_exp must be > 0")

    @property
    def delay_s(self) -> float:
        return 2.0 * self.range_m / SPEED_OF_LIGHT

    def doppler_hz(self, wavelength_m: float) -> float:
        return 2.0 * self.velocity_mps / wavelength_m


@dataclass(frozen=True)
class OfdmParams:
    """OFDM numerology. Defaults are the 5G NR FR2 values of the reference setup.

    ``bandwidth_hz`` is the nominal channel bandwidth used for the noise
    floor; the active bandwidth ``n_subcarriers * scs_hz`` (95.04 MHz by
    default) sets the range resolution.
    """

    carrier_hz: float = 28e9
    scs_hz: float = 120e3
    n_subcarriers: int = 792
    n_symbols: int = 14
    symbol_duration_s: float = 8.92e-6
    bandwidth_hz: float = 500e6

    def __post_init__(self):
        if self.carrier_hz <= 0 or self.scs_hz <= 0:
            raise ValueError("carrier_hz and scs_hz must be positive")
        if self.n_subcarriers < 1 or self.n_symbols < 1:
            raise ValueError("grid dimensions must be >= 1")
        if self.symbol_duration_s < 1.0 / self.scs_hz * (1 - 1e-12):
            raise ValueError("symbol_duration_s must be >= 1/scs_hz")
        if self.n_subcarriers * self.scs_hz > self.bandwidth_hz * (1 + 1e-12):
            raise ValueError("active bandwidth exceeds bandwidth_hz")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def active_bandwidth_hz(self) -> float:
        return self.n_subcarriers * self.scs_hz

    def subcarrier_offsets(self) -> np.ndarray:
        """Centered subcarrier indices ``m`` in ``[-N/2, N/2)``."""
        n = self.n_subcarriers
        return np.arange(n) - n // 2


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray
    meaning: str

    def __post_init__(self):
        if self.meaning not in CHANNEL_KINDS:
            raise ValueError(f"unknown channel kind {self.meaning!r}")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("channel entries must be finite")

    @property
    def shape(self):
        return self.entries.shape

    def __add__(self, other: "ChannelMatrix") -> "ChannelMatrix":
        kind = self.meaning if self.meaning == other.meaning else "composite_si"
        return ChannelMatrix(self.entries + other.entries, kind)


@dataclass(frozen=True)
class DirectSiParams:
    pathloss_db: float = 40.0
    rician_kappa_db: float = 35.0
    seed: int = 0

    def __post_init__(self):
        if self.pathloss_db < 0:
            raise ValueError("pathloss_db must be >= 0")


def steering_vector(angle_deg: float, n_elements: int,
                    spacing_wavelengths: float = 0.5) -> np.ndarray:
    """ULA response ``exp(j 2 pi i d sin(theta))`` for ``i = 0..N-1``."""
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    if not np.isfinite(angle_deg) or abs(angle_deg) > 90:
        raise ValueError(f"angle {angle_deg} deg outside [-90, 90]")
    i = np.arange(n_elements)
    return np.exp(2j * np.pi * i * spacing_wavelengths * np.sin(np.deg2rad(angle_deg)))


def subarray_steering(angle_deg: float, array: ArrayConfig) -> np.ndarray:
    return steering_vector(angle_deg, array.subarray_size, array.element_spacing)


def dft_codebook(n_elements: int, bits: int) -> np.ndarray:
    """Phase-only DFT beams, one per row.

    Beam ``b`` has phase progression ``pi * u_b`` per element with
    ``u_b = -1 + 2 b / 2**bits``; for half-wavelength spacing ``u_b`` is the
    sine of the steer angle, so the ``2**bits`` beams tile ``[-1, 1)``.

    Returns
    -------
    np.ndarray
        Complex array of shape ``(2**bits, n_elements)``.
    """
    if bits < 1:
        raise ValueError("bits must be >= 1")
    if n_elements < 1:
        raise ValueError("n_elements must be >= 1")
    n_beams = 2 ** bits
    u = -1.0 + 2.0 * np.arange(n_beams) / n_beams
    i = np.arange(n_elements)
    return np.exp(1j * np.pi * np.outer(u, i))


def codebook_angles(bits: int, spacing_wavelengths: float = 0.5) -> np.ndarray:
    """Steer angles (deg) of the :func:`dft_codebook` beams.

    Spatial frequencies beyond the visible region are clipped to +-90 deg.
    """
    n_beams = 2 ** bits
    u = -1.0 + 2.0 * np.arange(n_beams) / n_beams
    s = np.clip(u / (2.0 * spacing_wavelengths), -1.0, 1.0)
    return np.rad2deg(np.arcsin(s))


def target_amplitude(target: Target, wavelength_m: float,
                     shadow_passes: int = 1) -> float:
    """Radar-equation path gain of one target (linear, power domain).

    ``lambda**2 * rcs / ((4 pi)**2 * d**n_p * shadow)``. ``shadow_passes=2``
    applies the shadowing loss on both legs.
    """
    if target.range_m <= 0:
        raise ValueError("target range must be > 0")
    shadow = 10.0 ** (shadow_passes * target.shadow_db / 10.0)
    return (wavelength_m ** 2 * target.rcs_m2
            / ((4 * np.pi) ** 2 * target.range_m ** target.ploss_exp * shadow))


def _echo_scale(target: Target, wavelength_m: float, alpha_mode: str) -> float:
    alpha = target_amplitude(target, wavelength_m)
    if alpha_mode == "power":
        return float(np.sqrt(alpha))
    if alpha_mode == "amplitude":
        return float(alpha)
    raise ValueError(f"alpha_mode must be 'power' or 'amplitude', got {alpha_mode!r}")


def radar_phase(target: Target, ofdm: OfdmParams, subcarrier_offset, symbol_idx):
    """Delay/Doppler phasor ``exp(j 2 pi (n T_s f_D - tau (f_c + m df)))``.

    Broadcasts over array-valued ``subcarrier_offset`` (centered ``m``) and
    ``symbol_idx`` (``n``).
    """
    m = np.asarray(subcarrier_offset, dtype=float)
    n = np.asarray(symbol_idx, dtype=float)
    fd = target.doppler_hz(ofdm.wavelength_m)
    tau = target.delay_s
    # carrier term reduced modulo one cycle to keep precision at 28 GHz
    carrier_cycles = np.mod(tau * ofdm.carrier_hz, 1.0)
    return np.exp(2j * np.pi * (n * ofdm.symbol_duration_s * fd
                                - carrier_cycles - tau * m * ofdm.scs_hz))


def radar_si_channel(targets: Sequence[Target], array: ArrayConfig, ofdm: OfdmParams,
                     subcarrier_idx: int, symbol_idx: int,
                     alpha_mode: str = "power") -> ChannelMatrix:
    """Target-echo part of the SI channel on one resource element.

    ``subcarrier_idx`` is the grid row (0..N_sc-1); it is centered
    internally so the delay ramp is symmetric around DC.
    """
    if not 0 <= subcarrier_idx < ofdm.n_subcarriers:
        raise IndexError(f"subcarrier_idx {subcarrier_idx} outside grid")
    if symbol_idx < 0:
        raise IndexError("symbol_idx must be >= 0")
    h = np.zeros((array.n_rx_antennas, array.n_tx_antennas), dtype=complex)
    m = subcarrier_idx - ofdm.n_subcarriers // 2
    for tgt in targets:
        a_r = steering_vector(tgt.angle_deg, array.n_rx_antennas, array.element_spacing)
        a_t = steering_vector(tgt.angle_deg, array.n_tx_antennas, array.element_spacing)
        coef = _echo_scale(tgt, ofdm.wavelength_m, alpha_mode) * radar_phase(
            tgt, ofdm, m, symbol_idx)
        h += coef * np.outer(a_r, a_t.conj())
    return ChannelMatrix(h, "radar")


def direct_si_channel(params: DirectSiParams, array: ArrayConfig) -> ChannelMatrix:
    """Rician direct TX-to-RX coupling ``H_bb``.

    The line-of-sight part is the broadside outer product (unit-modulus
    entries); scattering is i.i.d. CN(0, 1). The mix is scaled so the
    expected per-entry power equals the pathloss.
    """
    n_r, n_t = array.n_rx_antennas, array.n_tx_antennas
    rng = np.random.default_rng(params.seed)
    scatter = (rng.standard_normal((n_r, n_t))
               + 1j * rng.standard_normal((n_r, n_t))) / np.sqrt(2.0)
    los = np.ones((n_r, n_t), dtype=complex)
    kappa = 10.0 ** (params.rician_kappa_db / 10.0)
    gain = 10.0 ** (-params.pathloss_db / 20.0)
    w_los = np.sqrt(kappa / (1.0 + kappa))
    w_nlos = np.sqrt(1.0 / (1.0 + kappa))
    return ChannelMatrix(gain * (w_los * los + w_nlos * scatter), "direct_si")


def downlink_channel(user_dirs: Iterable, pathloss_db, array: ArrayConfig,
                     n_ue: int, seed: int | None = 0,
                     random_phase: bool = True) -> ChannelMatrix:
    """Geometric multipath DL channel ``H_DL`` of shape ``(n_ue, N_T)``.

    ``user_dirs`` holds ``(tx_angle_deg, rx_angle_deg)`` pairs, one per
    path. ``pathloss_db`` is a scalar or one value per path. Each path
    carries a unit-modulus coefficient with uniform random phase
    (``random_phase=False`` fixes it to 1).
    """
    dirs = [tuple(d) for d in user_dirs]
    if not dirs:
        raise ValueError("at least one path direction is required")
    if n_ue < 1:
        raise ValueError("n_ue must be >= 1")
    pl = np.broadcast_to(np.asarray(pathloss_db, dtype=float), (len(dirs),))
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0, 2 * np.pi, len(dirs))
    h = np.zeros((n_ue, array.n_tx_antennas), dtype=complex)
    for (tx_deg, rx_deg), loss_db, ph in zip(dirs, pl, phases):
        beta = np.exp(1j * ph) if random_phase else 1.0
        a_t = steering_vector(tx_deg, array.n_tx_antennas, array.element_spacing)
        a_u = steering_vector(rx_deg, n_ue, 0.5)
        h += np.sqrt(10.0 ** (-loss_db / 10.0)) * beta * np.outer(a_u, a_t.conj())
    return ChannelMatrix(h, "downlink")
