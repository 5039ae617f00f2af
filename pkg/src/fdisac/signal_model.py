"""Per-resource-element signal synthesis at the node and the DL user.

Channels are never expanded to full ``N_R x N_T`` matrices per resource
element: each target contributes a rank-1 term, so the node RX signal is
assembled from the beam-space responses ``W_rf^H a_R`` and ``a_T^H V_rf``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .array_channel import (
    ChannelMatrix,
    direct_si_channel,
    downlink_channel,
    radar_phase,
    steering_vector,
    target_amplitude,
)
from .scenario import Scenario

__all__ = ["ChannelSet", "node_rx_signal", "node_noise", "user_rx_signal", "complex_noise"]


@dataclass(frozen=True)
class ChannelSet:
    """Channel realization of a scenario (deterministic per its seeds)."""

    scenario: Scenario

    @cached_property
    def h_bb(self) -> np.ndarray:
        return direct_si_channel(self.scenario.direct_si, self.scenario.array).entries

    @cached_property
    def h_dl(self) -> np.ndarray:
        sc = self.scenario
        return downlink_channel(sc.user_paths, sc.user_pathloss_db, sc.array, sc.n_ue,
                                seed=sc.direct_si.seed + 1).entries

    @cached_property
    def echo_scale(self) -> np.ndarray:
        """Linear amplitude applied to each target's steering outer product."""
        sc = self.scenario
        alpha = np.array([target_amplitude(t, sc.ofdm.wavelength_m) for t in sc.targets])
        return np.sqrt(alpha) if sc.alpha_mode == "power" else alpha

    def tx_steering(self) -> np.ndarray:
        """``(K, N_T)`` array of target TX steering vectors."""
        arr = self.scenario.array
        k = len(self.scenario.targets)
        if k == 0:
            return np.zeros((0, arr.n_tx_antennas), dtype=complex)
        return np.stack([steering_vector(t.angle_deg, arr.n_tx_antennas, arr.element_spacing)
                         for t in self.scenario.targets])

    def rx_steering(self) -> np.ndarray:
        arr = self.scenario.array
        k = len(self.scenario.targets)
        if k == 0:
            return np.zeros((0, arr.n_rx_antennas), dtype=complex)
        return np.stack([steering_vector(t.angle_deg, arr.n_rx_antennas, arr.element_spacing)
                         for t in self.scenario.targets])

    def echo_terms(self) -> list:
        """Per-target rank-1 echo matrices ``c_k a_R a_T^H`` without the phase."""
        return [c * np.outer(a_r, a_t.conj()) for c, a_r, a_t in
                zip(self.echo_scale, self.rx_steering(), self.tx_steering())]

    def radar_matrix(self) -> ChannelMatrix:
        """Narrowband ``H_radar`` at (m = 0, n = 0) including the carrier phase."""
        sc = self.scenario
        h = np.zeros((sc.array.n_rx_antennas, sc.array.n_tx_antennas), dtype=complex)
        for t, c, a_r, a_t in zip(sc.targets, self.echo_scale, self.rx_steering(), self.tx_steering()):
            h += c * radar_phase(t, sc.ofdm, 0, 0) * np.outer(a_r, a_t.conj())
        return ChannelMatrix(h, "radar")


def complex_noise(rng, shape, power: float) -> np.ndarray:
    return np.sqrt(power / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def node_rx_signal(channels: ChannelSet, v_rf, w_rf, s_grid, analog=None,
                   symbol_offset: int = 0, include_targets: bool = True,
                   include_direct: bool = True, target_mask=None) -> np.ndarray:
    """Noise-free RX chain outputs ``W^H (H_radar(m,n) + H_bb) V s + A s``.

    Parameters
    ----------
    s_grid : array (N_sc, N_sym, N_T^RF)
        Digital samples fed to the TX chains (``V_bb x`` per element).
    analog : AnalogCanceller, optional
        Tap canceller injected at the RX chain inputs.
    symbol_offset : int
        Absolute index of the first symbol, used for the Doppler phase.
    target_mask : sequence of bool, optional
        Restrict the echo sum to selected targets.

    Returns
    -------
    np.ndarray
        ``(N_sc, N_sym, N_R^RF)`` complex grid.
    """
    sc = channels.scenario
    s = np.asarray(s_grid)
    n_sc, n_sym, _ = s.shape
    v_rf = np.asarray(v_rf)
    w_rf = np.asarray(w_rf)
    y = np.zeros((n_sc, n_sym, w_rf.shape[1]), dtype=complex)
    if include_direct:
        c = w_rf.conj().T @ channels.h_bb @ v_rf
        if analog is not None:
            c = c + analog.effective_matrix
        y += s @ c.T
    elif analog is not None:
        y += s @ analog.effective_matrix.T
    if include_targets and sc.targets:
        tx_resp = channels.tx_steering().conj() @ v_rf        # (K, N_T^RF): a_T^H V
        rx_resp = w_rf.conj().T @ channels.rx_steering().T    # (N_R^RF, K): W^H a_R
        m = sc.ofdm.subcarrier_offsets()[:, None]
        n = (symbol_offset + np.arange(n_sym))[None, :]
        for k, tgt in enumerate(sc.targets):
            if target_mask is not None and not target_mask[k]:
                continue
            # separable phase: delay ramp over m times Doppler ramp over n
            ph = (radar_phase(tgt, sc.ofdm, m, 0) * radar_phase(tgt, sc.ofdm, 0, n)
                  * np.conj(radar_phase(tgt, sc.ofdm, 0, 0)))
            t_k = s @ tx_resp[k]
            y += (channels.echo_scale[k] * ph * t_k)[:, :, None] * rx_resp[:, k]
    return y


def node_noise(rng, shape, noise_power: float, w_rf) -> np.ndarray:
    """Per-antenna thermal noise after the analog combiner (chains are independent)."""
    col_energy = np.sum(np.abs(np.asarray(w_rf)) ** 2, axis=0)
    return complex_noise(rng, shape, 1.0) * np.sqrt(noise_power * col_energy)


def user_rx_signal(channels: ChannelSet, v_rf, s_grid) -> np.ndarray:
    """Noise-free ``H_DL V_rf s`` at the user, ``(N_sc, N_sym, N_ue)``."""
    heff = channels.h_dl @ np.asarray(v_rf)
    return np.asarray(s_grid) @ heff.T
