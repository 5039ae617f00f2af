"""Hybrid analog/digital beamforming for the partially-connected node."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from .array_channel import ArrayConfig, codebook_angles, subarray_steering

__all__ = [
    "HybridBeamformer",
    "rf_matrix",
    "rf_beams",
    "check_rf_structure",
    "assign_directions",
    "select_analog_beams",
    "beam_gain_pattern",
    "waterfill",
    "waterfilling_precoder",
    "achievable_rate",
    "transmit_power",
]

_TOL = 1e-9


@dataclass(frozen=True)
class HybridBeamformer:
    v_rf: np.ndarray
    v_bb: np.ndarray
    w_rf: np.ndarray
    w_bb: np.ndarray | None = None
    tx_dirs_deg: tuple = field(default=())
    rx_dirs_deg: tuple = field(default=())

    @property
    def n_streams(self) -> int:
        return self.v_bb.shape[1]

    def precoder(self) -> np.ndarray:
        return self.v_rf @ self.v_bb

    def power(self) -> float:
        return transmit_power(self.v_rf, self.v_bb)


def transmit_power(v_rf, v_bb) -> float:
    """``Tr(V_rf V_bb V_bb^H V_rf^H)``."""
    f = np.asarray(v_rf) @ np.asarray(v_bb)
    return float(np.real(np.vdot(f, f)))


def rf_matrix(beams: np.ndarray, array: ArrayConfig, side: str = "tx") -> np.ndarray:
    """Stack per-chain subarray beams into a block-diagonal RF matrix.

    ``beams`` has shape ``(n_chains, subarray_size)``; chain ``j`` drives
    antennas ``j*S .. (j+1)*S - 1``.
    """
    beams = np.asarray(beams, dtype=complex)
    n_chains = array.n_tx_rf if side == "tx" else array.n_rx_rf
    s = array.subarray_size
    if beams.shape != (n_chains, s):
        raise ValueError(f"expected beams of shape {(n_chains, s)}, got {beams.shape}")
    out = np.zeros((n_chains * s, n_chains), dtype=complex)
    for j in range(n_chains):
        out[j * s:(j + 1) * s, j] = beams[j]
    return out


def rf_beams(rf: np.ndarray, subarray_size: int) -> np.ndarray:
    """Inverse of :func:`rf_matrix`: the per-chain subarray beams."""
    n_chains = rf.shape[1]
    return np.stack([rf[j * subarray_size:(j + 1) * subarray_size, j]
                     for j in range(n_chains)])


def check_rf_structure(rf: np.ndarray, array: ArrayConfig, side: str = "tx") -> bool:
    """Block-diagonal with exactly ``subarray_size`` unit-modulus entries per column."""
    n_chains = array.n_tx_rf if side == "tx" else array.n_rx_rf
    s = array.subarray_size
    if rf.shape != (n_chains * s, n_chains):
        return False
    mask = np.zeros(rf.shape, dtype=bool)
    for j in range(n_chains):
        mask[j * s:(j + 1) * s, j] = True
    if np.any(np.abs(rf[~mask]) > 0):
        return False
    return bool(np.allclose(np.abs(rf[mask]), 1.0, atol=1e-12))


def _best_codeword(codebook: np.ndarray, angle_deg: float, array: ArrayConfig) -> int:
    a = subarray_steering(angle_deg, array)
    return int(np.argmax(np.abs(codebook.conj() @ a)))


def _cluster_angles(angles: Sequence[float], n_clusters: int) -> list[float]:
    """Reduce directions to ``n_clusters`` centroids in the sine domain."""
    s = np.sin(np.deg2rad(np.asarray(angles, dtype=float)))
    if len(s) <= n_clusters:
        return list(np.rad2deg(np.arcsin(s)))
    # deterministic initial centroids from sorted quantiles
    init = np.quantile(s, (np.arange(n_clusters) + 0.5) / n_clusters)
    centroids, labels = kmeans2(s[:, None], init[:, None], minit="matrix", iter=50)
    used = np.unique(labels)
    cents = np.clip(centroids[used, 0], -1.0, 1.0)
    return sorted(np.rad2deg(np.arcsin(cents)).tolist())


def assign_directions(dirs: Sequence[float], n_chains: int,
                      spare_order: Sequence[float] | None = None) -> list[float]:
    """Map look directions onto RF chains.

    Each direction gets one chain; surplus directions are clustered and
    surplus chains cycle through ``spare_order`` (default: ``dirs``).
    """
    dirs = list(dirs)
    if not dirs:
        return [0.0] * n_chains
    if len(dirs) > n_chains:
        dirs = _cluster_angles(dirs, n_chains)
    spare = list(spare_order) if spare_order else list(dirs)
    out = list(dirs)
    k = 0
    while len(out) < n_chains:
        out.append(spare[k % len(spare)])
        k += 1
    return out


def _dedupe(dirs: Sequence[float], codebook, array) -> list[float]:
    seen, out = set(), []
    for d in dirs:
        idx = _best_codeword(codebook, d, array)
        if idx not in seen:
            seen.add(idx)
            out.append(float(d))
    return out


def _codeword_leakage(h_terms, beam, block: int, size: int, side: str) -> float:
    """SI power a codeword couples through its subarray, summed over the terms."""
    sl = slice(block * size, (block + 1) * size)
    if side == "tx":
        return float(sum(np.linalg.norm(h[:, sl] @ beam) ** 2 for h in h_terms))
    return float(sum(np.linalg.norm(beam.conj() @ h[sl, :]) ** 2 for h in h_terms))


def _pick_codewords(codebook, dirs, array, side, h_si, max_loss_db):
    """Per chain, the least-leaking codeword within ``max_loss_db`` of the best gain."""
    size = array.subarray_size
    beams = []
    for j, d in enumerate(dirs):
        g = np.abs(codebook.conj() @ subarray_steering(d, array)) ** 2
        best = int(np.argmax(g))
        if h_si is None or max_loss_db <= 0:
            beams.append(codebook[best])
            continue
        cand = np.flatnonzero(g >= g[best] * 10.0 ** (-max_loss_db / 10.0))
        leak = [_codeword_leakage(h_si, codebook[c], j, size, side) for c in cand]
        beams.append(codebook[cand[int(np.argmin(leak))]])
    return np.stack(beams)


def _quietest_codewords(codebook, array, h_si):
    """Least-leaking RX codeword per chain and its steer angle."""
    angles = codebook_angles(int(round(np.log2(len(codebook)))), array.element_spacing)
    beams, dirs = [], []
    for j in range(array.n_rx_rf):
        leak = [_codeword_leakage(h_si, c, j, array.subarray_size, "rx") for c in codebook]
        b = int(np.argmin(leak))
        beams.append(codebook[b])
        dirs.append(float(angles[b]))
    return np.stack(beams), dirs


def select_analog_beams(codebook: np.ndarray, comm_dirs: Sequence[float],
                        target_dirs: Sequence[float], array: ArrayConfig,
                        spare_order: Sequence[float] | None = None,
                        h_si=None, max_loss_db: float = 0.0):
    """Pick codebook beams for the TX and RX subarrays.

    TX subarrays cover the union of communication and target directions;
    RX subarrays look only at target directions, so the communication
    directions are not amplified on receive. Without target directions
    and with ``h_si`` given, each RX chain takes its least-leaking
    codeword.

    With ``h_si`` (an ``N_R x N_T`` SI channel, or a sequence of them whose
    leaked powers add) and a positive ``max_loss_db``, each chain trades up
    to that much beam gain for the codeword leaking the least SI power
    through its subarray.

    Returns
    -------
    (v_rf, w_rf, tx_dirs, rx_dirs)
        Block-diagonal RF matrices and the look direction of each chain.
    """
    codebook = np.asarray(codebook)
    if h_si is not None:
        h_si = getattr(h_si, "entries", h_si)
        terms = [h_si] if np.ndim(h_si) == 2 else list(h_si)
        h_si = [np.asarray(getattr(h, "entries", h)) for h in terms]
    tx_dirs = _dedupe(list(comm_dirs) + list(target_dirs), codebook, array)
    rx_dirs = _dedupe(list(target_dirs), codebook, array)
    tx_assigned = assign_directions(tx_dirs, array.n_tx_rf, spare_order)
    rx_assigned = assign_directions(rx_dirs, array.n_rx_rf)
    tx_beams = _pick_codewords(codebook, tx_assigned, array, "tx", h_si, max_loss_db)
    if not rx_dirs and h_si is not None:
        # nothing to look at: each RX chain takes its least-leaking codeword
        rx_beams, rx_assigned = _quietest_codewords(codebook, array, h_si)
    else:
        rx_beams = _pick_codewords(codebook, rx_assigned, array, "rx", h_si, max_loss_db)
    return (rf_matrix(tx_beams, array, "tx"), rf_matrix(rx_beams, array, "rx"),
            tuple(tx_assigned), tuple(rx_assigned))


def beam_gain_pattern(rf: np.ndarray, array: ArrayConfig, angle_grid,
                      floor_db: float = -300.0) -> np.ndarray:
    """Summed subarray power gain ``10 log10 sum_j |b_j^H a(theta)|^2`` (dB)."""
    angles = np.asarray(angle_grid, dtype=float)
    if np.any(np.abs(angles) > 90):
        raise ValueError("angles must lie in [-90, 90]")
    beams = rf_beams(rf, array.subarray_size)
    steer = np.stack([subarray_steering(a, array) for a in angles], axis=1)
    g = np.sum(np.abs(beams.conj() @ steer) ** 2, axis=0)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(g)
    return np.maximum(out, floor_db)


def waterfill(gains, power: float) -> np.ndarray:
    """Capacity-optimal powers for parallel channels with SNR-per-watt ``gains``."""
    g = np.asarray(gains, dtype=float)
    p = np.zeros_like(g)
    if power <= 0:
        return p
    order = np.argsort(g)[::-1]
    gs = g[order]
    n_pos = int(np.sum(gs > 0))
    for k in range(n_pos, 0, -1):
        inv = 1.0 / gs[:k]
        level = (power + inv.sum()) / k
        if level - inv[-1] > 0:
            p[order[:k]] = level - inv
            break
    return p


def _inv_sqrt_psd(g: np.ndarray) -> np.ndarray:
    w, u = np.linalg.eigh(g)
    return (u / np.sqrt(w)) @ u.conj().T


def waterfilling_precoder(h_eff, power: float, noise_power: float,
                          v_rf=None, n_streams: int | None = None):
    """Eigenmode precoder with waterfilling power loading.

    Parameters
    ----------
    h_eff : array (N_ue, N_rf)
        Effective channel ``H_DL @ V_rf``.
    power : float
        Total transmit power budget (W).
    noise_power : float
        Receiver noise power (W).
    v_rf : array, optional
        Analog precoder. When given, the budget is enforced on
        ``V_rf @ V_bb``; otherwise on ``V_bb`` alone.
    n_streams : int, optional
        Number of precoder columns; defaults to ``min(N_ue, N_rf)``.

    Returns
    -------
    (v_bb, rate) : (np.ndarray, float)
        Precoder of shape ``(N_rf, n_streams)`` and rate in bps/Hz.
    """
    h = np.atleast_2d(np.asarray(h_eff, dtype=complex))
    n_ue, n_rf = h.shape
    d = min(n_ue, n_rf) if n_streams is None else int(n_streams)
    if power <= 0:
        raise ValueError("power must be > 0")
    whiten = np.eye(n_rf) if v_rf is None else _inv_sqrt_psd(
        np.asarray(v_rf).conj().T @ np.asarray(v_rf))
    hw = h @ whiten
    v_bb = np.zeros((n_rf, d), dtype=complex)
    if not np.any(hw):
        return v_bb, 0.0
    _, s, vh = np.linalg.svd(hw)
    k = min(d, s.size)
    gains = s[:k] ** 2 / noise_power
    p = waterfill(gains, power)
    u = vh.conj().T[:, :k] * np.sqrt(p)
    v_bb[:, :k] = whiten @ u
    rate = float(np.sum(np.log2(1.0 + p * gains)))
    return v_bb, rate


def achievable_rate(h_dl, beamformer_or_precoder, noise_power: float) -> float:
    """``log2 det(I + H F F^H H^H / sigma^2)`` with ``F = V_rf V_bb``."""
    if isinstance(beamformer_or_precoder, HybridBeamformer):
        f = beamformer_or_precoder.precoder()
    else:
        f = np.asarray(beamformer_or_precoder)
    h = np.asarray(h_dl.entries if hasattr(h_dl, "entries") else h_dl)
    hf = h @ f
    m = np.eye(h.shape[0]) + (hf @ hf.conj().T) / noise_power
    sign, logdet = np.linalg.slogdet(m)
    return float(logdet / np.log(2.0))
