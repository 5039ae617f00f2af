"""Monostatic sensing from the cleaned node RX grid.

DoA comes from a coarse codebook sweep, range and velocity from a 2D
transform of the modulation-removed grid (inverse DFT over subcarriers,
DFT over symbols).
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy.signal.windows import hann

from .jsonio import write_json
from .array_channel import SPEED_OF_LIGHT, OfdmParams, codebook_angles, dft_codebook, subarray_steering
from .cancellation import POWER_FLOOR_DBM
from .waveform import element_division

__all__ = [
    "RangeDopplerMap",
    "TargetEstimate",
    "DoaResult",
    "range_resolution",
    "velocity_resolution",
    "max_unambiguous_range",
    "max_unambiguous_velocity",
    "regularized_division",
    "range_doppler_map",
    "doa_spectrum",
    "sweep_energies",
    "coarse_doa",
    "extract_targets",
    "merge_detections",
    "suppress_sidelobes",
    "sensing_sinr",
    "hann_leakage",
    "cell_offsets",
    "save_estimates_json",
    "save_map_csv",
]


MAX_DYNAMIC_RANGE_DB = 120.0


def range_resolution(ofdm: OfdmParams) -> float:
    return SPEED_OF_LIGHT / (2.0 * ofdm.n_subcarriers * ofdm.scs_hz)


def velocity_resolution(ofdm: OfdmParams, n_cpi: int) -> float:
    return ofdm.wavelength_m / (2.0 * n_cpi * ofdm.symbol_duration_s)


def max_unambiguous_range(ofdm: OfdmParams) -> float:
    return SPEED_OF_LIGHT / (2.0 * ofdm.scs_hz)


def max_unambiguous_velocity(ofdm: OfdmParams) -> float:
    return ofdm.wavelength_m / (4.0 * ofdm.symbol_duration_s)


@dataclass(frozen=True)
class RangeDopplerMap:
    """Range-Doppler power map, rows = range bins, columns = Doppler bins.

    Doppler bins are stored in FFT order; :attr:`doppler_bins` gives their
    signed index. With oversampling, one bin spans ``1/oversample`` of a
    resolution cell.
    """

    power: np.ndarray
    range_resolution_m: float
    velocity_resolution_mps: float
    range_oversample: int = 1
    doppler_oversample: int = 1

    @property
    def shape(self):
        return self.power.shape

    @property
    def power_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.maximum(10.0 * np.log10(self.power), POWER_FLOOR_DBM)

    @property
    def range_bin_m(self) -> float:
        return self.range_resolution_m / self.range_oversample

    @property
    def velocity_bin_mps(self) -> float:
        return self.velocity_resolution_mps / self.doppler_oversample

    @property
    def doppler_bins(self) -> np.ndarray:
        n = self.power.shape[1]
        return np.round(np.fft.fftfreq(n) * n).astype(int)

    @property
    def range_axis(self) -> np.ndarray:
        return np.arange(self.power.shape[0]) * self.range_bin_m

    @property
    def velocity_axis(self) -> np.ndarray:
        return self.doppler_bins * self.velocity_bin_mps

    def noise_floor(self) -> float:
        return float(np.median(self.power))


@dataclass(frozen=True)
class TargetEstimate:
    angle_deg: float
    range_m: float
    velocity_mps: float
    peak_power_db: float
    range_bin: float = 0.0
    doppler_bin: float = 0.0
    rx_chain: int = -1


@dataclass(frozen=True)
class DoaResult:
    spectrum_db: np.ndarray
    peaks_deg: tuple


def regularized_division(rx, tx, reg: float = 0.1) -> np.ndarray:
    """Reciprocal filter ``rx tx* / (|tx|^2 + reg E|tx|^2)``.

    Plain division is only safe for constant-modulus references; mixed
    streams reach arbitrarily small amplitudes, so the denominator is
    floored relative to the mean reference power.
    """
    rx = np.asarray(rx)
    tx = np.asarray(tx)
    if rx.shape != tx.shape:
        raise ValueError(f"dimension mismatch: rx {rx.shape} vs tx {tx.shape}")
    p = np.abs(tx) ** 2
    return rx * tx.conj() / (p + reg * p.mean())


def range_doppler_map(cleaned_grid, tx_grid, ofdm: OfdmParams, window: bool = True,
                      reference: str = "division", range_oversample: int = 1,
                      doppler_oversample: int = 1, reg: float = 0.1,
                      max_range_m: float | None = None) -> RangeDopplerMap:
    """Modulation removal followed by the 2D range/Doppler transform.

    Both inputs are ``(N_sc, N_cpi)`` grids for one RX chain; subcarriers
    run from the most negative to the most positive offset. Transforms are
    orthonormal, so without windowing and oversampling the map energy
    equals the energy of the divided grid. ``max_range_m`` keeps only the
    range bins up to that range (plus one guard bin) before the Doppler
    transform.
    """
    rx = np.asarray(getattr(cleaned_grid, "entries", cleaned_grid))
    tx = np.asarray(getattr(tx_grid, "entries", tx_grid))
    if rx.ndim == 3 and rx.shape[2] == 1:
        rx = rx[:, :, 0]
    if tx.ndim == 3 and tx.shape[2] == 1:
        tx = tx[:, :, 0]
    if rx.shape != tx.shape or rx.ndim != 2:
        raise ValueError(f"dimension mismatch: rx {rx.shape} vs tx {tx.shape}")
    n_sc, n_sym = rx.shape
    if reference == "division":
        z = element_division(rx, tx).entries[:, :, 0]
    elif reference == "regularized":
        z = regularized_division(rx, tx, reg)
    else:
        raise ValueError(f"unknown reference mode {reference!r}")
    if window:
        z = z * np.outer(hann(n_sc, sym=False), hann(n_sym, sym=False))
    n_r = n_sc * int(range_oversample)
    n_d = n_sym * int(doppler_oversample)
    # the delay ramp exp(-j 2 pi tau m df) is undone by the inverse DFT over m
    # only the windowed product is a private copy; grid entries are read-only
    r = sp_fft.ifft(z, n=n_r, axis=0, norm="ortho", overwrite_x=window)
    if max_range_m is not None:
        keep = int(np.ceil(max_range_m / (range_resolution(ofdm) / range_oversample))) + 2
        r = r[:min(keep, n_r)]
    rd = sp_fft.fft(r, n=n_d, axis=1, norm="ortho", overwrite_x=True)
    return RangeDopplerMap(np.abs(rd) ** 2, range_resolution(ofdm),
                           velocity_resolution(ofdm, n_sym), int(range_oversample),
                           int(doppler_oversample))


def _parabolic_offset(left: float, mid: float, right: float) -> float:
    den = left - 2.0 * mid + right
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / den, -0.5, 0.5))


def doa_spectrum(sweep_energies, codebook_angles_deg, threshold_db: float = 10.0,
                 noise_level: float | None = None, dynamic_range_db: float = 20.0,
                 sidelobe_db: float = 10.0, sidelobe_span: int = 4) -> DoaResult:
    """Peak-pick a codebook sweep and refine each peak by 3-point interpolation.

    Peaks must be local maxima (the spatial-frequency axis is circular),
    exceed ``threshold_db`` above a noise estimate (``noise_level`` if
    given, else the spectrum median) and lie within ``dynamic_range_db`` of
    the strongest beam. A peak within ``sidelobe_span`` beams (circularly)
    of a peak more than ``sidelobe_db`` stronger is taken as its sidelobe
    and dropped; for a DFT beam the first sidelobe sits about 13 dB down.
    Interpolation happens on dB values in the sine domain. Peaks are
    returned strongest first.
    """
    e = np.asarray(sweep_energies, dtype=float)
    ang = np.asarray(codebook_angles_deg, dtype=float)
    if e.shape != ang.shape:
        raise ValueError("one energy value per codebook beam is required")
    with np.errstate(divide="ignore"):
        spec = np.maximum(10.0 * np.log10(e), POWER_FLOOR_DBM)
    floor = np.median(e) if noise_level is None else noise_level
    if floor <= 0:
        floor = np.max(e) * 1e-30 if np.max(e) > 0 else 1.0
    thresh = max(10.0 * np.log10(floor) + threshold_db, spec.max() - dynamic_range_db)
    n = e.size
    u = np.sin(np.deg2rad(ang))
    du = 2.0 / n
    cand = []
    for b in range(n):
        left, right = spec[(b - 1) % n], spec[(b + 1) % n]
        if spec[b] <= thresh or spec[b] <= left or spec[b] < right:
            continue  # a plateau keeps its first sample only
        cand.append(b)
    cand.sort(key=lambda b: -spec[b])
    peaks = []
    for b in cand:
        gaps = [min(abs(b - k), n - abs(b - k)) for k in peaks]
        if any(g <= sidelobe_span and spec[k] - spec[b] > sidelobe_db
               for g, k in zip(gaps, peaks)):
            continue
        peaks.append(b)
    angles = []
    for b in peaks:
        delta = _parabolic_offset(spec[(b - 1) % n], spec[b], spec[(b + 1) % n])
        uu = (u[b] + delta * du + 1.0) % 2.0 - 1.0
        angles.append(float(np.rad2deg(np.arcsin(np.clip(uu, -1.0, 1.0)))))
    return DoaResult(spec, tuple(angles))


def sweep_energies(channels, bits: int, power_w: float, noise_power: float,
                   n_integration: int, rng=None) -> np.ndarray:
    """Per-beam echo energy of each target cell during a codebook sweep.

    One subarray transmits and receives on each codeword in turn. Targets
    are resolved in range-Doppler during the dwell, so energies are
    returned per target, shape ``(K, 2**bits)``, already integrated over
    ``n_integration`` resource elements and with noise added.
    """
    sc = channels.scenario
    arr = sc.array
    cb = dft_codebook(arr.subarray_size, bits)
    k = len(sc.targets)
    out = np.zeros((k, cb.shape[0]))
    rng = np.random.default_rng(rng)
    noise_cell = noise_power * arr.subarray_size * n_integration
    for i, (tgt, c) in enumerate(zip(sc.targets, channels.echo_scale)):
        g = np.abs(cb.conj() @ subarray_steering(tgt.angle_deg, arr)) ** 2
        amp = np.sqrt(power_w * n_integration ** 2 / arr.subarray_size) * c * g
        noise = np.sqrt(noise_cell / 2) * (rng.standard_normal(cb.shape[0])
                                           + 1j * rng.standard_normal(cb.shape[0]))
        out[i] = np.abs(amp + noise) ** 2
    return out


def coarse_doa(channels, bits: int, power_w: float, noise_power: float,
               n_integration: int, threshold_db: float = 10.0, rng=None) -> list[float]:
    """DoA priors from a preliminary sweep frame (one list of angles overall)."""
    sc = channels.scenario
    if not sc.targets:
        return []
    e = sweep_energies(channels, bits, power_w, noise_power, n_integration, rng)
    ang = codebook_angles(bits, sc.array.element_spacing)
    noise_cell = noise_power * sc.array.subarray_size * n_integration
    found = []
    for row in e:
        res = doa_spectrum(row, ang, threshold_db, noise_level=noise_cell)
        if res.peaks_deg:
            found.append(res.peaks_deg[0])
    return sorted(found)


def extract_targets(rd_map: RangeDopplerMap, doa_deg: float | Sequence[float],
                    threshold_db: float = 13.0, max_range_m: float | None = None,
                    rx_chain: int = -1) -> list[TargetEstimate]:
    """Local maxima above ``median + threshold_db``, refined to sub-bin precision.

    The median is floored at :data:`MAX_DYNAMIC_RANGE_DB` below the map peak.

    Each detection is refined by 3-point parabolic interpolation of the dB
    map along range and along Doppler. ``doa_deg`` is the look direction of
    the beam that produced the map and becomes the detection's angle.
    """
    p = rd_map.power
    peak = float(np.max(p))
    # a noiseless map has FFT round-off for a median; cap the dynamic range
    floor = max(rd_map.noise_floor(), peak * 10 ** (-MAX_DYNAMIC_RANGE_DB / 10))
    if floor <= 0:
        floor = 1.0
    n_r, n_d = p.shape
    r, d = np.nonzero(p > floor * 10 ** (threshold_db / 10))
    # 3x3 local maxima among the threshold crossings: range clamps, Doppler wraps
    rows = np.clip(r[:, None] + np.array([-1, 0, 1]), 0, n_r - 1)
    cols = (d[:, None] + np.array([-1, 0, 1])) % n_d
    hood = p[rows[:, :, None], cols[:, None, :]]
    keep = np.all(hood <= p[r, d][:, None, None], axis=(1, 2))
    r, d, hood = r[keep], d[keep], hood[keep]
    with np.errstate(divide="ignore"):
        hood_db = np.maximum(10.0 * np.log10(hood), POWER_FLOOR_DBM)
    angle = float(np.atleast_1d(doa_deg)[0]) if np.size(doa_deg) else float("nan")
    d_bins = rd_map.doppler_bins
    out = []
    for i in range(r.size):
        h = hood_db[i]
        dr = _parabolic_offset(h[0, 1], h[1, 1], h[2, 1]) if 0 < r[i] < n_r - 1 else 0.0
        dd = _parabolic_offset(h[1, 0], h[1, 1], h[1, 2])
        rb = r[i] + dr
        signed_d = d_bins[d[i]] + dd
        rng_m = rb * rd_map.range_bin_m
        if max_range_m is not None and rng_m > max_range_m:
            continue
        out.append(TargetEstimate(angle, float(rng_m), float(signed_d * rd_map.velocity_bin_mps),
                                  float(h[1, 1]), float(rb), float(signed_d), rx_chain))
    out.sort(key=lambda t: -t.peak_power_db)
    return out


def suppress_sidelobes(estimates: Sequence[TargetEstimate], range_res_m: float,
                       velocity_res_mps: float, sidelobe_db: float = 30.0,
                       span_cells: float = 8.0, zero_guard: bool = True) -> list[TargetEstimate]:
    """Drop detections explained by a stronger one or by the direct-path leak.

    A detection that lies on the same Doppler row (within one velocity
    cell) or the same range column (within one range cell) as a stronger
    detection, at most ``span_cells`` away along the other axis and more
    than ``sidelobe_db`` below it, is taken to be a window sidelobe. With
    ``zero_guard`` the zero-range, zero-Doppler cell (where any residual
    direct SI lands) is discarded.
    """
    kept: list[TargetEstimate] = []
    for est in sorted(estimates, key=lambda t: -t.peak_power_db):
        if zero_guard and abs(est.range_m) < 0.5 * range_res_m \
                and abs(est.velocity_mps) < velocity_res_mps:
            continue
        shadowed = False
        for k in kept:
            if est.peak_power_db > k.peak_power_db - sidelobe_db:
                continue
            dr = abs(est.range_m - k.range_m) / range_res_m
            dv = abs(est.velocity_mps - k.velocity_mps) / velocity_res_mps
            if (dv <= 1.0 and dr <= span_cells) or (dr <= 1.0 and dv <= span_cells):
                shadowed = True
                break
        if not shadowed:
            kept.append(est)
    return kept


def merge_detections(estimates: Sequence[TargetEstimate], range_tol_m: float,
                     velocity_tol_mps: float) -> list[TargetEstimate]:
    """Collapse detections of the same scatterer seen by several beams.

    Detections within the tolerances keep the strongest instance, whose
    beam is taken as the one containing the target.
    """
    kept: list[TargetEstimate] = []
    for est in sorted(estimates, key=lambda t: -t.peak_power_db):
        if any(abs(est.range_m - k.range_m) <= range_tol_m
               and abs(est.velocity_mps - k.velocity_mps) <= velocity_tol_mps for k in kept):
            continue
        kept.append(est)
    return kept


def hann_leakage(delta_bins, n: int) -> np.ndarray:
    """Power response of a length-``n`` periodic Hann window at ``delta_bins``.

    Normalized to 1 at zero offset; this is how much of a response
    ``delta_bins`` away survives into a cell after windowed DFT processing.
    """
    x = np.asarray(delta_bins, dtype=float)

    def dirichlet(u):
        # sum_n exp(j 2 pi u n / N), phase referenced to the window centre
        num = np.sin(np.pi * u)
        den = n * np.sin(np.pi * u / n)
        near = np.abs(den) < 1e-12
        val = np.where(near, np.cos(np.pi * u * (n - 1) / n) * np.sign(np.cos(np.pi * u / n)),
                       num / np.where(near, 1.0, den))
        return val * np.exp(1j * np.pi * u * (n - 1) / n)

    resp = 0.5 * dirichlet(x) - 0.25 * dirichlet(x + 1) - 0.25 * dirichlet(x - 1)
    return np.abs(resp / 0.5) ** 2


def cell_offsets(targets, ofdm: OfdmParams, n_cpi: int):
    """Pairwise (range, Doppler) separations in bins, ``[j, k]`` = j relative to k."""
    tau = np.array([t.delay_s for t in targets])
    fd = np.array([t.doppler_hz(ofdm.wavelength_m) for t in targets])
    d_r = (tau[:, None] - tau[None, :]) * ofdm.scs_hz * ofdm.n_subcarriers
    d_d = (fd[:, None] - fd[None, :]) * ofdm.symbol_duration_s * n_cpi
    return d_r, d_d


def sensing_sinr(channels, beamformer, analog=None, digital=None,
                 noise_power: float | None = None, floor_db: float = POWER_FLOOR_DBM,
                 n_cpi: int | None = None):
    """Per-target SINR (dB) on the RX chain that serves each target best.

    The signal is the per-resource-element echo power of target ``k`` on
    a chain. Interference is thermal noise plus the direct-SI residual
    after the analog taps and the digital canceller, plus the echoes of
    the other targets on the same chain weighted by how much of each
    leaks into target ``k``'s range-Doppler cell through the Hann-windowed
    transforms over ``n_cpi`` symbols (default: the scenario CPI).

    Returns
    -------
    (sinr_db, chain) : (np.ndarray, np.ndarray)
    """
    sc = channels.scenario
    if noise_power is None:
        noise_power = sc.noise_node_w
    if n_cpi is None:
        n_cpi = sc.n_cpi_symbols
    k = len(sc.targets)
    if k == 0:
        return np.zeros(0), np.zeros(0, dtype=int)
    v_rf, v_bb, w_rf = beamformer.v_rf, beamformer.v_bb, beamformer.w_rf
    tx_pow = np.sum(np.abs(channels.tx_steering().conj() @ v_rf @ v_bb) ** 2, axis=1)  # (K,)
    rx_gain = np.abs(w_rf.conj().T @ channels.rx_steering().T) ** 2                # (R, K)
    echo = rx_gain * (np.abs(channels.echo_scale) ** 2 * tx_pow)[None, :]          # (R, K)
    c = w_rf.conj().T @ channels.h_bb @ v_rf
    if analog is not None:
        c = c + analog.effective_matrix
    if digital is not None:
        c = c - digital.d_matrix
    si = np.sum(np.abs(c @ v_bb) ** 2, axis=1)                                      # (R,)
    noise = noise_power * np.sum(np.abs(w_rf) ** 2, axis=0)                        # (R,)
    d_r, d_d = cell_offsets(sc.targets, sc.ofdm, n_cpi)
    leak = hann_leakage(d_r, sc.ofdm.n_subcarriers) * hann_leakage(d_d, n_cpi)    # (K, K)
    np.fill_diagonal(leak, 0.0)
    interf = noise[:, None] + si[:, None] + echo @ leak                            # (R, K)
    with np.errstate(divide="ignore"):
        per_chain = 10.0 * np.log10(echo / interf)
    chain = np.argmax(per_chain, axis=0)
    sinr = per_chain[chain, np.arange(k)]
    sinr = np.where(np.isfinite(sinr), sinr, floor_db)
    return np.maximum(sinr, floor_db), chain


def save_estimates_json(path, estimates: Sequence[TargetEstimate], extra: dict | None = None):
    doc = {"estimates": [asdict(e) for e in estimates]}
    if extra:
        doc.update(extra)
    write_json(path, doc)


def save_map_csv(prefix, rd_map: RangeDopplerMap):
    """Write ``<prefix>_power_db.csv`` plus range and velocity axis files."""
    prefix = Path(prefix)
    np.savetxt(f"{prefix}_power_db.csv", rd_map.power_db, delimiter=",", fmt="%.6f")
    for name, axis in (("range_m", rd_map.range_axis), ("velocity_mps", rd_map.velocity_axis)):
        with open(f"{prefix}_{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", name])
            for i, v in enumerate(axis):
                w.writerow([i, f"{v:.6f}"])
