"""Reduced-complexity analog tap canceller and digital SI canceller.

Taps sit between TX RF-chain outputs and RX RF-chain inputs, so the
analog canceller is an ``N_R^RF x N_T^RF`` matrix with at most one
frequency-flat complex gain per (TX chain, RX chain) pair. The digital
canceller maps the known per-TX-chain digital samples onto the RX chain
outputs and is subtracted before any radar processing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .jsonio import write_json
from .errors import InfeasibleError

__all__ = [
    "POWER_FLOOR_DBM",
    "SaturationSpec",
    "AnalogCanceller",
    "DigitalCanceller",
    "coupled_matrix",
    "design_analog_canceller",
    "residual_rf_power",
    "design_digital_canceller",
    "apply_cancellation",
    "watts_to_dbm",
    "dbm_to_watts",
    "save_cancellers",
    "load_cancellers",
]

POWER_FLOOR_DBM = -300.0


def watts_to_dbm(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(p) + 30.0
    return np.maximum(out, POWER_FLOOR_DBM)


def dbm_to_watts(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


@dataclass(frozen=True)
class SaturationSpec:
    """Per-RX-chain ceiling on residual SI power before the ADCs."""

    lambda_sic_dbm: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.lambda_sic_dbm))
        if not all(np.isfinite(vals)):
            raise ValueError("lambda_sic_dbm entries must be finite")
        object.__setattr__(self, "lambda_sic_dbm", vals)

    @classmethod
    def uniform(cls, n_rx_rf: int, level_dbm: float = -30.0) -> "SaturationSpec":
        return cls(tuple([float(level_dbm)] * n_rx_rf))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.lambda_sic_dbm)


@dataclass(frozen=True)
class AnalogCanceller:
    n_rx_rf: int
    n_tx_rf: int
    taps: tuple = ()
    gain_ceiling: float = np.inf

    def __post_init__(self):
        taps = tuple((int(t), int(r), complex(g)) for t, r, g in self.taps)
        pairs = [(t, r) for t, r, _ in taps]
        if len(set(pairs)) != len(pairs):
            raise ValueError("at most one tap per (tx, rx) chain pair")
        if len(taps) > self.n_rx_rf * self.n_tx_rf:
            raise ValueError("more taps than chain pairs")
        for t, r, g in taps:
            if not (0 <= t < self.n_tx_rf and 0 <= r < self.n_rx_rf):
                raise ValueError(f"tap ({t}, {r}) outside the chain grid")
            if abs(g) > self.gain_ceiling * (1 + 1e-12):
                raise ValueError(f"tap gain {abs(g):.3g} above ceiling {self.gain_ceiling:.3g}")
        object.__setattr__(self, "taps", taps)

    @property
    def n_taps(self) -> int:
        return len(self.taps)

    @property
    def effective_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_rx_rf, self.n_tx_rf), dtype=complex)
        for t, r, g in self.taps:
            a[r, t] = g
        return a

    def to_dict(self) -> dict:
        return {
            "n_rx_rf": self.n_rx_rf,
            "n_tx_rf": self.n_tx_rf,
            "gain_ceiling": None if np.isinf(self.gain_ceiling) else self.gain_ceiling,
            "taps": [{"tx_rf": t, "rx_rf": r, "re": g.real, "im": g.imag}
                     for t, r, g in self.taps],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalogCanceller":
        ceiling = d.get("gain_ceiling")
        return cls(d["n_rx_rf"], d["n_tx_rf"],
                   tuple((t["tx_rf"], t["rx_rf"], complex(t["re"], t["im"])) for t in d["taps"]),
                   np.inf if ceiling is None else float(ceiling))


@dataclass(frozen=True)
class DigitalCanceller:
    d_matrix: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        d = np.atleast_2d(np.asarray(self.d_matrix, dtype=complex))
        if not np.all(np.isfinite(d)):
            raise ValueError("digital canceller entries must be finite")
        object.__setattr__(self, "d_matrix", d)

    @classmethod
    def zeros(cls, n_rx_rf: int, n_tx_rf: int) -> "DigitalCanceller":
        return cls(np.zeros((n_rx_rf, n_tx_rf), dtype=complex))

    def to_dict(self) -> dict:
        return {"re": self.d_matrix.real.tolist(), "im": self.d_matrix.imag.tolist(),
                "ridge": self.ridge}

    @classmethod
    def from_dict(cls, d: dict) -> "DigitalCanceller":
        return cls(np.asarray(d["re"]) + 1j * np.asarray(d["im"]), d.get("ridge", 0.0))


def coupled_matrix(h, w_rf, v_rf) -> np.ndarray:
    """``W_rf^H H V_rf``: SI coupling seen between RF chains."""
    h = np.asarray(getattr(h, "entries", h))
    return np.asarray(w_rf).conj().T @ h @ np.asarray(v_rf)


def design_analog_canceller(h_bb_est, v_rf, w_rf, n_taps: int,
                            sat_spec: SaturationSpec | None = None,
                            v_bb=None, gain_ceiling: float = np.inf) -> AnalogCanceller:
    """Greedy tap placement on the largest coupled-SI entries.

    Each tap gets gain ``-M[r, t]`` (clipped to ``gain_ceiling``), which
    zeroes that entry of ``M = W_rf^H H_bb V_rf``. When both ``sat_spec``
    and ``v_bb`` are given, the per-chain residual is checked and an
    :class:`InfeasibleError` carrying the worst shortfall (dB) is raised
    if any chain exceeds its ceiling.
    """
    if n_taps < 0:
        raise ValueError("n_taps must be >= 0")
    m = coupled_matrix(h_bb_est, w_rf, v_rf)
    n_rx, n_tx = m.shape
    n_taps = min(int(n_taps), n_rx * n_tx)
    # stable sort keeps placement deterministic under ties
    order = np.argsort(-np.abs(m).ravel(), kind="stable")[:n_taps]
    taps = []
    for flat in order:
        r, t = divmod(int(flat), n_tx)
        g = -m[r, t]
        if abs(g) > gain_ceiling:
            g = g / abs(g) * gain_ceiling
        taps.append((t, r, g))
    canc = AnalogCanceller(n_rx, n_tx, tuple(taps), gain_ceiling)
    if sat_spec is not None and v_bb is not None:
        res = residual_rf_power(h_bb_est, canc, v_rf, v_bb, w_rf)
        excess = res - sat_spec.as_array()
        if np.any(excess > 0):
            worst = int(np.argmax(excess))
            raise InfeasibleError(
                "C3", f"residual SI on RX chain {worst} is {res[worst]:.2f} dBm, "
                      f"ceiling {sat_spec.as_array()[worst]:.2f} dBm with {n_taps} taps",
                shortfall_db=float(excess[worst]),
                detail={"residual_dbm": res.tolist(), "n_taps": n_taps})
    return canc


def residual_rf_power(h_si, canceller: AnalogCanceller | None, v_rf, v_bb, w_rf,
                      per_chain: bool = True, mode: str = "average",
                      peak_amplitude: float = 1.0):
    """Residual SI power at the RX chain inputs (dBm), unit-power streams.

    ``mode="average"`` returns ``||row_i((W^H H V + A) V_bb)||^2``;
    ``mode="peak"`` bounds the instantaneous power by coherent addition of
    all streams at ``peak_amplitude`` (1 for QPSK). Values below the floor
    report as :data:`POWER_FLOOR_DBM`.
    """
    c = coupled_matrix(h_si, w_rf, v_rf)
    if canceller is not None:
        c = c + canceller.effective_matrix
    y = c @ np.asarray(v_bb)
    if mode == "average":
        p = np.sum(np.abs(y) ** 2, axis=1)
    elif mode == "peak":
        p = (peak_amplitude * np.sum(np.abs(y), axis=1)) ** 2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if not per_chain:
        p = np.sum(p)
    return watts_to_dbm(p)


def _flatten(x, n_last: int | None = None) -> np.ndarray:
    a = np.asarray(getattr(x, "entries", x))
    return a.reshape(-1, a.shape[-1])


def design_digital_canceller(residual_est, known_grid, ridge: float = 1e-10) -> DigitalCanceller:
    """Least-squares fit of RX-chain residual onto known TX-chain samples.

    Parameters
    ----------
    residual_est : array (..., N_R^RF)
        Calibration-frame observation at the RX chain outputs.
    known_grid : array (..., N_T^RF)
        Digital samples fed to the TX chains on the same resource elements.
    ridge : float
        Tikhonov weight relative to the mean sample energy per TX chain;
        keeps rank-deficient calibrations well posed.
    """
    y = _flatten(residual_est)
    s = _flatten(known_grid)
    if y.shape[0] != s.shape[0]:
        raise ValueError("residual and known grids cover different resource elements")
    gram = s.conj().T @ s
    eps = ridge * max(np.real(np.trace(gram)) / gram.shape[0], np.finfo(float).tiny)
    dt = np.linalg.solve(gram + eps * np.eye(gram.shape[0]), s.conj().T @ y)
    return DigitalCanceller(dt.T, ridge)


def apply_cancellation(rx_grid, canceller: DigitalCanceller, known_grid) -> np.ndarray:
    """``rx - D @ s`` on every resource element."""
    rx = np.asarray(getattr(rx_grid, "entries", rx_grid))
    s = np.asarray(getattr(known_grid, "entries", known_grid))
    d = canceller.d_matrix
    if rx.shape[:-1] != s.shape[:-1] or rx.shape[-1] != d.shape[0] or s.shape[-1] != d.shape[1]:
        raise ValueError(f"dimension mismatch: rx {rx.shape}, known {s.shape}, D {d.shape}")
    return rx - s @ d.T


def save_cancellers(path, analog: AnalogCanceller, digital: DigitalCanceller | None = None):
    doc = {"analog": analog.to_dict(),
           "digital": None if digital is None else digital.to_dict()}
    write_json(path, doc)


def load_cancellers(path):
    doc = json.loads(Path(path).read_text())
    analog = AnalogCanceller.from_dict(doc["analog"])
    digital = None if doc.get("digital") is None else DigitalCanceller.from_dict(doc["digital"])
    return analog, digital
