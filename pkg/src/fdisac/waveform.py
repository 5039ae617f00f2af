"""Frequency-domain OFDM resource grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .array_channel import OfdmParams

__all__ = [
    "ResourceGrid",
    "QAM_ORDERS",
    "qam_alphabet",
    "random_qam_grid",
    "ofdm_modulate",
    "papr_db",
    "element_division",
]

QAM_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class ResourceGrid:
    """Complex symbols indexed ``(subcarrier, symbol, stream)``."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries)
        if e.ndim == 2:
            e = e[:, :, None]
        if e.ndim != 3:
            raise ValueError("grid must be (subcarriers, symbols[, streams])")
        e = np.array(e, dtype=complex)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def shape(self):
        return self.entries.shape

    @property
    def n_streams(self) -> int:
        return self.entries.shape[2]

    def mean_power(self) -> float:
        return float(np.mean(np.abs(self.entries) ** 2))


def qam_alphabet(order: int) -> np.ndarray:
    """Square Gray-free QAM constellation normalized to unit average power."""
    if order not in QAM_ORDERS:
        raise ValueError(f"unsupported QAM order {order}; choose from {QAM_ORDERS}")
    side = int(np.sqrt(order))
    levels = np.arange(-side + 1, side, 2, dtype=float)
    points = (levels[:, None] + 1j * levels[None, :]).ravel()
    return points / np.sqrt(np.mean(np.abs(points) ** 2))


def random_qam_grid(ofdm: OfdmParams, n_streams: int, qam_order: int = 4,
                    seed=None, n_symbols: int | None = None) -> ResourceGrid:
    """Uniform random QAM symbols on every active resource element.

    ``n_symbols`` overrides the numerology's symbol count, e.g. for a
    coherent processing interval spanning several slots.
    """
    if n_streams < 1:
        raise ValueError("n_streams must be >= 1")
    alphabet = qam_alphabet(qam_order)
    n_sym = ofdm.n_symbols if n_symbols is None else int(n_symbols)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, qam_order, size=(ofdm.n_subcarriers, n_sym, n_streams))
    return ResourceGrid(alphabet[idx])


def ofdm_modulate(freq_symbols: np.ndarray, fft_size: int | None = None) -> np.ndarray:
    """IFFT of centered active subcarriers into one time-domain symbol (no CP).

    ``freq_symbols`` is ordered from the most negative subcarrier to the
    most positive. With ``fft_size`` larger than the number of active
    subcarriers the symbol is oversampled, which matters for PAPR.
    """
    x = np.asarray(freq_symbols, dtype=complex)
    n = x.shape[0]
    size = fft_size or int(2 ** np.ceil(np.log2(4 * n)))
    if size < n:
        raise ValueError("fft_size smaller than number of active subcarriers")
    buf = np.zeros((size,) + x.shape[1:], dtype=complex)
    offsets = np.arange(n) - n // 2
    buf[offsets % size] = x
    return np.fft.ifft(buf, axis=0) * np.sqrt(size)


def papr_db(time_signal) -> float:
    """Peak-to-average power ratio of a complex signal, in dB."""
    s = np.asarray(time_signal)
    if s.size == 0:
        raise ValueError("empty signal")
    p = np.abs(s) ** 2
    mean = p.mean()
    if mean == 0:
        raise ValueError("PAPR undefined for an all-zero signal")
    return float(10.0 * np.log10(p.max() / mean))


def element_division(rx_grid, tx_grid) -> ResourceGrid:
    """Entry-wise ``rx / tx`` reciprocal filter removing the data modulation."""
    rx = rx_grid.entries if isinstance(rx_grid, ResourceGrid) else np.asarray(rx_grid)
    tx = tx_grid.entries if isinstance(tx_grid, ResourceGrid) else np.asarray(tx_grid)
    if rx.shape != tx.shape:
        raise ValueError(f"dimension mismatch: rx {rx.shape} vs tx {tx.shape}")
    if np.any(tx == 0):
        raise ValueError("transmit grid contains zeros")
    return ResourceGrid(rx / tx)
