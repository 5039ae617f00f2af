"""Independent reference computations used by the tests."""

import itertools

import numpy as np


def logdet_rate(h, f, noise):
    """log2 det(I + H F F^H H^H / noise) by eigenvalues, no slogdet."""
    hf = h @ f
    ev = np.linalg.eigvalsh(np.eye(h.shape[0]) + hf @ hf.conj().T / noise)
    return float(np.sum(np.log2(ev)))


def brute_force_rate(h, power, noise, n_grid=40):
    """Best rate over a uniform grid of power splits across the right-singular modes.

    Every split is scored with the full log-det (batched eigenvalues), not
    the per-mode closed form.
    """
    _, s, vh = np.linalg.svd(h)
    v = vh.conj().T[:, :s.size]
    k = s.size
    splits = np.array([c for c in itertools.product(range(n_grid + 1), repeat=k - 1)
                       if sum(c) <= n_grid], dtype=float).reshape(-1, k - 1)
    p = np.hstack([splits, n_grid - splits.sum(axis=1, keepdims=True)]) * (power / n_grid)
    hf = (h @ v)[None, :, :] * np.sqrt(p)[:, None, :]
    cov = np.eye(h.shape[0]) + hf @ np.conj(np.swapaxes(hf, 1, 2)) / noise
    ev = np.linalg.eigvalsh(cov)
    return float(np.max(np.sum(np.log2(ev), axis=1)))


def hann_periodic(n):
    return np.array([0.5 - 0.5 * np.cos(2 * np.pi * i / n) for i in range(n)])
