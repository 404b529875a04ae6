"""Thin wrappers around the 2D spectral transforms used everywhere else.

A module-level worker count (set from the CLI --threads flag) is threaded
through to the FFT backend; the transforms stay bit-deterministic for a
fixed plan regardless of the worker count.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as _sfft

_workers = 1


def set_fft_workers(n: int) -> None:
    global _workers
    _workers = max(1, int(n))


def fft2(a: np.ndarray) -> np.ndarray:
    return _sfft.fft2(a, workers=_workers)


def ifft2(a: np.ndarray) -> np.ndarray:
    return _sfft.ifft2(a, workers=_workers)


def momentum_grids(grid) -> tuple[np.ndarray, np.ndarray]:
    """Broadcastable angular-frequency arrays (p1 column, p2 row)."""
    p1, p2 = grid.momenta()
    return p1[:, None], p2[None, :]


def momentum_sq(grid) -> np.ndarray:
    p1, p2 = momentum_grids(grid)
    return p1**2 + p2**2
