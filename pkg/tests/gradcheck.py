"""Central finite-difference gradient oracle used by the gradient tests.

Independent of the tape: it only calls a scalar-valued function while nudging
one array element at a time.
"""
from __future__ import annotations

from typing import Callable

import numpy as np


def numeric_grad(f: Callable[[], float], arr: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """d f / d arr by central differences, mutating arr in place and restoring it."""
    g = np.zeros_like(arr)
    flat = arr.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest elementwise difference, normalized by the gradient magnitude."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)
