"""Pure-numpy fallback for the measurement-grid kernel.

Same contract as the compiled module: given measurement directions, Bloch
vectors, and ensemble weights, fill `out` with the mutual information of the
projective measurement along each direction.
"""

from __future__ import annotations

import numpy as np


def _h2(p: np.ndarray) -> np.ndarray:
    # Binary entropy, elementwise, with 0 log 0 = 0.
    p = np.clip(p, 0.0, 1.0)
    out = np.zeros_like(p)
    inner = (p > 0.0) & (p < 1.0)
    q = p[inner]
    out[inner] = -q * np.log2(q) - (1.0 - q) * np.log2(1.0 - q)
    return out


def grid_mutual_info(
    dirs: np.ndarray,
    bloch: np.ndarray,
    probs: np.ndarray,
    out: np.ndarray,
) -> np.ndarray:
    """Fill out[j] with the measured mutual information along dirs[j]."""
    if dirs.shape[1] != 3 or bloch.shape[1] != 3:
        raise ValueError("directions and Bloch vectors must have 3 components")
    if probs.shape[0] != bloch.shape[0] or out.shape[0] != dirs.shape[0]:
        raise ValueError("array lengths do not match")
    dots = np.clip(dirs @ bloch.T, -1.0, 1.0)  # (n_dirs, n_states)
    p_plus = 0.5 * (1.0 + dots)
    pbar = p_plus @ probs
    cond = _h2(p_plus) @ probs
    np.copyto(out, _h2(pbar) - cond)
    return out
