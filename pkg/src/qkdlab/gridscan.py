"""Deterministic search over qubit projective measurements.

The search space is a fixed direction grid on the Bloch sphere: the six
coordinate axes first (so orthogonal-state optima are hit exactly), then a
Fibonacci spiral, then a few rounds of local golden-angle refinement around
the running best.  Every step is pure arithmetic with a fixed tie-break
(lowest index wins), so results are reproducible on one backend.

The per-direction evaluation is the hot loop.  At import time we prefer the
compiled kernel and fall back to the numpy implementation; setting
QKDLAB_FORCE_NUMPY=1 before first import forces the fallback.  Both
backends evaluate the same formula and agree to 1e-12 per direction, but
bit-identical output across backends is not promised.
"""

from __future__ import annotations

import math
import os

import numpy as np

if os.environ.get("QKDLAB_FORCE_NUMPY") == "1":
    from . import _gridscan_py as _kernel

    BACKEND = "numpy"
else:
    try:
        from . import _gridscan as _kernel  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _gridscan_py as _kernel

        BACKEND = "numpy"

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))

# The six axis directions come before the spiral so exact optima at the
# coordinate axes are found exactly, not to grid resolution.
AXIS_DIRECTIONS = np.array(
    [
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
    ]
)

REFINE_CANDIDATES = 400
REFINE_SHRINK = 0.35


def backend_name() -> str:
    return BACKEND


def mutual_info_many(dirs: np.ndarray, bloch: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Mutual information of the projective measurement along each direction."""
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    bloch = np.ascontiguousarray(bloch, dtype=np.float64)
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    out = np.empty(dirs.shape[0], dtype=np.float64)
    _kernel.grid_mutual_info(dirs, bloch, probs, out)
    return out


def fibonacci_directions(count: int) -> np.ndarray:
    """Evenly spread unit vectors from the Fibonacci spiral."""
    if count < 1:
        raise ValueError("grid needs at least one direction")
    i = np.arange(count, dtype=np.float64)
    z = 1.0 - (2.0 * i + 1.0) / count
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    phi = i * GOLDEN_ANGLE
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def build_grid(grid_size: int) -> np.ndarray:
    """Full search grid: axes first, then `grid_size` spiral points."""
    return np.vstack([AXIS_DIRECTIONS, fibonacci_directions(grid_size)])


def _tangent_basis(center: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Any frame orthogonal to `center`; seeded from the least-aligned axis
    # so the construction is deterministic and never degenerate.
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(center)))] = 1.0
    u = np.cross(center, axis)
    u /= np.linalg.norm(u)
    return u, np.cross(center, u)


def _patch(center: np.ndarray, radius: float, count: int) -> np.ndarray:
    """Golden-angle spiral of geodesic offsets within `radius` of `center`."""
    u, v = _tangent_basis(center)
    j = np.arange(count, dtype=np.float64)
    rho = radius * np.sqrt((j + 0.5) / count)
    phi = j * GOLDEN_ANGLE
    tangent = np.outer(np.cos(phi), u) + np.outer(np.sin(phi), v)
    pts = np.outer(np.cos(rho), center) + tangent * np.sin(rho)[:, None]
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def best_direction(
    bloch: np.ndarray,
    probs: np.ndarray,
    grid_size: int = 10000,
    refinement_rounds: int = 3,
) -> tuple[float, np.ndarray]:
    """Best measured mutual information and its direction.

    Scans the fixed grid, then runs `refinement_rounds` local searches in a
    shrinking cap around the running best.  Ties keep the lowest index.
    """
    dirs = build_grid(grid_size)
    values = mutual_info_many(dirs, bloch, probs)
    best_idx = int(np.argmax(values))  # argmax takes the first maximum
    best_val = float(values[best_idx])
    best_dir = dirs[best_idx].copy()

    radius = 4.0 / math.sqrt(grid_size)
    for _ in range(refinement_rounds):
        cand = _patch(best_dir, radius, REFINE_CANDIDATES)
        cand_vals = mutual_info_many(cand, bloch, probs)
        idx = int(np.argmax(cand_vals))
        if cand_vals[idx] > best_val:
            best_val = float(cand_vals[idx])
            best_dir = cand[idx].copy()
        radius *= REFINE_SHRINK
    return best_val, best_dir
