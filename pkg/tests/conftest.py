"""Shared test helpers: seeded random states and the acceptance summary hook."""

from __future__ import annotations

import numpy as np

from qkdlab import DensityMatrix

_CRITERION_LINES: list[tuple[int, str]] = []


def record_criterion(number: int, passed: bool, detail: str = "") -> None:
    """Collect one pass/fail line per acceptance criterion.

    The lines are echoed in a terminal section after the run so the verdict
    for every criterion is visible even when unrelated tests are noisy.
    """
    tag = "PASS" if passed else "FAIL"
    line = f"[{tag}] criterion {number}" + (f": {detail}" if detail else "")
    _CRITERION_LINES.append((number, line))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_CRITERION_LINES):
        terminalreporter.write_line(line)


def ginibre(rng: np.random.Generator, dim: int, rank: int | None = None) -> DensityMatrix:
    """Random density matrix from a Ginibre factor; rank defaults to full."""
    k = dim if rank is None else rank
    g = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_pure(rng: np.random.Generator, dim: int) -> np.ndarray:
    vec = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return vec / np.linalg.norm(vec)
