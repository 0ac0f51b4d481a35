"""Classical-quantum states stored as labeled block-diagonal operators.

A state of the form sum_t |t><t| (x) B_t is kept as a dict from label t to
its (unnormalized) block B_t.  Labels are nested tuples of ints naming one
classical branch; blocks are either 1-D nonnegative vectors (`diagonal`
states, where the quantum register is itself classical) or dense complex
matrices.  A scalar `scale` multiplies every block so normalization and
reweighting never copy arrays.

All metric operations decompose over labels, which is what makes transcript
spaces with thousands of branches tractable: no operation ever materializes
the full direct sum unless `densify` is explicitly asked for, and that one
enforces the same 4096 cap as dense states.

`KeyedState` adds one more classical layer on top: a dict from a key-pair
cell to a weighted BlockDiagState.  The security game's real, ideal, and
hybrid states all live at this level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .qinfo import ConsistencyError
from .qmatrix import DIM_CAP, CapacityError, DensityMatrix, eigh_psd, psd_sqrt

SPECTRUM_FLOOR = 1e-12
KERNEL_MASS_TOL = 1e-10


@dataclass(frozen=True)
class BlockDiagState:
    """Labeled block-diagonal operator with a lazy scalar multiplier."""

    blocks: Mapping[tuple, np.ndarray]
    diagonal: bool
    qdim: int
    scale: float = 1.0

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("state needs at least one labeled block")
        if self.qdim < 1:
            raise ValueError("block dimension must be at least 1")

    def trace(self) -> float:
        if self.diagonal:
            total = math.fsum(float(v.sum()) for v in self.blocks.values())
        else:
            total = math.fsum(float(np.real(np.trace(b))) for b in self.blocks.values())
        return self.scale * total

    def normalized(self) -> "BlockDiagState":
        t = self.trace()
        if t <= 0.0:
            raise ValueError("cannot normalize a state with nonpositive trace")
        return BlockDiagState(self.blocks, self.diagonal, self.qdim, self.scale / t)

    def scaled(self, c: float) -> "BlockDiagState":
        return BlockDiagState(self.blocks, self.diagonal, self.qdim, self.scale * c)

    def __repr__(self) -> str:
        kind = "diagonal" if self.diagonal else "dense"
        return f"BlockDiagState({len(self.blocks)} blocks, qdim={self.qdim}, {kind}, scale={self.scale:.3g})"


def _check_compatible(a: BlockDiagState, b: BlockDiagState) -> None:
    if a.diagonal != b.diagonal or a.qdim != b.qdim:
        raise ValueError("states have incompatible block layouts")


def _block_eigs(block: np.ndarray, diagonal: bool) -> np.ndarray:
    if diagonal:
        return block
    w, _ = eigh_psd(block)
    return w


def mix(parts: Iterable[tuple[float, BlockDiagState]]) -> BlockDiagState:
    """Weighted sum of states; materializes fresh block arrays."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to mix")
    first = parts[0][1]
    for _, s in parts[1:]:
        _check_compatible(first, s)
    out: dict[tuple, np.ndarray] = {}
    for w, s in parts:
        c = w * s.scale
        if c == 0.0:
            continue
        for lbl, blk in s.blocks.items():
            if lbl in out:
                out[lbl] = out[lbl] + c * blk
            else:
                out[lbl] = c * blk
    if not out:
        raise ValueError("mixture has zero total weight")
    return BlockDiagState(out, first.diagonal, first.qdim, 1.0)


def trace_norm(a: BlockDiagState, b: BlockDiagState, wa: float = 1.0, wb: float = 1.0) -> float:
    """Schatten-1 norm of wa*a - wb*b, summed blockwise over the label union."""
    _check_compatible(a, b)
    ca, cb = wa * a.scale, wb * b.scale
    total: list[float] = []
    for lbl in sorted(a.blocks.keys() | b.blocks.keys()):
        blk_a = a.blocks.get(lbl)
        blk_b = b.blocks.get(lbl)
        if blk_a is None:
            diff = -cb * blk_b
        elif blk_b is None:
            diff = ca * blk_a
        else:
            diff = ca * blk_a - cb * blk_b
        if a.diagonal:
            total.append(float(np.abs(diff).sum()))
        else:
            w = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
            total.append(float(np.abs(w).sum()))
    return math.fsum(total)


def sqrt_fidelity(a: BlockDiagState, b: BlockDiagState, wa: float = 1.0, wb: float = 1.0) -> float:
    """Sum over labels of Tr sqrt(sqrt(A) B sqrt(A)); square it for fidelity.

    Returned unsquared so callers can accumulate across cells before
    squaring once at the end.
    """
    _check_compatible(a, b)
    root_scale = math.sqrt(max(wa * a.scale, 0.0) * max(wb * b.scale, 0.0))
    if root_scale == 0.0:
        return 0.0
    total: list[float] = []
    for lbl in sorted(a.blocks.keys() & b.blocks.keys()):
        blk_a = a.blocks[lbl]
        blk_b = b.blocks[lbl]
        if a.diagonal:
            total.append(float(np.sqrt(np.clip(blk_a * blk_b, 0.0, None)).sum()))
        else:
            root = psd_sqrt(blk_a)
            w, _ = eigh_psd(root @ blk_b @ root)
            total.append(float(np.sqrt(w).sum()))
    return root_scale * math.fsum(total)


def entropy(state: BlockDiagState) -> float:
    """Von Neumann entropy in bits; the state must be normalized."""
    vals: list[float] = []
    for blk in state.blocks.values():
        w = _block_eigs(blk, state.diagonal) * state.scale
        w = w[w > SPECTRUM_FLOOR]
        if w.size:
            vals.append(float(-(w * np.log2(w)).sum()))
    return max(math.fsum(vals), 0.0)


def relative_entropy(a: BlockDiagState, b: BlockDiagState) -> float:
    """S(a || b) in bits over the shared block structure; inf on support escape."""
    _check_compatible(a, b)
    total: list[float] = []
    for lbl in sorted(a.blocks.keys() | b.blocks.keys()):
        blk_a = a.blocks.get(lbl)
        if blk_a is None:
            continue
        blk_b = b.blocks.get(lbl)
        if a.diagonal:
            pa = a.scale * blk_a
            pb = None if blk_b is None else b.scale * blk_b
            for i in range(pa.shape[0]):
                if pa[i] <= SPECTRUM_FLOOR:
                    continue
                qi = 0.0 if pb is None else float(pb[i])
                if qi <= SPECTRUM_FLOOR:
                    if pa[i] > KERNEL_MASS_TOL:
                        return math.inf
                    continue
                total.append(float(pa[i]) * (math.log2(float(pa[i])) - math.log2(qi)))
        else:
            mat_a = a.scale * blk_a
            mass = float(np.real(np.trace(mat_a)))
            if blk_b is None:
                if mass > KERNEL_MASS_TOL:
                    return math.inf
                continue
            mat_b = b.scale * blk_b
            wb, vb = eigh_psd(mat_b)
            kernel = wb <= SPECTRUM_FLOOR
            if kernel.any():
                vk = vb[:, kernel]
                leak = float(np.real(np.einsum("ij,ik,kj->", vk.conj(), mat_a, vk)))
                if leak > KERNEL_MASS_TOL:
                    return math.inf
            wa_, _ = eigh_psd(mat_a)
            wa_ = wa_[wa_ > SPECTRUM_FLOOR]
            term_a = float((wa_ * np.log2(wa_)).sum()) if wa_.size else 0.0
            support = ~kernel
            vs = vb[:, support]
            diag = np.real(np.einsum("ij,ik,kj->j", vs.conj(), mat_a, vs))
            term_b = float((diag * np.log2(wb[support])).sum())
            total.append(term_a - term_b)
    return math.fsum(total)


def holevo_chi(parts: list[tuple[float, BlockDiagState]]) -> float:
    """Holevo chi of an ensemble of normalized block states, in bits.

    Same dual-form cross-check as the dense version: entropy difference vs
    weighted relative entropy to the average, required to agree to 1e-8.
    """
    avg = mix(parts)
    chi_ent = entropy(avg) - math.fsum(w * entropy(s) for w, s in parts if w > 0.0)
    chi_rel = math.fsum(w * relative_entropy(s, avg) for w, s in parts if w > 0.0)
    if not math.isfinite(chi_rel) or abs(chi_ent - chi_rel) > 1e-8:
        raise ConsistencyError(f"Holevo forms disagree on block states: {chi_ent!r} vs {chi_rel!r}")
    return max(chi_ent, 0.0)


def densify(state: BlockDiagState, label_order: tuple[tuple, ...] | None = None) -> tuple[DensityMatrix, tuple[tuple, ...]]:
    """Embed the block-diagonal state as one dense DensityMatrix.

    Intended for cross-validation on small instances; enforces the global
    dimension cap.  Returns the matrix and the label order used.
    """
    labels = tuple(label_order) if label_order is not None else tuple(sorted(state.blocks.keys()))
    if set(labels) != set(state.blocks.keys()):
        raise ValueError("label_order must cover exactly the state's labels")
    total_dim = state.qdim * len(labels)
    if total_dim > DIM_CAP:
        raise CapacityError(f"densified dimension {total_dim} exceeds the cap of {DIM_CAP}")
    out = np.zeros((total_dim, total_dim), dtype=complex)
    for i, lbl in enumerate(labels):
        blk = state.blocks[lbl] * state.scale
        sl = slice(i * state.qdim, (i + 1) * state.qdim)
        out[sl, sl] = np.diag(blk) if state.diagonal else blk
    return DensityMatrix(out), labels


@dataclass(frozen=True)
class KeyedState:
    """A classical key-pair register in front of per-cell block states.

    `cells` maps (key_a, key_b) strings to (weight, normalized state); the
    weights form the key-pair distribution and sum to 1 for a physical
    state.  The abort cell is keyed ("", "").
    """

    cells: Mapping[tuple[str, str], tuple[float, BlockDiagState]] = field(repr=False)

    def __post_init__(self):
        if not self.cells:
            raise ValueError("keyed state needs at least one cell")

    def total_weight(self) -> float:
        return math.fsum(w for w, _ in self.cells.values())

    def restricted(self, keep: Callable[[tuple[str, str]], bool]) -> "KeyedState":
        kept = {cell: ws for cell, ws in self.cells.items() if keep(cell)}
        return KeyedState(kept)

    def key_lengths(self) -> dict[int, float]:
        out: dict[int, float] = {}
        for (ka, _), (w, _s) in self.cells.items():
            out[len(ka)] = out.get(len(ka), 0.0) + w
        return out


def keyed_trace_norm(a: KeyedState, b: KeyedState) -> float:
    """Schatten-1 distance between keyed states, cells aligned by key pair."""
    total: list[float] = []
    for cell in sorted(a.cells.keys() | b.cells.keys()):
        in_a = a.cells.get(cell)
        in_b = b.cells.get(cell)
        # A cell present on one side only contributes its full weight: the
        # states are normalized and PSD, so the block norm is the weight.
        if in_a is None:
            total.append(abs(in_b[0]))
        elif in_b is None:
            total.append(abs(in_a[0]))
        else:
            (wa, sa), (wb, sb) = in_a, in_b
            total.append(trace_norm(sa, sb, wa=wa, wb=wb))
    return math.fsum(total)


def keyed_fidelity(a: KeyedState, b: KeyedState) -> float:
    """Uhlmann fidelity (squared form) between keyed states."""
    total: list[float] = []
    for cell in sorted(a.cells.keys() & b.cells.keys()):
        (wa, sa) = a.cells[cell]
        (wb, sb) = b.cells[cell]
        total.append(sqrt_fidelity(sa, sb, wa=wa, wb=wb))
    return min(math.fsum(total) ** 2, 1.0)
