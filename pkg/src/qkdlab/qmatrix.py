"""Dense density-matrix kernel: validated states, channels, and measurements.

Every value type is validated at construction and treated as immutable
afterwards; operations return new objects.  Hermitian eigendecomposition
(`numpy.linalg.eigh`) is the single numerical primitive used for square
roots, spectra, and positivity checks, so tolerances compose predictably.

Dimensions are capped at 4096: this is a desk-scale laboratory, not an HPC
code, and the cap keeps every dense operation comfortably interactive.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

import numpy as np

DIM_CAP = 4096

# Construction tolerances.  Hermiticity and trace are checked at 1e-10;
# eigenvalues may dip to -1e-9 from accumulated rounding and are clamped.
HERM_ATOL = 1e-10
TRACE_ATOL = 1e-10
EIG_CLAMP = -1e-9

# Measurement outcomes below this probability get no post-state.
PROB_FLOOR = 1e-12


class CapacityError(ValueError):
    """Raised when a construction would exceed the desk-scale size cap."""


def _as_square_complex(data, what: str) -> np.ndarray:
    arr = np.asarray(data, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {arr.shape}")
    return arr


def _check_dims(dim: int, subsystem_dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in subsystem_dims)
    if not dims or any(d < 2 for d in dims):
        raise ValueError(f"subsystem dims must all be >= 2, got {dims}")
    prod = 1
    for d in dims:
        prod *= d
    if prod != dim:
        raise ValueError(f"subsystem dims {dims} do not factor dimension {dim}")
    return dims


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class DensityMatrix:
    """A unit-trace positive semidefinite operator with a tensor factorization.

    `subsystem_dims` records how the Hilbert space factors; `partial_trace`
    and `tensor` consume and produce it.  The stored matrix is the Hermitian
    part of the input (input must already be Hermitian to 1e-10, so this is
    a rounding cleanup, not a repair).
    """

    __slots__ = ("data", "dim", "subsystem_dims")

    def __init__(self, data, subsystem_dims: Sequence[int] | None = None):
        arr = _as_square_complex(data, "density matrix")
        dim = arr.shape[0]
        if dim > DIM_CAP:
            raise CapacityError(f"dimension {dim} exceeds the cap of {DIM_CAP}")
        if dim < 2:
            raise ValueError("density matrix dimension must be at least 2")
        herm_gap = np.abs(arr - arr.conj().T).max()
        if herm_gap > HERM_ATOL:
            raise ValueError(f"matrix is not Hermitian (max asymmetry {herm_gap:.3e})")
        trace_gap = abs(arr.trace() - 1.0)
        if trace_gap > TRACE_ATOL:
            raise ValueError(f"trace deviates from 1 by {trace_gap:.3e}")
        arr = 0.5 * (arr + arr.conj().T)
        lo = float(np.linalg.eigvalsh(arr)[0])
        if lo < EIG_CLAMP:
            raise ValueError(f"matrix has a negative eigenvalue {lo:.3e}")
        self.data = _freeze(arr)
        self.dim = dim
        self.subsystem_dims = _check_dims(dim, subsystem_dims if subsystem_dims is not None else (dim,))

    def with_dims(self, subsystem_dims: Sequence[int]) -> "DensityMatrix":
        """Same operator, reinterpreted with a different factorization."""
        return DensityMatrix(self.data, subsystem_dims)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim}, subsystem_dims={self.subsystem_dims})"


class PureState:
    """A unit-norm state vector."""

    __slots__ = ("amplitudes", "dim")

    def __init__(self, amplitudes):
        vec = np.asarray(amplitudes, dtype=complex)
        if vec.ndim != 1:
            raise ValueError(f"state vector must be 1-D, got shape {vec.shape}")
        if vec.shape[0] > DIM_CAP:
            raise CapacityError(f"dimension {vec.shape[0]} exceeds the cap of {DIM_CAP}")
        norm_gap = abs(np.linalg.norm(vec) - 1.0)
        if norm_gap > HERM_ATOL:
            raise ValueError(f"state vector norm deviates from 1 by {norm_gap:.3e}")
        self.amplitudes = _freeze(vec.copy())
        self.dim = vec.shape[0]

    def to_density(self, subsystem_dims: Sequence[int] | None = None) -> DensityMatrix:
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), subsystem_dims)

    def __repr__(self) -> str:
        return f"PureState(dim={self.dim})"


class KrausChannel:
    """A completely positive trace-preserving map given by Kraus operators.

    Operators may be rectangular (dim_out x dim_in).  Trace preservation
    (sum K^dag K = I) is checked to 1e-10.  `out_dims` optionally records the
    factorization of the output space.
    """

    __slots__ = ("operators", "dim_in", "dim_out", "out_dims")

    def __init__(self, operators: Iterable, out_dims: Sequence[int] | None = None):
        ops = tuple(np.asarray(k, dtype=complex) for k in operators)
        if not ops:
            raise ValueError("channel needs at least one Kraus operator")
        shape = ops[0].shape
        if len(shape) != 2:
            raise ValueError("Kraus operators must be matrices")
        for k in ops:
            if k.shape != shape:
                raise ValueError("Kraus operators must share one shape")
        dim_out, dim_in = shape
        if dim_out > DIM_CAP or dim_in > DIM_CAP:
            raise CapacityError(f"Kraus shape {shape} exceeds the cap of {DIM_CAP}")
        total = sum(k.conj().T @ k for k in ops)
        gap = np.abs(total - np.eye(dim_in)).max()
        if gap > HERM_ATOL:
            raise ValueError(f"channel is not trace preserving (deviation {gap:.3e})")
        self.operators = tuple(_freeze(k.copy()) for k in ops)
        self.dim_in = dim_in
        self.dim_out = dim_out
        self.out_dims = _check_dims(dim_out, out_dims) if out_dims is not None else (dim_out,)

    def __repr__(self) -> str:
        return f"KrausChannel({self.dim_in}->{self.dim_out}, {len(self.operators)} operators)"


class Povm:
    """A positive operator-valued measure: PSD elements summing to identity."""

    __slots__ = ("elements", "dim")

    def __init__(self, elements: Iterable):
        elems = tuple(_as_square_complex(e, "POVM element") for e in elements)
        if not elems:
            raise ValueError("POVM needs at least one element")
        dim = elems[0].shape[0]
        for e in elems:
            if e.shape[0] != dim:
                raise ValueError("POVM elements must share one dimension")
            if np.abs(e - e.conj().T).max() > HERM_ATOL:
                raise ValueError("POVM element is not Hermitian")
            lo = float(np.linalg.eigvalsh(0.5 * (e + e.conj().T))[0])
            if lo < EIG_CLAMP:
                raise ValueError(f"POVM element has negative eigenvalue {lo:.3e}")
        total = sum(elems)
        gap = np.abs(total - np.eye(dim)).max()
        if gap > HERM_ATOL:
            raise ValueError(f"POVM elements do not sum to identity (deviation {gap:.3e})")
        self.elements = tuple(_freeze(0.5 * (e + e.conj().T)) for e in elems)
        self.dim = dim

    def __len__(self) -> int:
        return len(self.elements)

    def __repr__(self) -> str:
        return f"Povm(dim={self.dim}, outcomes={len(self.elements)})"


class MeasurementOutcome(NamedTuple):
    probability: float
    post_state: DensityMatrix | None


def eigh_psd(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian PSD matrix with negatives clamped.

    Returns (eigenvalues ascending, eigenvectors as columns).  Values in
    [EIG_CLAMP, 0) are rounding noise and are clamped to zero; anything more
    negative is a caller bug and raises.
    """
    w, v = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    if w[0] < EIG_CLAMP:
        raise ValueError(f"matrix has a negative eigenvalue {w[0]:.3e}")
    return np.clip(w, 0.0, None), v


def psd_sqrt(mat: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix."""
    w, v = eigh_psd(mat)
    return (v * np.sqrt(w)) @ v.conj().T


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Kronecker product; subsystem dims concatenate."""
    new_dim = a.dim * b.dim
    if new_dim > DIM_CAP:
        raise CapacityError(f"tensor product dimension {new_dim} exceeds the cap of {DIM_CAP}")
    return DensityMatrix(np.kron(a.data, b.data), a.subsystem_dims + b.subsystem_dims)


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Trace out every subsystem not listed in `keep`.

    `keep` holds indices into `rho.subsystem_dims`; the kept factors stay in
    ascending index order.  At least one subsystem must be kept.
    """
    dims = rho.subsystem_dims
    keep_sorted = sorted(set(int(i) for i in keep))
    if not keep_sorted:
        raise ValueError("must keep at least one subsystem")
    if keep_sorted[0] < 0 or keep_sorted[-1] >= len(dims):
        raise ValueError(f"keep indices {keep_sorted} out of range for {len(dims)} subsystems")
    if len(keep_sorted) == len(dims):
        return DensityMatrix(rho.data, dims)

    n = len(dims)
    tensor_form = rho.data.reshape(dims + dims)
    # Pair up row/column axes of each traced subsystem.
    traced = [i for i in range(n) if i not in keep_sorted]
    for offset, i in enumerate(traced):
        axis = i - offset  # axes shift left as earlier ones are consumed
        remaining = tensor_form.ndim // 2
        tensor_form = np.trace(tensor_form, axis1=axis, axis2=axis + remaining)
    kept_dims = tuple(dims[i] for i in keep_sorted)
    new_dim = int(np.prod(kept_dims))
    return DensityMatrix(tensor_form.reshape(new_dim, new_dim), kept_dims)


def purify(rho: DensityMatrix) -> PureState:
    """Standard purification on system x ancilla, ancilla dimension = dim.

    Built from the eigendecomposition as sum_i sqrt(w_i) |v_i> |i>, with the
    ancilla in the computational basis, so the result is deterministic.
    Tracing out the ancilla recovers the input to 1e-9.
    """
    w, v = eigh_psd(rho.data)
    d = rho.dim
    vec = np.zeros(d * d, dtype=complex)
    for i in range(d):
        if w[i] <= 0.0:
            continue
        vec += np.sqrt(w[i]) * np.kron(v[:, i], _basis_vec(d, i))
    return PureState(vec / np.linalg.norm(vec))


def _basis_vec(dim: int, i: int) -> np.ndarray:
    e = np.zeros(dim, dtype=complex)
    e[i] = 1.0
    return e


def apply_channel(
    rho: DensityMatrix,
    channel: KrausChannel,
    out_dims: Sequence[int] | None = None,
) -> DensityMatrix:
    """Apply sum_i K_i rho K_i^dag."""
    if channel.dim_in != rho.dim:
        raise ValueError(f"channel expects dimension {channel.dim_in}, state has {rho.dim}")
    out = np.zeros((channel.dim_out, channel.dim_out), dtype=complex)
    for k in channel.operators:
        out += k @ rho.data @ k.conj().T
    return DensityMatrix(out, out_dims if out_dims is not None else channel.out_dims)


def measure(rho: DensityMatrix, povm: Povm) -> list[MeasurementOutcome]:
    """Born-rule outcome list with post-measurement states.

    The post-state for element O is sqrt(O) rho sqrt(O) / p.  Outcomes with
    probability below 1e-12 carry `None` instead of a post-state.
    """
    if povm.dim != rho.dim:
        raise ValueError(f"POVM dimension {povm.dim} does not match state dimension {rho.dim}")
    outcomes: list[MeasurementOutcome] = []
    for elem in povm.elements:
        p = float(np.real(np.trace(elem @ rho.data)))
        p = 0.0 if p < PROB_FLOOR else p
        if p == 0.0:
            outcomes.append(MeasurementOutcome(0.0, None))
            continue
        root = psd_sqrt(elem)
        post = root @ rho.data @ root / p
        outcomes.append(MeasurementOutcome(p, DensityMatrix(post, rho.subsystem_dims)))
    return outcomes
