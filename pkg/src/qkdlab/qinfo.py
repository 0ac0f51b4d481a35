"""Distance and information measures on density matrices and ensembles.

Contains the distinguishability toolkit: trace distance, Uhlmann fidelity,
von Neumann and relative entropy, Holevo chi (computed two independent ways
and cross-checked), measured mutual information, and a deterministic
measurement-family search that brackets accessible information between a
concrete measurement's yield and chi.

Trace distance here is the full Schatten-1 norm of the difference, so it
ranges over [0, 2]; orthogonal pure states sit at 2, not 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import gridscan
from .qmatrix import DensityMatrix, Povm, eigh_psd, psd_sqrt

# Eigenvalues below this are treated as exact zeros in entropy sums and
# support checks.
SPECTRUM_FLOOR = 1e-12
# Probability mass in a reference state's kernel above this makes relative
# entropy infinite rather than numerically huge.
KERNEL_MASS_TOL = 1e-10
# The two Holevo forms must agree this tightly or the computation aborts.
CHI_FORM_ATOL = 1e-8

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)


class ConsistencyError(RuntimeError):
    """Two computations of one quantity disagreed beyond tolerance."""


def binary_entropy(p: float) -> float:
    """H2(p) in bits, with 0 log 0 = 0."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class CqEnsemble:
    """A classical-quantum ensemble: weights and same-dimension states."""

    probs: tuple[float, ...]
    states: tuple[DensityMatrix, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        states = tuple(self.states)
        if not states or len(probs) != len(states):
            raise ValueError("ensemble needs matching, nonempty probs and states")
        if min(probs) < -SPECTRUM_FLOOR:
            raise ValueError(f"ensemble weights must be nonnegative, got {min(probs)}")
        probs = tuple(max(p, 0.0) for p in probs)
        if abs(sum(probs) - 1.0) > 1e-10:
            raise ValueError(f"ensemble weights sum to {sum(probs)}, not 1")
        dim = states[0].dim
        for s in states:
            if s.dim != dim:
                raise ValueError("ensemble states must share one dimension")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def average(self) -> DensityMatrix:
        avg = sum(p * s.data for p, s in zip(self.probs, self.states))
        return DensityMatrix(avg, self.states[0].subsystem_dims)


@dataclass(frozen=True)
class ClassicalJointTable:
    """A joint distribution over named discrete variables.

    `probs` maps value tuples (aligned with `variables`) to probabilities.
    """

    variables: tuple[str, ...]
    probs: Mapping[tuple, float]

    def __post_init__(self):
        variables = tuple(self.variables)
        if not variables or len(set(variables)) != len(variables):
            raise ValueError("variables must be nonempty and distinct")
        entries = {}
        for key, p in dict(self.probs).items():
            key = tuple(key)
            if len(key) != len(variables):
                raise ValueError(f"entry {key} does not match variables {variables}")
            p = float(p)
            if p < -SPECTRUM_FLOOR:
                raise ValueError(f"negative probability {p} at {key}")
            entries[key] = max(p, 0.0)
        if not entries:
            raise ValueError("table must have at least one entry")
        total = math.fsum(entries.values())
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"table probabilities sum to {total}, not 1")
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "probs", entries)

    def marginal(self, names: tuple[str, ...]) -> dict[tuple, float]:
        idx = [self.variables.index(n) for n in names]
        out: dict[tuple, float] = {}
        for key, p in self.probs.items():
            sub = tuple(key[i] for i in idx)
            out[sub] = out.get(sub, 0.0) + p
        return out


@dataclass(frozen=True)
class MeasurementFamilyConfig:
    """Knobs for the deterministic measurement-family search.

    family "auto" picks the projective Bloch grid for qubits and random
    rank-1 POVMs otherwise.  grid_size defaults to 10000 directions for the
    grid and 200 candidates for the random family; outcome_count defaults to
    the state dimension.
    """

    family: str = "auto"
    grid_size: int | None = None
    refinement_rounds: int = 3
    outcome_count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in ("auto", "qubit_grid", "random_rank1"):
            raise ValueError(f"unknown measurement family {self.family!r}")
        if self.grid_size is not None and self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if self.refinement_rounds < 0:
            raise ValueError("refinement_rounds must be >= 0")
        if self.outcome_count is not None and self.outcome_count < 2:
            raise ValueError("outcome_count must be at least 2")


@dataclass(frozen=True)
class AccessibleInfoEstimate:
    """Bracket on accessible information: a measurement's yield and chi."""

    lower: float
    upper: float
    best_povm: Povm = field(repr=False)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """Schatten-1 norm of a - b; ranges over [0, 2]."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    w = np.linalg.eigvalsh(a.data - b.data)
    return float(np.abs(w).sum())


def fidelity(a: DensityMatrix, b: DensityMatrix) -> float:
    """Squared Uhlmann fidelity (Tr sqrt(sqrt(a) b sqrt(a)))^2, in [0, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root = psd_sqrt(a.data)
    w, _ = eigh_psd(root @ b.data @ root)
    f = float(np.sqrt(w).sum()) ** 2
    return min(f, 1.0)


def von_neumann_entropy(rho: DensityMatrix) -> float:
    """S(rho) in bits."""
    w, _ = eigh_psd(rho.data)
    w = w[w > SPECTRUM_FLOOR]
    return float(max(-(w * np.log2(w)).sum(), 0.0))


def relative_entropy(a: DensityMatrix, b: DensityMatrix) -> float:
    """S(a || b) in bits; math.inf when a has support in b's kernel."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    wb, vb = eigh_psd(b.data)
    kernel = wb <= SPECTRUM_FLOOR
    if kernel.any():
        vk = vb[:, kernel]
        mass = float(np.real(np.einsum("ij,ik,kj->", vk.conj(), a.data, vk)))
        if mass > KERNEL_MASS_TOL:
            return math.inf
    wa, _ = eigh_psd(a.data)
    wa = wa[wa > SPECTRUM_FLOOR]
    term_a = float((wa * np.log2(wa)).sum())
    support = ~kernel
    vs = vb[:, support]
    diag = np.real(np.einsum("ij,ik,kj->j", vs.conj(), a.data, vs))
    term_b = float((diag * np.log2(wb[support])).sum())
    val = term_a - term_b
    if val < -1e-7:
        raise ConsistencyError(f"relative entropy came out {val}, below zero")
    return max(val, 0.0)


def holevo_chi(ensemble: CqEnsemble) -> float:
    """Holevo chi of the ensemble, in bits.

    Computed both as S(avg) - sum q S(rho_x) and as the weighted relative
    entropy of members to the average; the two must agree to 1e-8 or a
    ConsistencyError is raised.  Returns the entropy-difference form.
    """
    avg = ensemble.average()
    chi_ent = von_neumann_entropy(avg) - math.fsum(
        q * von_neumann_entropy(s) for q, s in zip(ensemble.probs, ensemble.states) if q > 0.0
    )
    chi_rel = math.fsum(
        q * relative_entropy(s, avg) for q, s in zip(ensemble.probs, ensemble.states) if q > 0.0
    )
    if not math.isfinite(chi_rel) or abs(chi_ent - chi_rel) > CHI_FORM_ATOL:
        raise ConsistencyError(
            f"Holevo forms disagree: entropy difference {chi_ent!r} vs relative entropy {chi_rel!r}"
        )
    return max(chi_ent, 0.0)


def _entropy_of(probs) -> float:
    return -math.fsum(p * math.log2(p) for p in probs if p > 0.0)


def measurement_mutual_info(ensemble: CqEnsemble, povm: Povm) -> float:
    """I(X:Y) between ensemble label and measurement outcome, in bits."""
    if povm.dim != ensemble.dim:
        raise ValueError(f"POVM dimension {povm.dim} does not match ensemble dimension {ensemble.dim}")
    joint = []
    for q, s in zip(ensemble.probs, ensemble.states):
        row = [max(float(np.real(np.trace(e @ s.data))), 0.0) * q for e in povm.elements]
        joint.append(row)
    px = [math.fsum(row) for row in joint]
    py = [math.fsum(col) for col in zip(*joint)]
    h_xy = _entropy_of(p for row in joint for p in row)
    val = _entropy_of(px) + _entropy_of(py) - h_xy
    return max(val, 0.0)


def _bloch_vectors(ensemble: CqEnsemble) -> np.ndarray:
    rows = []
    for s in ensemble.states:
        rows.append(
            [
                float(np.real(np.trace(PAULI_X @ s.data))),
                float(np.real(np.trace(PAULI_Y @ s.data))),
                float(np.real(np.trace(PAULI_Z @ s.data))),
            ]
        )
    return np.array(rows)


def _direction_povm(direction: np.ndarray) -> Povm:
    n_sigma = direction[0] * PAULI_X + direction[1] * PAULI_Y + direction[2] * PAULI_Z
    eye = np.eye(2, dtype=complex)
    return Povm([0.5 * (eye + n_sigma), 0.5 * (eye - n_sigma)])


def _gram_povm(vectors: np.ndarray) -> Povm | None:
    # Normalize rank-1 candidates through the Gram operator so they sum to
    # the identity; reject nearly singular draws.
    s = vectors.T @ vectors.conj()
    w, _ = np.linalg.eigh(0.5 * (s + s.conj().T))
    if w[0] < 1e-9 * max(w[-1], 1.0):
        return None
    inv_root = np.linalg.inv(psd_sqrt(s))
    elems = []
    for v in vectors:
        u = inv_root @ v
        elems.append(np.outer(u, u.conj()))
    return Povm(elems)


def _random_family_search(
    ensemble: CqEnsemble, config: MeasurementFamilyConfig
) -> tuple[float, Povm]:
    dim = ensemble.dim
    k = config.outcome_count if config.outcome_count is not None else max(dim, 2)
    if k < dim:
        raise ValueError(f"rank-1 POVM on dimension {dim} needs at least {dim} outcomes, got {k}")
    count = config.grid_size if config.grid_size is not None else 200
    rng = np.random.default_rng(config.seed)

    def draw() -> np.ndarray:
        return rng.standard_normal((k, dim)) + 1.0j * rng.standard_normal((k, dim))

    best_val = -1.0
    best_povm: Povm | None = None
    best_vecs: np.ndarray | None = None
    candidates = 0
    attempts = 0
    while candidates < count:
        attempts += 1
        if attempts > 50 * count:
            raise ConsistencyError("random POVM draws kept producing singular Gram operators")
        vecs = draw()
        povm = _gram_povm(vecs)
        if povm is None:
            continue
        candidates += 1
        val = measurement_mutual_info(ensemble, povm)
        if val > best_val:
            best_val, best_povm, best_vecs = val, povm, vecs

    step = 0.25 * float(np.abs(best_vecs).mean())
    for _ in range(config.refinement_rounds):
        for _ in range(50):
            vecs = best_vecs + step * (rng.standard_normal((k, dim)) + 1.0j * rng.standard_normal((k, dim)))
            povm = _gram_povm(vecs)
            if povm is None:
                continue
            val = measurement_mutual_info(ensemble, povm)
            if val > best_val:
                best_val, best_povm, best_vecs = val, povm, vecs
        step *= 0.5
    return best_val, best_povm


def accessible_info_estimate(
    ensemble: CqEnsemble, config: MeasurementFamilyConfig | None = None
) -> AccessibleInfoEstimate:
    """Bracket accessible information by an explicit measurement search.

    The lower edge is the mutual information of the best measurement found
    in the configured family; the upper edge is Holevo chi.  The search is
    deterministic for a fixed config.
    """
    config = config or MeasurementFamilyConfig()
    family = config.family
    if family == "auto":
        family = "qubit_grid" if ensemble.dim == 2 else "random_rank1"
    if family == "qubit_grid":
        if ensemble.dim != 2:
            raise ValueError("qubit_grid family requires dimension 2")
        grid_size = config.grid_size if config.grid_size is not None else 10000
        bloch = _bloch_vectors(ensemble)
        probs = np.array(ensemble.probs)
        kernel_val, direction = gridscan.best_direction(
            bloch, probs, grid_size=grid_size, refinement_rounds=config.refinement_rounds
        )
        povm = _direction_povm(direction)
        lower = measurement_mutual_info(ensemble, povm)
        if abs(lower - kernel_val) > 1e-9:
            raise ConsistencyError(
                f"grid kernel value {kernel_val!r} disagrees with direct evaluation {lower!r}"
            )
    else:
        lower, povm = _random_family_search(ensemble, config)
    upper = holevo_chi(ensemble)
    if lower > upper + CHI_FORM_ATOL:
        raise ConsistencyError(f"measured information {lower!r} exceeds chi {upper!r}")
    return AccessibleInfoEstimate(lower=lower, upper=upper, best_povm=povm)


def shannon_distinguishability(
    a: DensityMatrix, b: DensityMatrix, config: MeasurementFamilyConfig | None = None
) -> float:
    """Best found mutual information for the uniform two-state ensemble."""
    ensemble = CqEnsemble((0.5, 0.5), (a, b))
    return accessible_info_estimate(ensemble, config).lower


def conditional_mutual_info(
    table: ClassicalJointTable, x: str, y: str, given: str | None = None
) -> float:
    """I(x : y) or I(x : y | given) in bits for a joint table."""
    for name in (x, y) + ((given,) if given is not None else ()):
        if name not in table.variables:
            raise ValueError(f"variable {name!r} not in table {table.variables}")
    if len({x, y, given}) < (3 if given is not None else 2):
        raise ValueError("variables must be distinct")

    def info(entries: dict[tuple, float]) -> float:
        # entries: (x_val, y_val) -> prob, not necessarily normalized
        total = math.fsum(entries.values())
        if total <= 0.0:
            return 0.0
        px: dict = {}
        py: dict = {}
        for (xv, yv), p in entries.items():
            px[xv] = px.get(xv, 0.0) + p
            py[yv] = py.get(yv, 0.0) + p
        h = lambda vals: -math.fsum((p / total) * math.log2(p / total) for p in vals if p > 0.0)
        return h(px.values()) + h(py.values()) - h(entries.values())

    if given is None:
        joint = table.marginal((x, y))
        return max(info(joint), 0.0)

    triple = table.marginal((x, y, given))
    by_z: dict = {}
    for (xv, yv, zv), p in triple.items():
        by_z.setdefault(zv, {})[(xv, yv)] = p
    val = math.fsum(math.fsum(entries.values()) * info(entries) for entries in by_z.values())
    return max(val, 0.0)
