"""Prepare-and-measure key distribution under explicit eavesdropping.

Simulates the four-state two-basis protocol signal by signal: Alice sends a
random bit in a random basis, an adversary channel couples each signal to a
private probe register, Bob measures in a random basis.  Matching-basis
rounds are sifted; a deterministic fraction is sacrificed to estimate the
error rate; survivors are hashed into the output key.

The simulator never samples the quantum side.  For every classical branch
(bases, bits, test subset, announcements) it carries the exact unnormalized
probe state of the adversary, labeled by the public transcript, as a
`BlockDiagState`.  Exact mode enumerates every branch; Monte Carlo mode
samples branches but still attaches the exact per-branch conditional state.

Probe registers compose across signals in a fixed slot order per transcript:
tested signals first (ascending index), then kept, then unsifted, with
earlier slots most significant in the Kronecker index.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .cqstate import BlockDiagState, KeyedState, mix
from .qinfo import ConsistencyError, fidelity
from .qmatrix import CapacityError, DensityMatrix, KrausChannel, apply_channel, partial_trace

# Exact mode enumerates 16^n (bit, basis) patterns times test-subset choices;
# past this many branches the desk-scale promise is off.
BRANCH_CAP = 2**24
# Probe registers live in dimension probe_dim^n; the same cap as dense states.
PROBE_DIM_CAP = 4096
# Accumulated transcript blocks are held in memory at once.
BLOCK_BYTES_CAP = 2**31

SQRT_HALF = 1.0 / math.sqrt(2.0)

# Signal vectors indexed by (bit, basis); basis 0 is the computational pair,
# basis 1 the conjugate pair.
_SIGNALS = {
    (0, 0): np.array([1.0, 0.0], dtype=complex),
    (1, 0): np.array([0.0, 1.0], dtype=complex),
    (0, 1): np.array([SQRT_HALF, SQRT_HALF], dtype=complex),
    (1, 1): np.array([SQRT_HALF, -SQRT_HALF], dtype=complex),
}


@dataclass(frozen=True)
class ProtocolConfig:
    """Protocol knobs: block size, testing, thresholding, key length, mode.

    m_out = 0 means no hashing: every kept bit becomes key material and the
    key length varies with the sift pattern.  mode "exact" enumerates all
    branches; "monte_carlo" samples `trials` of them.
    """

    n: int
    test_fraction: float
    qber_threshold: float
    m_out: int
    mode: str = "exact"
    trials: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.n, int) or not 2 <= self.n <= 10:
            raise ValueError(f"n must be an integer in [2, 10], got {self.n}")
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ValueError(f"test_fraction must lie in [0, 1], got {self.test_fraction}")
        if not 0.0 <= self.qber_threshold <= 1.0:
            raise ValueError(f"qber_threshold must lie in [0, 1], got {self.qber_threshold}")
        if not isinstance(self.m_out, int) or self.m_out < 0 or self.m_out > self.n:
            raise ValueError(f"m_out must be an integer in [0, n], got {self.m_out}")
        if self.mode not in ("exact", "monte_carlo"):
            raise ValueError(f"mode must be 'exact' or 'monte_carlo', got {self.mode!r}")
        if self.mode == "monte_carlo":
            if not isinstance(self.trials, int) or self.trials < 1:
                raise ValueError("monte_carlo mode needs a positive integer trials count")
        elif self.trials is not None:
            raise ValueError("trials is only meaningful in monte_carlo mode")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")


@dataclass(frozen=True)
class EveStrategy:
    """Per-signal adversary: a channel from the signal to signal x probe.

    Kinds:
      none               -- the signal passes untouched, trivial probe.
      intercept_resend   -- with probability p, measure in a random basis and
                            resend the outcome; the probe records which basis
                            and outcome (or that no attack happened).
      entangling_probe   -- coherently copy basis-0 information into a qubit
                            probe whose two states have overlap cos(angle);
                            applies to every signal, so p must be 1.
    """

    kind: str
    p: float | None = None
    probe_angle: float | None = None

    def __post_init__(self):
        if self.kind not in ("none", "intercept_resend", "entangling_probe"):
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.kind == "none":
            if self.p not in (None, 0.0):
                raise ValueError("kind 'none' does not take an attack probability")
            if self.probe_angle is not None:
                raise ValueError("kind 'none' does not take a probe angle")
            object.__setattr__(self, "p", 0.0)
        elif self.kind == "intercept_resend":
            if self.p is None or not 0.0 <= self.p <= 1.0:
                raise ValueError("intercept_resend needs p in [0, 1]")
            if self.probe_angle is not None:
                raise ValueError("intercept_resend does not take a probe angle")
        else:
            if self.p is None:
                object.__setattr__(self, "p", 1.0)
            if self.p != 1.0:
                raise ValueError(
                    "entangling_probe attacks every signal; p must be 1 "
                    "(tune the angle to weaken it)"
                )
            if self.probe_angle is None or not 0.0 <= self.probe_angle <= math.pi:
                raise ValueError("entangling_probe needs probe_angle in [0, pi]")

    @property
    def probe_dim(self) -> int:
        if self.kind == "entangling_probe":
            return 2
        if self.kind == "intercept_resend" and self.p > 0.0:
            return 4 if self.p == 1.0 else 5
        return 1

    @property
    def diagonal(self) -> bool:
        # Intercept-resend probes are classical records; the entangling
        # probe keeps coherence.
        return self.kind != "entangling_probe"

    def probe_slots(self) -> tuple[str, ...]:
        if self.kind == "entangling_probe":
            return ("probe_0", "probe_1")
        if self.kind == "intercept_resend" and self.p > 0.0:
            slots = ("meas_b0_o0", "meas_b0_o1", "meas_b1_o0", "meas_b1_o1")
            return slots if self.p == 1.0 else ("idle",) + slots
        return ("idle",)

    def kraus_channel(self) -> KrausChannel:
        """The per-signal channel, signal (dim 2) to signal x probe."""
        dp = self.probe_dim
        if self.kind == "entangling_probe":
            half = self.probe_angle / 2.0
            probe = {
                0: np.array([math.cos(half), -math.sin(half)], dtype=complex),
                1: np.array([math.cos(half), math.sin(half)], dtype=complex),
            }
            op = np.zeros((2 * dp, 2), dtype=complex)
            for b in (0, 1):
                basis_vec = np.zeros(2, dtype=complex)
                basis_vec[b] = 1.0
                op[:, b] = np.kron(basis_vec, probe[b])
            return KrausChannel([op], out_dims=(2, dp))
        if self.kind == "intercept_resend" and self.p > 0.0:
            ops = []
            offset = 0
            if self.p < 1.0:
                # Idle branch: signal untouched, probe parked in the idle slot.
                idle = math.sqrt(1.0 - self.p) * np.kron(np.eye(2, dtype=complex), _unit(dp, 0).reshape(dp, 1))
                ops.append(idle)
                offset = 1
            for basis in (0, 1):
                for outcome in (0, 1):
                    proj = np.outer(_SIGNALS[(outcome, basis)], _SIGNALS[(outcome, basis)].conj())
                    slot = offset + 2 * basis + outcome
                    ops.append(math.sqrt(self.p / 2.0) * np.kron(proj, _unit(dp, slot).reshape(dp, 1)))
            return KrausChannel(ops, out_dims=(2, dp))
        # No attack: identity on the signal, no probe register.
        return KrausChannel([np.eye(2, dtype=complex)], out_dims=(2,))


def _unit(dim: int, i: int) -> np.ndarray:
    e = np.zeros(dim, dtype=complex)
    e[i] = 1.0
    return e


@dataclass(frozen=True)
class QberStats:
    """Test-round error rate, averaged over branches that tested anything."""

    expected_rate: float | None
    tested_weight: float
    std_error: float | None = None
    samples: int | None = None


@dataclass(frozen=True)
class QkdRunRecord:
    """Everything one protocol run produces.

    key_table maps (key_a, key_b) strings to probability; ("", "") is the
    abort cell.  eve_states holds the adversary's normalized conditional
    state for each cell, block-labeled by public transcript.  length_dist
    is the distribution of the output key length (0 means abort).
    """

    config: ProtocolConfig
    eve: EveStrategy
    key_table: Mapping[tuple[str, str], float]
    length_dist: Mapping[int, float]
    eve_states: Mapping[tuple[str, str], BlockDiagState] = field(repr=False)
    qber: QberStats = field(repr=False)
    rho_ab_signal: DensityMatrix = field(repr=False)


@dataclass(frozen=True)
class GameStates:
    """The four states of the distinguishability game, plus per-length views.

    rho_qkd is the real run; rho_ideal replaces keys and adversary view with
    the ideal coupling; rho_hybrid_cond keeps the adversary's exact per-key
    states but ideal uniform equal keys; rho_hybrid_avg additionally hands
    her the key-averaged state.  eve_avg_by_len / eve_cond_by_len are those
    averaged and transcript-conditioned adversary states per key length.
    """

    rho_qkd: KeyedState
    rho_ideal: KeyedState
    rho_hybrid_cond: KeyedState
    rho_hybrid_avg: KeyedState
    eve_avg_by_len: Mapping[int, BlockDiagState]
    eve_cond_by_len: Mapping[int, BlockDiagState]
    length_dist: Mapping[int, float]


class _SignalModel:
    """Per-signal conditional tables for one adversary strategy.

    For each (alice_bit, alice_basis, bob_basis, bob_outcome) it holds the
    outcome probability and the adversary's unnormalized probe block; per
    basis pair it also holds the bit-averaged probe block (used for signals
    whose bits are never announced or never existed as key material).
    """

    def __init__(self, eve: EveStrategy):
        self.eve = eve
        self.diagonal = eve.diagonal
        self.probe_dim = eve.probe_dim
        channel = eve.kraus_channel()
        self.prob: dict[tuple[int, int, int, int], float] = {}
        self.block: dict[tuple[int, int, int, int], np.ndarray] = {}
        self.agg: dict[tuple[int, int], np.ndarray] = {}
        dp = self.probe_dim
        for a, alpha in itertools.product((0, 1), (0, 1)):
            psi = _SIGNALS[(a, alpha)]
            branches = [(k @ psi).reshape(2, dp) for k in channel.operators]
            for beta in (0, 1):
                for b in (0, 1):
                    phi = _SIGNALS[(b, beta)]
                    w = np.zeros((dp, dp), dtype=complex)
                    for chi in branches:
                        u = phi.conj() @ chi
                        w += np.outer(u, u.conj())
                    p = float(np.real(np.trace(w)))
                    p = max(p, 0.0)
                    if self.diagonal:
                        blk = np.real(np.diag(w)).copy()
                        blk[blk < 0.0] = 0.0
                    else:
                        blk = w
                    self.prob[(a, alpha, beta, b)] = p
                    self.block[(a, alpha, beta, b)] = blk
        for alpha, beta in itertools.product((0, 1), (0, 1)):
            total = sum(
                0.5 * self.block[(a, alpha, beta, b)] for a, b in itertools.product((0, 1), (0, 1))
            )
            self.agg[(alpha, beta)] = total

    def options(self, alpha: int, beta: int) -> list[tuple[int, int, float, np.ndarray]]:
        """Nonzero (bit, outcome) branches with weight 0.5 * p and block."""
        out = []
        for a, b in itertools.product((0, 1), (0, 1)):
            p = self.prob[(a, alpha, beta, b)]
            if p > 0.0:
                out.append((a, b, 0.5 * p, 0.5 * self.block[(a, alpha, beta, b)]))
        return out


def _gf2_rank(mat: np.ndarray) -> int:
    m = mat.copy() % 2
    rows, cols = m.shape
    rank = 0
    for col in range(cols):
        pivot = None
        for row in range(rank, rows):
            if m[row, col]:
                pivot = row
                break
        if pivot is None:
            continue
        m[[rank, pivot]] = m[[pivot, rank]]
        for row in range(rows):
            if row != rank and m[row, col]:
                m[row] ^= m[rank]
        rank += 1
        if rank == rows:
            break
    return rank


def _toeplitz_hashes(config: ProtocolConfig) -> dict[int, np.ndarray]:
    """Full-rank Toeplitz matrices mapping r kept bits to m_out key bits.

    Drawn from a seed-derived stream, resampling until the matrix has full
    row rank so every key value stays exactly equally likely.  With m_out=0
    keys are the raw kept bits and no matrices are needed.
    """
    if config.m_out == 0:
        return {}
    rng = np.random.default_rng((config.seed, 17))
    out: dict[int, np.ndarray] = {}
    for r in range(config.m_out, config.n + 1):
        for _ in range(1000):
            diags = rng.integers(0, 2, size=config.m_out + r - 1, dtype=np.int64)
            h = np.empty((config.m_out, r), dtype=np.int64)
            for i in range(config.m_out):
                for j in range(r):
                    h[i, j] = diags[i - j + r - 1]
            if _gf2_rank(h) == config.m_out:
                out[r] = h
                break
        else:
            raise RuntimeError(f"could not draw a full-rank {config.m_out}x{r} hash")
    return out


def _key_strings(hashes: dict[int, np.ndarray], m_out: int, r: int) -> list[str]:
    """Key string for every r-bit pattern, indexed by the bit pattern int.

    Bit pattern ints put the first kept signal in the most significant bit.
    """
    keys = []
    for pattern in range(2**r):
        bits = np.array([(pattern >> (r - 1 - j)) & 1 for j in range(r)], dtype=np.int64)
        if m_out == 0:
            key = bits
        else:
            key = hashes[r] @ bits % 2
        keys.append("".join(str(int(v)) for v in key))
    return keys


def _round_test_size(test_fraction: float, s: int) -> int:
    return int(round(test_fraction * s))


def _exact_guards(config: ProtocolConfig, eve: EveStrategy) -> None:
    max_subsets = 1
    entries = 0
    for s in range(config.n + 1):
        t = _round_test_size(config.test_fraction, s)
        max_subsets = max(max_subsets, math.comb(s, t))
        entries += math.comb(config.n, s) * (2**config.n) * math.comb(s, t) * 4**s
    branches = 16**config.n * max_subsets
    if branches > BRANCH_CAP:
        raise CapacityError(
            f"exact enumeration would visit ~{branches} branches, over the cap of {BRANCH_CAP}"
        )
    block_bytes = eve.probe_dim**config.n * (8 if eve.diagonal else 16 * eve.probe_dim**config.n)
    if entries * block_bytes > BLOCK_BYTES_CAP:
        raise CapacityError(
            "exact enumeration would hold roughly "
            f"{entries * block_bytes} bytes of transcript blocks, over the cap of {BLOCK_BYTES_CAP}"
        )


def _feasibility_check(config: ProtocolConfig) -> None:
    need = max(config.m_out, 1)
    best = max(s - _round_test_size(config.test_fraction, s) for s in range(config.n + 1))
    if best < need:
        raise ValueError(
            f"no basis pattern leaves {need} kept bits after testing; "
            "lower m_out or the test fraction"
        )


class _Accumulator:
    """Collects unnormalized transcript blocks per key-pair cell."""

    def __init__(self, model: _SignalModel, n: int):
        self.model = model
        self.cells: dict[tuple[str, str], dict[tuple, np.ndarray]] = defaultdict(dict)
        self.qber_terms: list[tuple[float, float]] = []  # (weight, error fraction)
        self.probe_dim = model.probe_dim**n

    def add(self, cell: tuple[str, str], label: tuple, weight: float, block: np.ndarray) -> None:
        slot = self.cells[cell]
        if label in slot:
            slot[label] = slot[label] + weight * block
        else:
            slot[label] = weight * block

    def finish(self, config: ProtocolConfig, eve: EveStrategy) -> QkdRunRecord:
        key_table: dict[tuple[str, str], float] = {}
        eve_states: dict[tuple[str, str], BlockDiagState] = {}
        for cell in sorted(self.cells.keys()):
            blocks = self.cells[cell]
            state = BlockDiagState(blocks, self.model.diagonal, self.probe_dim, 1.0)
            weight = state.trace()
            if weight <= 0.0:
                continue
            key_table[cell] = weight
            eve_states[cell] = state.scaled(1.0 / weight)
        total = math.fsum(key_table.values())
        if abs(total - 1.0) > 1e-9:
            raise ConsistencyError(f"branch weights sum to {total!r}, not 1")
        length_dist: dict[int, float] = {}
        for (ka, _kb), w in key_table.items():
            length_dist[len(ka)] = length_dist.get(len(ka), 0.0) + w
        tested_weight = math.fsum(w for w, _ in self.qber_terms)
        if tested_weight > 0.0:
            mean = math.fsum(w * e for w, e in self.qber_terms) / tested_weight
        else:
            mean = None
        qber = QberStats(expected_rate=mean, tested_weight=tested_weight)
        if config.mode == "monte_carlo" and self.qber_terms:
            samples = len(self.qber_terms)
            if mean is not None and samples > 1:
                var = math.fsum(w * (e - mean) ** 2 for w, e in self.qber_terms) / tested_weight
                qber = QberStats(
                    expected_rate=mean,
                    tested_weight=tested_weight,
                    std_error=math.sqrt(var / samples),
                    samples=samples,
                )
        return QkdRunRecord(
            config=config,
            eve=eve,
            key_table=key_table,
            length_dist=length_dist,
            eve_states=eve_states,
            qber=qber,
            rho_ab_signal=channel_to_ent_pair(eve),
        )


def _kron_chain(parts: list[np.ndarray]) -> np.ndarray:
    out = None
    for p in parts:
        out = p if out is None else np.kron(out, p)
    if out is None:
        return np.array([1.0])
    return out


def run_protocol(config: ProtocolConfig, eve: EveStrategy) -> QkdRunRecord:
    """Run the protocol and return its complete record.

    Exact mode enumerates every classical branch with exact weights; Monte
    Carlo samples branches (the per-branch adversary states stay exact).
    """
    if eve.probe_dim**config.n > PROBE_DIM_CAP:
        raise CapacityError(
            f"probe register dimension {eve.probe_dim**config.n} exceeds the cap of {PROBE_DIM_CAP}"
        )
    _feasibility_check(config)
    model = _SignalModel(eve)
    hashes = _toeplitz_hashes(config)
    if config.mode == "exact":
        _exact_guards(config, eve)
        return _run_exact(config, eve, model, hashes)
    return _run_monte_carlo(config, eve, model, hashes)


def _branch_setup(
    model: _SignalModel,
    alpha_bits: tuple[int, ...],
    beta_bits: tuple[int, ...],
    tested: tuple[int, ...],
    kept: tuple[int, ...],
    unsifted: tuple[int, ...],
):
    """Shared per-(bases, test set) pieces for the exact enumeration."""
    tested_opts = [model.options(alpha_bits[i], beta_bits[i]) for i in tested]
    kept_opts = [model.options(alpha_bits[i], beta_bits[i]) for i in kept]
    unsift_block = _kron_chain([model.agg[(alpha_bits[i], beta_bits[i])] for i in unsifted])
    kept_agg_block = _kron_chain([model.agg[(alpha_bits[i], beta_bits[i])] for i in kept])
    return tested_opts, kept_opts, unsift_block, kept_agg_block


def _run_exact(
    config: ProtocolConfig,
    eve: EveStrategy,
    model: _SignalModel,
    hashes: dict[int, np.ndarray],
) -> QkdRunRecord:
    n = config.n
    acc = _Accumulator(model, n)
    pass_min = max(config.m_out, 1)
    base_w = 0.25**n
    key_cache: dict[int, list[str]] = {}

    for alpha in range(2**n):
        alpha_bits = tuple((alpha >> (n - 1 - i)) & 1 for i in range(n))
        for beta in range(2**n):
            beta_bits = tuple((beta >> (n - 1 - i)) & 1 for i in range(n))
            sifted = tuple(i for i in range(n) if alpha_bits[i] == beta_bits[i])
            s = len(sifted)
            t = _round_test_size(config.test_fraction, s)
            r = s - t
            if r < pass_min:
                # Abort at sifting: too few kept bits regardless of testing.
                block = _kron_chain([model.agg[(alpha_bits[i], beta_bits[i])] for i in range(n)])
                acc.add(("", ""), (alpha, beta, (), (), 0), base_w, block)
                continue
            m = config.m_out if config.m_out > 0 else r
            if r not in key_cache:
                key_cache[r] = _key_strings(hashes, config.m_out, r)
            unsifted = tuple(i for i in range(n) if alpha_bits[i] != beta_bits[i])
            w_subset = base_w / math.comb(s, t)
            for tested in itertools.combinations(sifted, t):
                kept = tuple(i for i in sifted if i not in tested)
                tested_opts, kept_opts, unsift_block, kept_agg_block = _branch_setup(
                    model, alpha_bits, beta_bits, tested, kept, unsifted
                )
                # The option blocks already carry the per-branch weights
                # (each has trace 0.5 * p), so accumulation multiplies only
                # by the (bases, subset) weight.  Kept-side blocks are built
                # once and reused across every announcement branch.
                keys = key_cache[r]
                rest: list[tuple[str, str, np.ndarray]] = []
                for combo in itertools.product(*kept_opts):
                    a_pattern = 0
                    b_pattern = 0
                    for c in combo:
                        a_pattern = (a_pattern << 1) | c[0]
                        b_pattern = (b_pattern << 1) | c[1]
                    rest.append(
                        (
                            keys[a_pattern],
                            keys[b_pattern],
                            np.kron(_kron_chain([c[3] for c in combo]), unsift_block),
                        )
                    )
                abort_rest = np.kron(kept_agg_block, unsift_block)
                for ann in itertools.product(*tested_opts):
                    w_a = math.prod(c[2] for c in ann) if ann else 1.0
                    errors = sum(1 for c in ann if c[0] != c[1])
                    ann_label = tuple(2 * c[0] + c[1] for c in ann)
                    tested_block = _kron_chain([c[3] for c in ann])
                    if t > 0:
                        acc.qber_terms.append((w_subset * w_a, errors / t))
                    if t > 0 and errors / t > config.qber_threshold:
                        label = (alpha, beta, tested, ann_label, 0)
                        acc.add(("", ""), label, w_subset, np.kron(tested_block, abort_rest))
                        continue
                    label = (alpha, beta, tested, ann_label, m)
                    for key_a, key_b, rest_block in rest:
                        acc.add((key_a, key_b), label, w_subset, np.kron(tested_block, rest_block))
    return acc.finish(config, eve)


def _run_monte_carlo(
    config: ProtocolConfig,
    eve: EveStrategy,
    model: _SignalModel,
    hashes: dict[int, np.ndarray],
) -> QkdRunRecord:
    n = config.n
    acc = _Accumulator(model, n)
    pass_min = max(config.m_out, 1)
    rng = np.random.default_rng((config.seed, 23))
    w_trial = 1.0 / config.trials
    key_cache: dict[tuple[int, int], list[str]] = {}
    combo_cache: dict[tuple[int, int], list[tuple[int, ...]]] = {}

    alphas = rng.integers(0, 2, size=(config.trials, n))
    alice_bits = rng.integers(0, 2, size=(config.trials, n))
    betas = rng.integers(0, 2, size=(config.trials, n))
    outcome_u = rng.random(size=(config.trials, n))
    subset_u = rng.random(size=config.trials)

    for trial in range(config.trials):
        alpha_bits = tuple(int(v) for v in alphas[trial])
        beta_bits = tuple(int(v) for v in betas[trial])
        a_bits = tuple(int(v) for v in alice_bits[trial])
        b_bits = []
        for i in range(n):
            p1 = model.prob[(a_bits[i], alpha_bits[i], beta_bits[i], 1)]
            p0 = model.prob[(a_bits[i], alpha_bits[i], beta_bits[i], 0)]
            b_bits.append(1 if outcome_u[trial, i] * (p0 + p1) >= p0 else 0)
        b_bits = tuple(b_bits)
        sifted = tuple(i for i in range(n) if alpha_bits[i] == beta_bits[i])
        s = len(sifted)
        t = _round_test_size(config.test_fraction, s)
        r = s - t
        alpha = int("".join(str(v) for v in alpha_bits), 2)
        beta = int("".join(str(v) for v in beta_bits), 2)
        if r < pass_min:
            block = _kron_chain([model.agg[(alpha_bits[i], beta_bits[i])] for i in range(n)])
            acc.add(("", ""), (alpha, beta, (), (), 0), w_trial, block)
            continue
        if (s, t) not in combo_cache:
            combo_cache[(s, t)] = list(itertools.combinations(range(s), t))
        combos = combo_cache[(s, t)]
        picked = combos[int(subset_u[trial] * len(combos))]
        tested = tuple(sifted[j] for j in picked)
        kept = tuple(i for i in sifted if i not in tested)
        unsifted = tuple(i for i in range(n) if alpha_bits[i] != beta_bits[i])
        m = config.m_out if config.m_out > 0 else r
        cache_key = (config.m_out, r)
        if cache_key not in key_cache:
            key_cache[cache_key] = _key_strings(hashes, config.m_out, r)
        keys = key_cache[cache_key]

        unsift_block = _kron_chain([model.agg[(alpha_bits[i], beta_bits[i])] for i in unsifted])
        errors = sum(1 for i in tested if a_bits[i] != b_bits[i])
        ann_label = tuple(2 * a_bits[i] + b_bits[i] for i in tested)
        # The announced and kept signals are conditioned on the sampled bits;
        # their blocks are the exact per-branch conditional states.
        tested_block = _kron_chain(
            [model.block[(a_bits[i], alpha_bits[i], beta_bits[i], b_bits[i])] for i in tested]
        )
        if t > 0:
            acc.qber_terms.append((w_trial, errors / t))
        if t > 0 and errors / t > config.qber_threshold:
            kept_agg_block = _kron_chain([model.agg[(alpha_bits[i], beta_bits[i])] for i in kept])
            block = np.kron(tested_block, np.kron(kept_agg_block, unsift_block))
            acc.add(("", ""), (alpha, beta, tested, ann_label, 0), w_trial, _normalize_branch(block))
            continue
        kept_block = _kron_chain(
            [model.block[(a_bits[i], alpha_bits[i], beta_bits[i], b_bits[i])] for i in kept]
        )
        a_pattern = 0
        b_pattern = 0
        for i in kept:
            a_pattern = (a_pattern << 1) | a_bits[i]
            b_pattern = (b_pattern << 1) | b_bits[i]
        label = (alpha, beta, tested, ann_label, m)
        block = np.kron(tested_block, np.kron(kept_block, unsift_block))
        acc.add((keys[a_pattern], keys[b_pattern]), label, w_trial, _normalize_branch(block))
    return acc.finish(config, eve)


def _normalize_branch(block: np.ndarray) -> np.ndarray:
    """Scale a sampled branch's block to unit weight.

    Exact mode weights each branch by its joint probability, which the block
    trace already carries; Monte Carlo weights every sampled branch 1/trials,
    so the conditional block must be normalized first.
    """
    if block.ndim == 1:
        tr = float(block.sum())
    else:
        tr = float(np.real(np.trace(block)))
    if tr <= 0.0:
        raise ValueError("sampled branch has zero weight")
    return block / tr


def phi_pair() -> DensityMatrix:
    """The maximally correlated two-qubit reference state."""
    vec = np.zeros(4, dtype=complex)
    vec[0] = SQRT_HALF
    vec[3] = SQRT_HALF
    return DensityMatrix(np.outer(vec, vec.conj()), (2, 2))


def channel_to_ent_pair(eve: EveStrategy) -> DensityMatrix:
    """Send half of the reference pair through the adversary's channel.

    Returns the joint state of Alice's kept qubit and the signal Bob
    receives, with the probe traced out.
    """
    phi = phi_pair()
    channel = eve.kraus_channel()
    dp = eve.probe_dim
    lifted = KrausChannel(
        [np.kron(np.eye(2, dtype=complex), k) for k in channel.operators],
        out_dims=(2, 2, dp) if dp > 1 else (2, 2),
    )
    out = apply_channel(phi, lifted)
    if dp == 1:
        return out
    return partial_trace(out, keep=[0, 1])


def singlet_fidelity(rho_ab: DensityMatrix, m: int = 1) -> float:
    """Fidelity of rho_ab with the reference pair, raised to the m-th power.

    Fidelity is multiplicative over tensor powers, so this is the fidelity
    of m independent pair uses with the ideal product.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    return fidelity(rho_ab, phi_pair()) ** m


def build_game_states(record: QkdRunRecord) -> GameStates:
    """Assemble the real, ideal, and hybrid states of the security game.

    All four share the abort cell, which therefore cancels in every
    distance between them.  Raises if some length-m key pair (k, k) was
    never realized: the transcript-conditioned hybrid is undefined there.
    """
    real_cells = {
        cell: (w, record.eve_states[cell]) for cell, w in sorted(record.key_table.items())
    }
    rho_qkd = KeyedState(real_cells)

    lengths = sorted(m for m in record.length_dist if m > 0)
    eve_avg: dict[int, BlockDiagState] = {}
    eve_cond: dict[int, BlockDiagState] = {}
    for m in lengths:
        pr_m = record.length_dist[m]
        diag_cells = []
        for k in _all_keys(m):
            cell = (k, k)
            if cell not in record.eve_states:
                raise ValueError(
                    f"key pair ({k!r}, {k!r}) has zero probability; "
                    "the per-key adversary state is undefined"
                )
            diag_cells.append((2.0**-m, record.eve_states[cell]))
        eve_avg[m] = mix(diag_cells)
        cond_cells = [
            (w / pr_m, record.eve_states[cell])
            for cell, w in sorted(record.key_table.items())
            if len(cell[0]) == m
        ]
        eve_cond[m] = mix(cond_cells)

    abort = []
    if ("", "") in record.key_table:
        abort = [(("", ""), (record.key_table[("", "")], record.eve_states[("", "")]))]

    def ideal_cells(state_for) -> KeyedState:
        cells = dict(abort)
        for m in lengths:
            w = record.length_dist[m] * 2.0**-m
            for k in _all_keys(m):
                cells[(k, k)] = (w, state_for(m, k))
        return KeyedState(cells)

    rho_ideal = ideal_cells(lambda m, k: eve_cond[m])
    rho_hybrid_cond = ideal_cells(lambda m, k: record.eve_states[(k, k)])
    rho_hybrid_avg = ideal_cells(lambda m, k: eve_avg[m])
    return GameStates(
        rho_qkd=rho_qkd,
        rho_ideal=rho_ideal,
        rho_hybrid_cond=rho_hybrid_cond,
        rho_hybrid_avg=rho_hybrid_avg,
        eve_avg_by_len=eve_avg,
        eve_cond_by_len=eve_cond,
        length_dist=dict(record.length_dist),
    )


def _all_keys(m: int) -> list[str]:
    return ["".join(bits) for bits in itertools.product("01", repeat=m)]
