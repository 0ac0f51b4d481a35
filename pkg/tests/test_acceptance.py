"""Acceptance gate: ten numbered end-to-end checks.

Each test computes its verdict and a one-line detail first, records both for
the terminal summary, and only then asserts, so every criterion reports its
state even when another one fails.  Tolerances and wall-clock budgets are
part of each check.
"""

import json
import math
import random
import time

import numpy as np
import pytest

from conftest import ginibre, record_criterion
from qkdlab import (
    CqEnsemble,
    EveStrategy,
    MeasurementFamilyConfig,
    ProtocolConfig,
    accessible_info_estimate,
    build_game_states,
    certify,
    fidelity,
    relative_entropy,
    run_protocol,
    shannon_distinguishability,
    trace_distance,
    von_neumann_entropy,
)
from qkdlab.cli import main
from qkdlab.compose import CompositionNode, CompositionTree, repeated_qkd, tree_total
from qkdlab.qkdsim import channel_to_ent_pair, phi_pair

LN2 = math.log(2.0)

ATTACKS = (
    ("intercept p=0.25", EveStrategy("intercept_resend", p=0.25)),
    ("intercept p=0.50", EveStrategy("intercept_resend", p=0.5)),
    ("intercept p=1.00", EveStrategy("intercept_resend", p=1.0)),
    ("probe pi/8", EveStrategy("entangling_probe", probe_angle=math.pi / 8)),
    ("probe pi/4", EveStrategy("entangling_probe", probe_angle=math.pi / 4)),
    ("probe 3pi/8", EveStrategy("entangling_probe", probe_angle=3 * math.pi / 8)),
)


def base_config(**kw) -> ProtocolConfig:
    args = dict(n=4, test_fraction=0.5, qber_threshold=0.25, m_out=1, seed=7)
    args.update(kw)
    return ProtocolConfig(**args)


@pytest.fixture(scope="module")
def attack_runs():
    """Certified runs for the six-attack grid, plus their build time."""
    t0 = time.perf_counter()
    runs = []
    for label, eve in ATTACKS:
        record = run_protocol(base_config(), eve)
        game = build_game_states(record)
        runs.append((label, record, game, certify(record, game)))
    return runs, time.perf_counter() - t0


def test_chi_entropy_and_divergence_forms_agree():
    # chi computed as an entropy difference must equal the weighted
    # divergence of members from the average.
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        dim = int(rng.integers(2, 5))
        k = int(rng.integers(1, 5))
        probs = tuple(rng.dirichlet(np.ones(k)))
        states = tuple(ginibre(rng, dim, rank=int(rng.integers(1, dim + 1))) for _ in range(k))
        ens = CqEnsemble(probs, states)
        avg = ens.average()
        chi_ent = von_neumann_entropy(avg) - math.fsum(
            q * von_neumann_entropy(s) for q, s in zip(probs, states)
        )
        chi_div = math.fsum(q * relative_entropy(s, avg) for q, s in zip(probs, states))
        worst = max(worst, abs(chi_ent - chi_div))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 10.0
    record_criterion(
        1, ok, f"max form gap {worst:.2e} over 100 ensembles (tol 1e-8), {elapsed:.1f}s"
    )
    assert ok


def test_trace_distance_squared_within_scaled_divergence():
    # ||a-b||_1^2 <= 2 ln2 * S(a||b) for nested-support pairs.
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    worst = -math.inf
    for _ in range(200):
        dim = int(rng.integers(2, 5))
        b = ginibre(rng, dim)
        a = ginibre(rng, dim, rank=int(rng.integers(1, dim + 1)))
        margin = trace_distance(a, b) ** 2 - 2.0 * LN2 * relative_entropy(a, b)
        worst = max(worst, margin)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-7 and elapsed < 10.0
    record_criterion(
        2, ok, f"worst margin {worst:+.2e} over 200 pairs (tol 1e-7), {elapsed:.1f}s"
    )
    assert ok


def test_trace_distance_within_twice_sqrt_distinguishability():
    # Stated bound: ||a-b||_1 <= 2 sqrt(SD(a,b)).  Checked as written.
    rng = np.random.default_rng(303)
    cfg = MeasurementFamilyConfig(grid_size=2000, refinement_rounds=2, seed=0)
    t0 = time.perf_counter()
    violations = 0
    worst = -math.inf
    for _ in range(100):
        a = ginibre(rng, 2, rank=int(rng.integers(1, 3)))
        b = ginibre(rng, 2, rank=int(rng.integers(1, 3)))
        sd = shannon_distinguishability(a, b, cfg)
        margin = trace_distance(a, b) - 2.0 * math.sqrt(sd)
        worst = max(worst, margin)
        if margin > 1e-3:
            violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 60.0
    record_criterion(
        3,
        ok,
        f"{violations}/100 qubit pairs violate ||a-b||_1 <= 2 sqrt(SD) + 1e-3, "
        f"worst margin {worst:+.2e}, {elapsed:.1f}s",
    )
    assert ok


def test_weighted_member_distinguishability_within_accessible_info():
    # q_x SD(rho_x, avg) <= I_acc for every member, both sides searched over
    # the same fixed direction grid (no refinement, so the grids coincide).
    rng = np.random.default_rng(404)
    cfg = MeasurementFamilyConfig(grid_size=2000, refinement_rounds=0, seed=0)
    t0 = time.perf_counter()
    worst = -math.inf
    for _ in range(50):
        k = int(rng.integers(2, 5))
        probs = tuple(rng.dirichlet(np.ones(k)))
        states = tuple(ginibre(rng, 2, rank=int(rng.integers(1, 3))) for _ in range(k))
        ens = CqEnsemble(probs, states)
        avg = ens.average()
        acc = accessible_info_estimate(ens, cfg).lower
        for q, s in zip(probs, states):
            margin = q * shannon_distinguishability(s, avg, cfg) - acc
            worst = max(worst, margin)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-7 and elapsed < 120.0
    record_criterion(
        4, ok, f"worst margin {worst:+.2e} over 50 ensembles (tol 1e-7), {elapsed:.1f}s"
    )
    assert ok


def test_no_attack_run_is_exactly_secure():
    t0 = time.perf_counter()
    record = run_protocol(base_config(), EveStrategy("none"))
    report = certify(record)
    elapsed = time.perf_counter() - t0
    rows_ok = report.passed and all(r.passed for r in report.rows)
    ok = (
        report.mu1 <= 1e-9
        and report.mu2_chi <= 1e-9
        and report.eps_composable <= 1e-9
        and rows_ok
        and elapsed < 30.0
    )
    record_criterion(
        5,
        ok,
        f"mu1={report.mu1:.1e} mu2={report.mu2_chi:.1e} eps={report.eps_composable:.1e} "
        f"rows {'pass' if rows_ok else 'FAIL'}, {elapsed:.1f}s",
    )
    assert ok


def test_attack_grid_bound_rows_hold(attack_runs):
    runs, elapsed = attack_runs
    failures = []
    for label, _, _, report in runs:
        rows = {r.name: r for r in report.rows}
        for name in ("B1", "B2", "HOL", "FID"):
            if rows[name].lhs > rows[name].rhs + 1e-7:
                failures.append(f"{label}:{name}")
        ordered = (
            report.eps_privacy <= rows["B2"].rhs + 1e-12
            and rows["B2"].rhs <= rows["B1"].rhs + 1e-12
        )
        if not ordered:
            failures.append(f"{label}:ordering")
    ok = not failures and elapsed < 300.0
    detail = (
        f"24 rows across 6 attacks hold at 1e-7, eps_privacy <= B2 <= B1, {elapsed:.1f}s"
        if not failures
        else "failed: " + ", ".join(failures)
    )
    record_criterion(6, ok, detail)
    assert ok


def test_intercept_qber_is_one_quarter():
    t0 = time.perf_counter()
    eve = EveStrategy("intercept_resend", p=1.0)
    exact = run_protocol(base_config(qber_threshold=1.0), eve)
    exact_ok = exact.qber.expected_rate == 0.25
    mc = run_protocol(
        base_config(qber_threshold=1.0, mode="monte_carlo", trials=100_000), eve
    )
    sigmas = abs(mc.qber.expected_rate - 0.25) / mc.qber.std_error
    elapsed = time.perf_counter() - t0
    ok = exact_ok and sigmas <= 3.0 and elapsed < 60.0
    record_criterion(
        7,
        ok,
        f"exact rate {exact.qber.expected_rate!r} (== 0.25: {exact_ok}), "
        f"monte carlo off by {sigmas:.2f} sigma at 1e5 trials, {elapsed:.1f}s",
    )
    assert ok


def test_fidelity_route_and_pair_overlap(attack_runs):
    runs, _ = attack_runs
    t0 = time.perf_counter()
    route_worst = -math.inf
    for _, _, _, report in runs:
        route_worst = max(route_worst, report.eps_composable - math.sqrt(report.mu2_fid))
    route_ok = route_worst <= 1e-7

    # Independent enumeration of the measure-and-resend channel acting on
    # half a reference pair: four branches, one rank-1 projector per basis
    # and outcome, each weighted by the basis coin.
    z0 = np.array([1.0, 0.0], dtype=complex)
    z1 = np.array([0.0, 1.0], dtype=complex)
    x0 = (z0 + z1) / math.sqrt(2.0)
    x1 = (z0 - z1) / math.sqrt(2.0)
    phi = np.zeros(4, dtype=complex)
    phi[0] = phi[3] = 1.0 / math.sqrt(2.0)
    eye = np.eye(2, dtype=complex)
    rho = np.zeros((4, 4), dtype=complex)
    for vec in (z0, z1, x0, x1):
        branch = np.kron(eye, np.outer(vec, vec.conj()) / math.sqrt(2.0)) @ phi
        rho += np.outer(branch, branch.conj())
    oracle_f = float(np.real(phi.conj() @ rho @ phi))

    package_f = fidelity(channel_to_ent_pair(EveStrategy("intercept_resend", p=1.0)), phi_pair())
    agree = abs(package_f - oracle_f) <= 1e-9
    target_ok = abs(package_f - 0.375) <= 1e-9
    elapsed = time.perf_counter() - t0
    ok = route_ok and agree and target_ok
    record_criterion(
        8,
        ok,
        f"route margin {route_worst:+.2e}; pair overlap {package_f:.12g} "
        f"(enumeration {oracle_f:.12g}, required 0.375 within 1e-9), {elapsed:.1f}s",
    )
    assert ok


def test_composition_budgets_are_exact_sums():
    t0 = time.perf_counter()
    exact_ok = repeated_qkd(3, 0.01, 0.001) == 0.033
    rnd = random.Random(909)
    sum_ok = True
    perm_ok = True
    for _ in range(100):
        size = rnd.randint(1, 20)
        nodes = [CompositionNode("n0", "root", rnd.uniform(0.0, 0.1))]
        for i in range(1, size):
            nodes.append(
                CompositionNode(f"n{i}", f"n{i}", rnd.uniform(0.0, 0.1), f"n{rnd.randrange(i)}")
            )
        total = tree_total(CompositionTree(nodes))
        if total != math.fsum(n.eps for n in nodes):
            sum_ok = False
        shuffled = nodes[:]
        rnd.shuffle(shuffled)
        if tree_total(CompositionTree(shuffled)) != total:
            perm_ok = False
    elapsed = time.perf_counter() - t0
    ok = exact_ok and sum_ok and perm_ok and elapsed < 1.0
    record_criterion(
        9,
        ok,
        f"repeated(3, 0.01, 0.001) == 0.033: {exact_ok}; node-sum and shuffle "
        f"invariance over 100 trees: {sum_ok and perm_ok}; {elapsed:.2f}s",
    )
    assert ok


def test_certify_output_is_byte_deterministic(tmp_path, capsys):
    scenario = {
        "protocol": {"n": 4, "test_fraction": 0.5, "qber_threshold": 0.25, "m_out": 1, "seed": 7},
        "eve": {"kind": "intercept_resend", "p": 0.5},
    }
    path = tmp_path / "determinism.json"
    path.write_text(json.dumps(scenario))
    argv = ["certify", "--scenario", str(path)]
    codes, outs = [], []
    for extra in ([], [], ["--threads", "8"]):
        codes.append(main(argv + extra))
        outs.append(capsys.readouterr().out)
    ok = codes == [0, 0, 0] and len(outs[0]) > 0 and outs[0] == outs[1] == outs[2]
    record_criterion(
        10, ok, f"{len(outs[0])} bytes identical across reruns and --threads 1 vs 8"
    )
    assert ok
