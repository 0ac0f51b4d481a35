"""Security functionals and the certified inequality rows."""

import math

import pytest

from qkdlab import (
    EveStrategy,
    ProtocolConfig,
    build_game_states,
    certify,
    run_protocol,
    trace_distance,
)
from qkdlab.bounds import (
    eps_composable,
    eps_privacy,
    keywise_privacy,
    mu1_uniformity,
    mu2_fidelity,
    mu2_privacy,
    triangle_decomposition,
)
from qkdlab.cqstate import densify, trace_norm

LN2 = math.log(2.0)


def run(eve, thr=0.0, n=4, seed=7, m_out=1):
    cfg = ProtocolConfig(n=n, test_fraction=0.5, qber_threshold=thr, m_out=m_out, seed=seed)
    return run_protocol(cfg, eve)


@pytest.fixture(scope="module")
def ir_full():
    record = run(EveStrategy("intercept_resend", p=1.0))
    game = build_game_states(record)
    return record, game, certify(record, game)


@pytest.fixture(scope="module")
def no_attack():
    record = run(EveStrategy("none"))
    game = build_game_states(record)
    return record, game, certify(record, game)


class TestNoAttackIsExactlySecure:
    def test_defects_vanish(self, no_attack):
        record, game, report = no_attack
        assert report.mu1 <= 1e-12
        assert report.mu2_chi <= 1e-12
        assert report.mu2_fid <= 1e-12
        assert report.eps_composable <= 1e-12
        assert report.eps_privacy <= 1e-12

    def test_all_rows_pass(self, no_attack):
        _, _, report = no_attack
        assert report.passed
        assert {r.name for r in report.rows} == {"B1", "B2", "HOL", "FID"}
        assert all(r.passed for r in report.rows)

    def test_max_len_is_one(self, no_attack):
        assert no_attack[2].max_len == 1


class TestFullInterceptRegression:
    """Frozen values for the canonical attack run (enumeration is exact)."""

    def test_mu1(self, ir_full):
        assert ir_full[2].mu1 == pytest.approx(0.3535156249999998, abs=1e-9)

    def test_mu2_chi(self, ir_full):
        assert ir_full[2].mu2_chi == pytest.approx(0.47135416666666463, abs=1e-9)

    def test_mu2_fid(self, ir_full):
        assert ir_full[2].mu2_fid == pytest.approx(0.35351562499999956, abs=1e-7)

    def test_eps_composable(self, ir_full):
        assert ir_full[2].eps_composable == pytest.approx(0.3535156249999998, abs=1e-9)

    def test_eps_privacy(self, ir_full):
        assert ir_full[2].eps_privacy == pytest.approx(0.2356770833333332, abs=1e-9)

    def test_triangle_terms(self, ir_full):
        t1, t2, t3 = ir_full[2].triangle
        assert t1 == pytest.approx(0.1767578124999999, abs=1e-9)
        assert t2 == pytest.approx(0.2356770833333332, abs=1e-9)
        assert t3 == pytest.approx(0.11783854166666657, abs=1e-9)

    def test_row_rhs_follow_from_mu2(self, ir_full):
        report = ir_full[2]
        rows = {r.name: r for r in report.rows}
        assert rows["B1"].rhs == pytest.approx(
            9.0 * math.sqrt(2 * LN2 * report.mu2_chi), rel=1e-12
        )
        assert rows["B2"].rhs == pytest.approx(
            2.0 ** 1.5 * math.sqrt(report.mu2_chi), rel=1e-12
        )
        assert rows["HOL"].rhs == pytest.approx(
            math.sqrt(2 * LN2 * report.mu2_chi), rel=1e-12
        )
        assert rows["FID"].rhs == pytest.approx(math.sqrt(report.mu2_fid), rel=1e-12)

    def test_rows_all_pass(self, ir_full):
        assert ir_full[2].passed

    def test_row_lhs_wiring(self, ir_full):
        report = ir_full[2]
        rows = {r.name: r for r in report.rows}
        hybrid_dist = 2.0 * report.eps_privacy
        for name in ("B1", "B2", "HOL"):
            assert rows[name].lhs == pytest.approx(hybrid_dist, rel=1e-12)
        assert rows["FID"].lhs == pytest.approx(report.eps_composable, rel=1e-12)


class TestFunctionalRelations:
    def test_eps_privacy_equals_keywise_decomposition(self, ir_full):
        record, game, report = ir_full
        assert eps_privacy(game) == pytest.approx(keywise_privacy(game), abs=1e-9)

    def test_triangle_covers_eps(self, ir_full):
        _, game, report = ir_full
        t1, t2, t3 = triangle_decomposition(game)
        assert t1 + t2 + t3 >= report.eps_composable - 1e-9

    def test_outer_triangle_terms_within_mu1(self, ir_full):
        _, _, report = ir_full
        t1, _, t3 = report.triangle
        assert t1 + t3 <= report.mu1 + 1e-7

    def test_functionals_match_report(self, ir_full):
        record, game, report = ir_full
        assert mu1_uniformity(record) == report.mu1
        assert mu2_privacy(record, game) == report.mu2_chi
        assert mu2_fidelity(record) == report.mu2_fid
        assert eps_composable(game) == report.eps_composable

    def test_mu2_rejects_unknown_measure(self, ir_full):
        record, game, _ = ir_full
        with pytest.raises(ValueError, match="measure"):
            mu2_privacy(record, game, measure="oracle")


class TestFamilyRows:
    def test_informational_rows_added(self, ir_full):
        record, game, _ = ir_full
        report = certify(record, game, include_family_rows=True)
        names = [r.name for r in report.rows]
        assert names == ["B1", "B2", "HOL", "FID", "B1_ACC", "B2_ACC", "HOL_ACC"]
        for r in report.rows:
            assert r.informational == r.name.endswith("_ACC")

    def test_explicit_measurement_lower_bounds_chi(self, ir_full):
        record, game, _ = ir_full
        report = certify(record, game, include_family_rows=True)
        assert report.mu2_acc is not None
        assert report.mu2_acc <= report.mu2_chi + 1e-9

    def test_family_rows_do_not_change_verdict(self, ir_full):
        record, game, _ = ir_full
        with_rows = certify(record, game, include_family_rows=True)
        without = certify(record, game)
        assert with_rows.passed == without.passed
        assert with_rows.mu2_chi == without.mu2_chi

    def test_probe_family_rows_exercise_dense_search(self):
        # A coherent probe has dense blocks, which routes the explicit
        # measurement through the rotation-grid search.
        record = run(EveStrategy("entangling_probe", probe_angle=math.pi / 4), thr=1.0, n=3)
        report = certify(record, include_family_rows=True, angle_steps=8)
        assert report.mu2_acc is not None
        assert 0.0 <= report.mu2_acc <= report.mu2_chi + 1e-9


class TestAttackStrengthOrdering:
    def test_eps_grows_with_probe_angle(self):
        eps = []
        for theta in (0.0, math.pi / 4, math.pi / 2):
            record = run(EveStrategy("entangling_probe", probe_angle=theta), thr=1.0)
            eps.append(eps_composable(build_game_states(record)))
        assert eps[0] <= 1e-12
        assert eps[0] < eps[1] < eps[2]

    def test_eps_grows_with_intercept_rate(self):
        eps = []
        for p in (0.25, 1.0):
            record = run(EveStrategy("intercept_resend", p=p), thr=1.0)
            eps.append(eps_composable(build_game_states(record)))
        assert eps[0] < eps[1]


class TestBlockwiseAgainstDense:
    def test_conditional_vs_average_distance(self):
        # Small enough to densify: the blockwise metric must match the dense
        # one exactly, and both match the closed-form probe overlap.
        cfg = ProtocolConfig(n=2, test_fraction=0.5, qber_threshold=1.0, m_out=1, seed=5)
        record = run_protocol(cfg, EveStrategy("entangling_probe", probe_angle=math.pi / 4))
        game = build_game_states(record)
        cond, avg = game.eve_cond_by_len[1], game.eve_avg_by_len[1]
        d_block = trace_norm(cond, avg)
        dense_cond, order = densify(cond)
        dense_avg, _ = densify(avg, order)
        d_dense = trace_distance(dense_cond, dense_avg)
        assert d_block == pytest.approx(d_dense, abs=1e-10)
        assert d_block == pytest.approx((1.0 - math.cos(math.pi / 4)) / 2.0, abs=1e-12)
