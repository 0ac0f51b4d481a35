"""Density-matrix kernel: construction validation and the algebraic primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ginibre, random_pure
from qkdlab import (
    CapacityError,
    DensityMatrix,
    KrausChannel,
    Povm,
    PureState,
    apply_channel,
    measure,
    partial_trace,
    purify,
    tensor,
)
from qkdlab.qmatrix import EIG_CLAMP, eigh_psd, psd_sqrt


def diag_state(*probs: float) -> DensityMatrix:
    return DensityMatrix(np.diag(np.asarray(probs, dtype=complex)))


class TestDensityMatrixValidation:
    def test_rejects_nonsquare(self):
        with pytest.raises(ValueError, match="square"):
            DensityMatrix(np.ones((2, 3)) / 6)

    def test_rejects_non_hermitian(self):
        m = np.array([[0.5, 0.5], [0.0, 0.5]])
        with pytest.raises(ValueError, match="Hermitian"):
            DensityMatrix(m)

    def test_rejects_bad_trace(self):
        with pytest.raises(ValueError, match="trace"):
            DensityMatrix(np.eye(2))

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValueError, match="negative eigenvalue"):
            diag_state(1.5, -0.5)

    def test_clamps_rounding_scale_negatives(self):
        # -1e-10 is inside the clamp window and must be accepted.
        state = diag_state(1.0 + 1e-10, -1e-10)
        assert state.dim == 2

    def test_rejects_dim_one(self):
        with pytest.raises(ValueError):
            DensityMatrix(np.array([[1.0]]))

    def test_rejects_over_cap(self):
        # 65 * 64 = 4160 > 4096; the check fires before any allocation.
        a = DensityMatrix(np.eye(65) / 65)
        b = DensityMatrix(np.eye(64) / 64)
        with pytest.raises(CapacityError):
            tensor(a, b)
        with pytest.raises(CapacityError):
            PureState(np.zeros(4097))

    def test_subsystem_dims_must_factor(self):
        with pytest.raises(ValueError, match="factor"):
            DensityMatrix(np.eye(4) / 4, subsystem_dims=(3, 2))
        with pytest.raises(ValueError, match=">= 2"):
            DensityMatrix(np.eye(4) / 4, subsystem_dims=(4, 1))

    def test_default_dims_and_with_dims(self):
        rho = DensityMatrix(np.eye(4) / 4)
        assert rho.subsystem_dims == (4,)
        assert rho.with_dims((2, 2)).subsystem_dims == (2, 2)

    def test_data_is_frozen(self):
        rho = diag_state(0.5, 0.5)
        with pytest.raises(ValueError):
            rho.data[0, 0] = 0.9


class TestPureState:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="norm"):
            PureState([1.0, 1.0])

    def test_to_density_is_projector(self):
        vec = random_pure(np.random.default_rng(3), 4)
        rho = PureState(vec).to_density((2, 2))
        assert rho.subsystem_dims == (2, 2)
        np.testing.assert_allclose(rho.data @ rho.data, rho.data, atol=1e-12)


class TestKrausChannel:
    def test_rejects_non_trace_preserving(self):
        with pytest.raises(ValueError, match="trace preserving"):
            KrausChannel([np.eye(2) * 0.9])

    def test_rejects_mixed_shapes(self):
        with pytest.raises(ValueError, match="share one shape"):
            KrausChannel([np.eye(2), np.zeros((3, 2))])

    def test_apply_matches_manual_sum(self):
        rng = np.random.default_rng(5)
        rho = ginibre(rng, 2)
        # Amplitude damping, gamma = 0.3.
        g = 0.3
        k0 = np.array([[1.0, 0.0], [0.0, np.sqrt(1 - g)]])
        k1 = np.array([[0.0, np.sqrt(g)], [0.0, 0.0]])
        chan = KrausChannel([k0, k1])
        out = apply_channel(rho, chan)
        manual = k0 @ rho.data @ k0.conj().T + k1 @ rho.data @ k1.conj().T
        np.testing.assert_allclose(out.data, manual, atol=1e-12)

    def test_rectangular_channel_changes_dimension(self):
        # Isometry |b> -> |b>|b> on a qubit.
        v = np.zeros((4, 2))
        v[0, 0] = 1.0
        v[3, 1] = 1.0
        chan = KrausChannel([v], out_dims=(2, 2))
        out = apply_channel(diag_state(0.25, 0.75), chan)
        assert out.dim == 4 and out.subsystem_dims == (2, 2)
        np.testing.assert_allclose(np.diag(out.data).real, [0.25, 0, 0, 0.75], atol=1e-12)

    def test_dim_mismatch_raises(self):
        chan = KrausChannel([np.eye(2)])
        with pytest.raises(ValueError, match="dimension"):
            apply_channel(ginibre(np.random.default_rng(1), 3), chan)


class TestPovmAndMeasure:
    def test_rejects_incomplete(self):
        with pytest.raises(ValueError, match="identity"):
            Povm([np.diag([1.0, 0.0])])

    def test_rejects_negative_element(self):
        with pytest.raises(ValueError, match="negative eigenvalue"):
            Povm([np.diag([1.5, 1.0]), np.diag([-0.5, 0.0])])

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(7)
        rho = ginibre(rng, 2)
        povm = Povm([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
        outs = measure(rho, povm)
        assert abs(sum(o.probability for o in outs) - 1.0) < 1e-12

    def test_projective_post_state(self):
        povm = Povm([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
        outs = measure(diag_state(0.25, 0.75), povm)
        assert outs[0].probability == pytest.approx(0.25, abs=1e-12)
        np.testing.assert_allclose(outs[0].post_state.data, np.diag([1.0, 0.0]), atol=1e-12)

    def test_zero_probability_outcome_has_no_post_state(self):
        povm = Povm([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
        outs = measure(diag_state(1.0, 0.0), povm)
        assert outs[1].probability == 0.0
        assert outs[1].post_state is None


class TestPartialTrace:
    def test_matches_einsum_oracle(self):
        rng = np.random.default_rng(11)
        rho = ginibre(rng, 4).with_dims((2, 2))
        t = rho.data.reshape(2, 2, 2, 2)
        np.testing.assert_allclose(
            partial_trace(rho, [0]).data, np.einsum("ikjk->ij", t), atol=1e-12
        )
        np.testing.assert_allclose(
            partial_trace(rho, [1]).data, np.einsum("kikj->ij", t), atol=1e-12
        )

    def test_product_state_factors(self):
        rng = np.random.default_rng(13)
        a, b = ginibre(rng, 2), ginibre(rng, 3)
        joint = tensor(a, b)
        np.testing.assert_allclose(partial_trace(joint, [0]).data, a.data, atol=1e-12)
        np.testing.assert_allclose(partial_trace(joint, [1]).data, b.data, atol=1e-12)

    def test_keep_all_is_identity(self):
        rho = ginibre(np.random.default_rng(17), 4).with_dims((2, 2))
        np.testing.assert_allclose(partial_trace(rho, [0, 1]).data, rho.data)

    def test_three_party_middle_trace(self):
        rng = np.random.default_rng(19)
        parts = [ginibre(rng, 2) for _ in range(3)]
        joint = tensor(tensor(parts[0], parts[1]), parts[2])
        got = partial_trace(joint, [0, 2])
        np.testing.assert_allclose(got.data, tensor(parts[0], parts[2]).data, atol=1e-12)

    def test_rejects_empty_and_out_of_range(self):
        rho = ginibre(np.random.default_rng(23), 4).with_dims((2, 2))
        with pytest.raises(ValueError):
            partial_trace(rho, [])
        with pytest.raises(ValueError, match="out of range"):
            partial_trace(rho, [2])


class TestSpectralHelpers:
    def test_eigh_psd_clamps_window(self):
        w, _ = eigh_psd(np.diag([1.0, -1e-10]))
        assert w[0] == 0.0

    def test_eigh_psd_rejects_below_clamp(self):
        with pytest.raises(ValueError):
            eigh_psd(np.diag([1.0, 2 * EIG_CLAMP]))

    def test_psd_sqrt_squares_back(self):
        rng = np.random.default_rng(29)
        m = ginibre(rng, 4).data * 3.0
        root = psd_sqrt(m)
        np.testing.assert_allclose(root @ root, m, atol=1e-10)

    def test_purify_roundtrip(self):
        rho = ginibre(np.random.default_rng(31), 3)
        psi = purify(rho)
        joint = psi.to_density((3, 3))
        np.testing.assert_allclose(partial_trace(joint, [0]).data, rho.data, atol=1e-9)

    def test_purify_is_deterministic(self):
        rho = ginibre(np.random.default_rng(37), 4)
        np.testing.assert_array_equal(purify(rho).amplitudes, purify(rho).amplitudes)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), da=st.integers(2, 3), db=st.integers(2, 3))
def test_partial_trace_preserves_trace_and_positivity(seed, da, db):
    rng = np.random.default_rng(seed)
    joint = ginibre(rng, da * db).with_dims((da, db))
    reduced = partial_trace(joint, [0])
    # DensityMatrix construction revalidates trace and positivity.
    assert reduced.dim == da
    assert abs(np.trace(reduced.data).real - 1.0) < 1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_purification_is_pure(seed):
    rho = ginibre(np.random.default_rng(seed), 3)
    vec = purify(rho).amplitudes
    assert abs(np.linalg.norm(vec) - 1.0) < 1e-10
