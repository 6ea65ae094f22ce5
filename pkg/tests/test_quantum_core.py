"""Pruebas de ionscatter.quantum_core: estados, métricas, canales y cambios de base."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from ionscatter import quantum_core as qc
from ionscatter.errors import InvalidInputError


class TestStates:

    def test_spin_state_rejects_non_unit_trace(self):
        with pytest.raises(InvalidInputError):
            qc.SpinState(np.eye(2))

    def test_spin_state_rejects_negative_eigenvalue(self):
        with pytest.raises(InvalidInputError):
            qc.SpinState(np.diag([1.2, -0.2]))

    def test_from_matrix_renormalizes_trace(self):
        state = qc.SpinState.from_matrix(np.diag([2.0, 2.0]))
        assert_allclose(state.rho, np.eye(2) / 2)

    def test_bloch_vector_outside_ball_rejected(self):
        with pytest.raises(InvalidInputError):
            qc.BlochVector(1.0, 0.1, 0.0)

    def test_bloch_round_trip_for_cardinal_states(self):
        for label, axis in qc.CARDINAL_AXES.items():
            bloch = qc.density_to_bloch(qc.cardinal_state(label))
            assert_allclose(bloch.as_array(), axis, atol=1e-12)

    def test_unknown_cardinal_label(self):
        with pytest.raises(InvalidInputError):
            qc.cardinal_state("w")

    def test_pointer_frame_maps_x_to_first_basis_vector(self):
        rho = qc.to_pointer_frame(qc.cardinal_state("x").rho)
        assert_allclose(rho, np.diag([1, 0]), atol=1e-12)
        assert_allclose(qc.from_pointer_frame(rho), qc.cardinal_state("x").rho, atol=1e-12)


class TestMetrics:

    def test_purity_of_mixed_state(self):
        assert qc.purity(np.eye(2) / 2) == pytest.approx(0.5)

    def test_entropy_pure_and_mixed(self):
        assert qc.von_neumann_entropy(qc.cardinal_state("z")) == pytest.approx(0.0, abs=1e-12)
        assert qc.von_neumann_entropy(np.eye(2) / 2) == pytest.approx(math.log(2))
        assert qc.von_neumann_entropy(np.eye(2) / 2, units="bits") == pytest.approx(1.0)

    def test_entropy_unknown_units(self):
        with pytest.raises(InvalidInputError):
            qc.von_neumann_entropy(np.eye(2) / 2, units="hartleys")

    def test_fidelity_limits(self):
        x, minus_x, z = (qc.cardinal_state(s) for s in ("x", "-x", "z"))
        assert qc.fidelity(x, x) == pytest.approx(1.0, abs=1e-12)
        assert qc.fidelity(x, minus_x) == pytest.approx(0.0, abs=1e-12)
        assert qc.fidelity(x, z) == pytest.approx(0.5, abs=1e-12)

    def test_concurrence_bell_and_product(self, bell_state):
        assert qc.concurrence(bell_state) == pytest.approx(1.0, abs=1e-9)
        product = qc.joint_from_product(qc.cardinal_state("x"), np.diag([0, 1]))
        assert qc.concurrence(product) == pytest.approx(0.0, abs=1e-9)

    def test_concurrence_of_werner_mixture(self, bell_state):
        """C = max(0, (3w − 1)/2) para w·Bell + (1 − w)·I/4."""
        for w in (0.2, 0.5, 0.875):
            rho = w * bell_state.rho + (1 - w) * np.eye(4) / 4
            assert qc.concurrence(rho) == pytest.approx(max(0.0, (3 * w - 1) / 2), abs=1e-9)

    def test_entropy_is_unitarily_invariant(self, rng):
        for dim in (2, 4):
            for _ in range(10):
                rho = qc.random_density(rng, dim, rank=2)
                u = qc.random_unitary(rng, dim)
                assert qc.von_neumann_entropy(u @ rho @ u.conj().T) == pytest.approx(
                    qc.von_neumann_entropy(rho), abs=1e-9)

    def test_concurrence_is_invariant_under_local_unitaries(self, rng):
        for rank in (1, 1, 2, 2, 3):
            rho = qc.random_density(rng, 4, rank=rank)
            local = np.kron(qc.random_unitary(rng), qc.random_unitary(rng))
            assert qc.concurrence(local @ rho @ local.conj().T) == pytest.approx(qc.concurrence(rho), abs=1e-9)

    def test_partial_traces_of_bell(self, bell_state):
        assert_allclose(qc.partial_trace(bell_state, "spin").rho, np.eye(2) / 2, atol=1e-12)
        assert_allclose(qc.partial_trace(bell_state, "photon").rho, np.eye(2) / 2, atol=1e-12)
        with pytest.raises(InvalidInputError):
            qc.partial_trace(bell_state, "ion")


class TestChannels:

    def test_chi_from_kraus_of_identity(self):
        family = qc.KrausFamily((np.eye(2),), ("I",))
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        assert_allclose(qc.chi_from_kraus(family).chi, expected, atol=1e-12)

    def test_apply_kraus_rejects_non_trace_preserving(self):
        family = qc.KrausFamily((np.eye(2) / 2,), ("half",))
        with pytest.raises(InvalidInputError):
            qc.apply_kraus(family, qc.cardinal_state("z"))

    def test_normalized_scales_globally(self):
        family = qc.KrausFamily((2 * qc.SX, 2 * qc.SZ), ("a", "b")).normalized()
        assert family.is_trace_preserving()
        assert_allclose(family.operator("a"), qc.SX / np.sqrt(2))

    def test_random_channels_agree_in_every_representation(self, rng):
        for _ in range(20):
            family = qc.random_channel(rng, n_kraus=3)
            process = qc.chi_from_kraus(family)
            rho = qc.random_density(rng)
            by_kraus = qc.apply_kraus(family, rho).rho
            assert_allclose(qc.apply_chi(process, rho).rho, by_kraus, atol=1e-12)
            assert process.is_trace_preserving() and process.is_completely_positive()
            affine = qc.chi_to_affine(process)
            assert_allclose(affine.apply(qc.bloch_components(rho)), qc.bloch_components(by_kraus), atol=1e-12)
            rebuilt = qc.chi_from_kraus(qc.kraus_from_chi(process))
            assert_allclose(rebuilt.chi, process.chi, atol=1e-10)

    def test_affine_map_agrees_with_direct_application(self, rng):
        for _ in range(1000):
            process = qc.chi_from_kraus(qc.random_channel(rng))
            rho = qc.random_density(rng)
            direct = qc.apply_chi(process, rho).rho
            affine = qc.chi_to_affine(process)
            assert_allclose(affine.apply(qc.bloch_components(rho)), qc.bloch_components(direct), atol=1e-12)

    def test_superoperator_round_trip(self, rng):
        process = qc.chi_from_kraus(qc.random_channel(rng))
        back = qc.chi_from_superoperator(qc.superoperator_of(process))
        assert_allclose(back.chi, process.chi, atol=1e-12)

    def test_pointer_basis_of_projective_channel(self):
        """ρ → P₊ρP₊ + P₋ρP₋ con P± = (I ± σx)/2 es diag(1, 1, 0, 0) en la base puntero."""
        family = qc.KrausFamily(((qc.I2 + qc.SX) / 2, (qc.I2 - qc.SX) / 2), ("+", "-"))
        process = qc.chi_from_kraus(family)
        assert_allclose(process.chi, np.diag([0.5, 0.5, 0, 0]), atol=1e-12)
        assert_allclose(process.in_basis("pointer").chi, np.diag([1, 1, 0, 0]), atol=1e-12)
        assert_allclose(process.reporting_matrix(), np.diag([0.5, 0.5, 0, 0]), atol=1e-12)
        back = process.in_basis("pointer").in_basis("pauli")
        assert_allclose(back.chi, process.chi, atol=1e-12)

    def test_apply_chi_returns_raw_matrix_when_not_trace_preserving(self):
        process = qc.ProcessMatrix(np.diag([0.25, 0, 0, 0]))
        out = qc.apply_chi(process, qc.cardinal_state("z"))
        assert isinstance(out, np.ndarray)
        assert np.trace(out).real == pytest.approx(0.25)

    def test_process_json_round_trip_keeps_outcome_probability(self):
        process = qc.ProcessMatrix(np.diag([0.5, 0.5, 0, 0]), "pauli", 0.5)
        back = qc.ProcessMatrix.from_json(process.to_json())
        assert_allclose(back.chi, process.chi)
        assert back.outcome_probability == pytest.approx(0.5)

    def test_process_matrix_rejects_unknown_basis(self):
        with pytest.raises(InvalidInputError):
            qc.ProcessMatrix(np.eye(4) / 4, "gell-mann")
