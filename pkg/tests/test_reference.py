import math

import numpy as np
import pytest

from helpers import random_density
from wavemc.hilbert import build_annihilation, build_number, build_position, check_density, trace_distance
from wavemc.model import ModelSpec
from wavemc.models import preset_oscillator, preset_qubit_decay
from wavemc.noise import NoiseStreams
from wavemc.reference import me_step, sme_step_direct, sme_step_normalized_euler
from wavemc.steppers import DecoherenceChannel, HamiltonianNoiseChannel, MeasurementChannel


def measurement_model(dim, m_op, k):
    return ModelSpec(dim=dim, hamiltonian=np.zeros((dim, dim)), measurements=[MeasurementChannel(m_op, k)])


class TestTrivialIdentities:
    def test_all_rates_zero(self):
        model = ModelSpec(
            dim=2,
            hamiltonian=np.zeros((2, 2)),
            decoherence=[DecoherenceChannel(build_annihilation(2), 0.0)],
            measurements=[MeasurementChannel(build_number(2), 0.0)],
        )
        rho = np.diag([0.5, 0.5]).astype(complex)
        for stepped in (
            sme_step_direct(rho, model, [0.3], 0.01),
            sme_step_normalized_euler(rho, model, [0.3], 0.01),
            me_step(rho, model, 0.01),
        ):
            np.testing.assert_array_equal(stepped, rho)

    def test_commuting_hamiltonian_leaves_diagonal(self):
        model = ModelSpec(dim=3, hamiltonian=2.0 * math.pi * build_number(3))
        rho = np.diag([0.25, 0.5, 0.25]).astype(complex)
        np.testing.assert_array_equal(me_step(rho, model, 1e-3), rho)

    def test_maximally_mixed_stationary_under_hermitian_dissipator(self):
        model = ModelSpec(
            dim=4, hamiltonian=np.zeros((4, 4)), decoherence=[DecoherenceChannel(build_position(4), 0.7)]
        )
        rho = np.eye(4, dtype=complex) / 4.0
        np.testing.assert_array_equal(me_step(rho, model, 1e-3), rho)


class TestDirectStepOracle:
    def test_diagonal_two_level_scalar_expansion(self):
        # independent scalar expansion for diagonal rho and M = diag(0, 1):
        # dissipator vanishes, Milstein bracket vanishes at dw**2 = dt,
        # so only p1 picks up (M rho + rho M)[1,1] * (4 k <M> dt + sqrt(2k) dw)
        k, dt, dw = 0.1, 0.01, 0.1
        p0, p1 = 0.5, 0.5
        model = measurement_model(2, np.diag([0.0, 1.0]).astype(complex), k)
        rho = np.diag([p0, p1]).astype(complex)
        e_mean = p1  # <M>
        gain = 2.0 * p1 * (4.0 * k * e_mean * dt + math.sqrt(2.0 * k) * dw)
        p1_unnorm = p1 + gain
        total = p0 + p1_unnorm
        expected = np.diag([p0 / total, p1_unnorm / total])
        out = sme_step_direct(rho, model, [dw], dt)
        np.testing.assert_allclose(out, expected, atol=1e-14)

    def test_hermitian_drift_coefficient_reduces_to_4k(self):
        # for Hermitian M the general 2k<M+Mdag> drift equals 4k<M>
        rng = np.random.default_rng(3)
        m_op = rng.standard_normal((3, 3))
        m_op = (m_op + m_op.T).astype(complex)
        model = measurement_model(3, m_op, 0.25)
        rho = random_density(rng, 3)
        e = float(np.real(np.trace(m_op @ rho)))
        dt, dw = 1e-3, 0.02
        inc_manual = (
            -0.25 * (m_op @ m_op @ rho + rho @ m_op @ m_op - 2 * m_op @ rho @ m_op) * dt
            + (m_op @ rho + rho @ m_op) * (4 * 0.25 * e * dt + math.sqrt(0.5) * dw)
            + 0.25 * (dw * dw - dt) * (m_op @ m_op @ rho + rho @ m_op @ m_op + 2 * m_op @ rho @ m_op)
        )
        expected = rho + inc_manual
        expected /= np.trace(expected).real
        np.testing.assert_allclose(sme_step_direct(rho, model, [dw], dt), expected, atol=1e-13)

    def test_trace_renormalized(self):
        rng = np.random.default_rng(4)
        model = measurement_model(4, build_number(4), 0.3)
        rho = random_density(rng, 4)
        out = sme_step_direct(rho, model, [0.05], 1e-3)
        assert abs(np.trace(out).real - 1.0) <= 1e-14


class TestEulerStep:
    def test_eigenprojector_deterministic(self):
        model = measurement_model(2, np.diag([0.0, 1.0]).astype(complex), 0.2)
        rho = np.diag([0.0, 1.0]).astype(complex)
        a = sme_step_normalized_euler(rho, model, [0.4], 1e-3)
        b = sme_step_normalized_euler(rho, model, [-0.7], 1e-3)
        np.testing.assert_array_equal(a, b)

    def test_difference_from_direct_shrinks_with_dt(self):
        rng = np.random.default_rng(5)
        m_op = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        model = measurement_model(4, m_op, 0.2)
        rho = random_density(rng, 4)
        z = 0.8  # dw = z sqrt(dt) keeps the same path scale across dt
        diffs = []
        for dt in (1e-2, 1e-3, 1e-4):
            dw = z * math.sqrt(dt)
            a = sme_step_direct(rho, model, [dw], dt)
            b = sme_step_normalized_euler(rho, model, [dw], dt)
            diffs.append(np.max(np.abs(a - b)))
        assert diffs[1] < diffs[0] / 3.0
        assert diffs[2] < diffs[1] / 3.0


class TestSchemeAgreement:
    def test_distance_scales_consistently_under_halving(self):
        # same noise path, fixed horizon; the direct/Euler gap must shrink
        # roughly with dt (the exchange-term correction is the main gap)
        model, psi0 = preset_oscillator(k=0.1, beta=0.1)
        horizon = 0.5
        sups = {}
        for dt in (1e-3, 5e-4):
            ns = NoiseStreams(77, 5e-4, 1, 1, 1)
            n_steps = round(horizon / dt)
            rho_a = np.outer(psi0, psi0.conj())
            rho_b = rho_a.copy()
            sup = 0.0
            for s in range(n_steps):
                dw = ns.shared_increments(0, s, 1, dt)[0]
                rho_a = sme_step_direct(rho_a, model, [dw], dt)
                rho_b = sme_step_normalized_euler(rho_b, model, [dw], dt)
                sup = max(sup, trace_distance(rho_a, rho_b))
            sups[dt] = sup
        c_coarse = sups[1e-3] / 1e-3
        c_fine = sups[5e-4] / 5e-4
        assert 0.4 <= c_fine / c_coarse <= 2.5

    def test_hermiticity_and_positivity_along_trajectory(self):
        model, psi0 = preset_oscillator()
        ns = NoiseStreams(11, 2e-4, 1, 1, 1)
        rho = np.outer(psi0, psi0.conj())
        for s in range(2000):
            dw = ns.shared_increments(0, s, 1, 2e-4)[0]
            rho = sme_step_direct(rho, model, [dw], 2e-4)
            if s % 200 == 0:
                assert np.max(np.abs(rho - rho.conj().T)) <= 1e-13
                assert np.linalg.eigvalsh(rho).min() >= -1e-6
        check_density(rho, herm_tol=1e-13, trace_tol=1e-12, eig_floor=-1e-6)


class TestMasterEquationStep:
    def test_qubit_decay_hand_value(self):
        model, _ = preset_qubit_decay(1.0)
        rho = np.diag([0.0, 1.0]).astype(complex)
        out = me_step(rho, model, 1e-3)
        assert out[1, 1].real == pytest.approx(0.998, abs=1e-12)
        assert out[0, 0].real == pytest.approx(0.002, abs=1e-12)

    def test_gamma_zero_stationary(self):
        model, _ = preset_qubit_decay(0.0)
        rho = np.diag([0.3, 0.7]).astype(complex)
        np.testing.assert_array_equal(me_step(rho, model, 1e-3), rho)

    def test_ham_noise_enters_as_averaged_double_commutator(self):
        # -(beta/2) [x, [x, rho]] exactly, computed independently
        rng = np.random.default_rng(6)
        beta = 0.4
        x = build_position(4)
        model = ModelSpec(dim=4, hamiltonian=np.zeros((4, 4)), ham_noise=[HamiltonianNoiseChannel(x, beta)])
        rho = random_density(rng, 4)
        comm = x @ (x @ rho - rho @ x) - (x @ rho - rho @ x) @ x
        expected = rho - 0.5 * beta * comm * 1e-3
        expected /= np.trace(expected).real
        np.testing.assert_allclose(me_step(rho, model, 1e-3), expected, atol=1e-14)

    def test_wrong_increment_count_rejected(self):
        model = measurement_model(2, build_number(2), 0.1)
        with pytest.raises(ValueError, match="measurement increments"):
            sme_step_direct(np.diag([1.0, 0.0]).astype(complex), model, [0.1, 0.2], 1e-3)
