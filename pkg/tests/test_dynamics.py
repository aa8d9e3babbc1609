import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irrevqed.dynamics import (
    QUARTER_PERIOD,
    DephasingBasisSpec,
    DephasingMode,
    DephasingTarget,
    GibbsSpec,
    PulseSpec,
    apply_stage,
    decorrelate,
    dephase_channel,
    echo_flip,
    environment_channel,
    gibbs_state,
    jc_generator,
    jc_pulse_matrix,
    jc_pulse_unitary,
    reset_subsystem,
    simulate_two_copy_protocol,
    stage_unitary,
    two_copy_layout,
)
from irrevqed.entropic import mutual_information
from irrevqed.qstate import (
    DensityOperator,
    SpaceLayout,
    atom_cavity_layout,
    matrix_exp_hermitian,
    partial_trace,
    trace_distance,
)

from conftest import ket, random_density

L = atom_cavity_layout(4)
E, G = 0, 1
S2 = 1 / math.sqrt(2)


def psi_plus():
    return S2 * (ket(L, E, 0) + ket(L, G, 1))


def expm_antisymmetric(K, theta):
    """Independent oracle: exp(theta K) through the Hermitian matrix iK."""
    w, V = np.linalg.eigh(1j * K)
    return np.real((V * np.exp(-1j * theta * w)) @ V.conj().T)


def eq10():
    return np.outer(psi_plus(), psi_plus())


def eq12():
    return np.kron(np.eye(2) / 2, np.diag([0.5, 0.5, 0, 0]))


class TestPulse:
    def test_quarter_period_on_e0(self):
        U = jc_pulse_matrix(QUARTER_PERIOD)
        assert np.allclose(U @ ket(L, E, 0), psi_plus(), atol=1e-15)

    def test_dark_state(self):
        for theta in (0.3, 1.0, 2.7):
            U = jc_pulse_matrix(theta)
            assert np.allclose(U @ ket(L, G, 0), ket(L, G, 0))

    def test_e1_populations(self):
        out = jc_pulse_matrix(QUARTER_PERIOD) @ ket(L, E, 1)
        c, s = math.cos(math.sqrt(2) * math.pi / 4), math.sin(math.sqrt(2) * math.pi / 4)
        assert np.allclose(out, c * ket(L, E, 1) + s * ket(L, G, 2))
        assert abs(out[1]) ** 2 == pytest.approx(c * c, abs=1e-15)
        # the quoted four-digit figures (0.1970, 0.8030) round the exact 0.19715 / 0.80285
        assert abs(out[1]) ** 2 == pytest.approx(0.1970, abs=2e-4)
        assert abs(out[6]) ** 2 == pytest.approx(0.8030, abs=2e-4)

    def test_top_level_invariant(self):
        assert np.allclose(jc_pulse_matrix(0.9) @ ket(L, E, 3), ket(L, E, 3))

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-4.0, 4.0))
    def test_block_rotation_matches_generator_exponential(self, theta):
        U = jc_pulse_matrix(theta)
        assert np.allclose(U, expm_antisymmetric(jc_generator(4), theta), atol=1e-12)
        assert np.allclose(U @ U.T, np.eye(8), atol=1e-12)
        assert np.isrealobj(U)

    def test_unitary_wrapper(self):
        U = jc_pulse_unitary(PulseSpec())
        assert np.linalg.norm(U.matrix @ U.dag() - np.eye(8), 2) <= 1e-12

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            PulseSpec(theta=math.nan)
        with pytest.raises(ValueError):
            PulseSpec(cavity_dim=1)


class TestEcho:
    def test_sign_flip(self):
        P = echo_flip(L).matrix
        assert np.allclose(P @ psi_plus(), S2 * (ket(L, E, 0) - ket(L, G, 1)))

    def test_conjugation_reverses_pulse(self):
        P = echo_flip(L).matrix
        U = jc_pulse_matrix(QUARTER_PERIOD)
        assert np.allclose(P @ U @ P, jc_pulse_matrix(-QUARTER_PERIOD), atol=1e-15)

    def test_identity_cycle_on_e0(self):
        U = jc_pulse_matrix(QUARTER_PERIOD)
        P = echo_flip(L).matrix
        out = U @ P @ U @ ket(L, E, 0)
        assert abs(abs(np.vdot(ket(L, E, 0), out)) - 1) <= 1e-12

    def test_stage_unitaries_unitary(self):
        for stage in ("forward", "backward"):
            U = stage_unitary(stage).matrix
            assert np.linalg.norm(U @ U.conj().T - np.eye(8), 2) <= 1e-12

    def test_bad_stage(self):
        with pytest.raises(ValueError):
            stage_unitary("sideways")


class TestCycle:
    def test_forward_gives_bell_state(self, rho_0):
        assert np.allclose(apply_stage(rho_0, "forward").matrix, eq10(), atol=1e-15)

    def test_identity_cycle(self, rho_0):
        out = apply_stage(apply_stage(rho_0, "forward"), "backward")
        assert trace_distance(out, rho_0) <= 1e-12

    def test_cycle_is_echo_conjugation_on_all_basis_operators(self):
        # backward . forward = P . P: identity on atom-diagonal operators, a sign
        # on operators that are off-diagonal in the atom
        P = echo_flip(L).matrix
        F, B = stage_unitary("forward").matrix, stage_unitary("backward").matrix
        for i in range(8):
            for j in range(8):
                Eij = np.zeros((8, 8))
                Eij[i, j] = 1.0
                out = B @ F @ Eij @ F.conj().T @ B.conj().T
                assert np.abs(out - P @ Eij @ P).max() <= 1e-12
                if (i < 4) == (j < 4):
                    assert np.abs(out - Eij).max() <= 1e-12

    def test_backward_preserves_dephased_mixture(self, rho_tau):
        deph = dephase_channel(rho_tau)
        assert trace_distance(apply_stage(deph, "backward"), deph) <= 1e-12


class TestDephasing:
    def test_bell_state_becomes_mixture(self, rho_tau):
        out = dephase_channel(rho_tau).matrix
        expected = np.zeros((8, 8))
        expected[0, 0] = expected[5, 5] = 0.5
        assert np.allclose(out, expected, atol=1e-15)

    def test_diagonal_fixed_point(self, rng):
        m = np.diag(rng.dirichlet(np.ones(8)))
        rho = DensityOperator(L, m)
        assert np.allclose(dephase_channel(rho).matrix, m)

    def test_b_only_equals_both_on_bell_state(self, rho_tau):
        both = DephasingBasisSpec(target=DephasingTarget.BOTH)
        assert np.allclose(dephase_channel(rho_tau).matrix, dephase_channel(rho_tau, both).matrix)

    def test_eigenbasis_mode(self, rho_tau):
        spec = DephasingBasisSpec(mode=DephasingMode.EIGENBASIS_OF_REDUCED_STATE)
        out = dephase_channel(rho_tau, spec)
        assert np.allclose(out.matrix, dephase_channel(rho_tau).matrix, atol=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(list(DephasingMode)),
           st.sampled_from(list(DephasingTarget)))
    def test_idempotent_and_cptp(self, seed, mode, target):
        rho = DensityOperator(L, random_density(np.random.default_rng(seed), 8))
        spec = DephasingBasisSpec(mode, target)
        once = dephase_channel(rho, spec)
        if mode is DephasingMode.FIXED_ENERGY_FOCK:
            assert np.abs(dephase_channel(once, spec).matrix - once.matrix).max() <= 1e-12
        assert abs(once.trace() - 1) <= 1e-12
        assert np.linalg.eigvalsh(once.matrix)[0] >= -1e-12

    def test_spec_from_strings(self):
        spec = DephasingBasisSpec("eigenbasis_of_reduced_state", "both_A_and_B")
        assert spec.mode is DephasingMode.EIGENBASIS_OF_REDUCED_STATE


class TestDecorrelateReset:
    def test_bell_state(self, rho_tau):
        assert np.allclose(decorrelate(rho_tau).matrix, eq12(), atol=1e-15)

    def test_product_fixed_point(self, rng):
        m = np.kron(random_density(rng, 2), random_density(rng, 4))
        rho = DensityOperator(L, m)
        assert np.allclose(decorrelate(rho).matrix, m, atol=1e-14)

    def test_classical_mixture(self, rho_tau):
        assert np.allclose(decorrelate(dephase_channel(rho_tau)).matrix, eq12(), atol=1e-15)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_output_uncorrelated(self, seed):
        rho = DensityOperator(L, random_density(np.random.default_rng(seed), 8))
        assert mutual_information(decorrelate(rho)).value <= 1e-12

    def test_reset_bell_state(self, rho_tau):
        vac = DensityOperator(SpaceLayout.of(("cavity", 4)), np.diag([1.0, 0, 0, 0]))
        out = reset_subsystem(rho_tau, vac)
        assert np.allclose(out.matrix, np.kron(np.eye(2) / 2, np.diag([1.0, 0, 0, 0])))

    def test_reset_to_own_marginal(self, rng):
        a, b = random_density(rng, 2), random_density(rng, 4)
        rho = DensityOperator(L, np.kron(a, b))
        tgt = DensityOperator(SpaceLayout.of(("cavity", 4)), b)
        assert np.allclose(reset_subsystem(rho, tgt).matrix, rho.matrix, atol=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_reset_preserves_atom_marginal(self, seed):
        rng = np.random.default_rng(seed)
        rho = DensityOperator(L, random_density(rng, 8))
        tgt = DensityOperator(SpaceLayout.of(("cavity", 4)), random_density(rng, 4))
        out = reset_subsystem(rho, tgt)
        assert trace_distance(partial_trace(out, ["atom"]), partial_trace(rho, ["atom"])) <= 1e-12

    def test_environment_channel_dispatch(self, rho_tau):
        assert environment_channel("identity")(rho_tau) is rho_tau
        assert np.allclose(environment_channel("decorrelation")(rho_tau).matrix, eq12())
        with pytest.raises(ValueError):
            environment_channel("erase")


class TestGibbs:
    def test_infinite_temperature(self):
        z, f = gibbs_state(GibbsSpec(np.diag([0.0, 1.0, 2.0]), 0.0))
        assert np.allclose(z.matrix, np.eye(3) / 3)
        assert f == -math.inf

    def test_zero_temperature(self):
        z, f = gibbs_state(GibbsSpec(np.diag([1.0, 0.0, 2.0]), math.inf))
        assert np.allclose(z.matrix, np.diag([0, 1.0, 0]))
        assert f == 0.0

    def test_zero_temperature_degenerate_ground(self):
        z, _ = gibbs_state(GibbsSpec(np.diag([0.0, 0.0, 1.0]), math.inf))
        assert np.allclose(z.matrix, np.diag([0.5, 0.5, 0]))

    def test_qubit_oracle(self):
        E1 = 1.3
        z, f = gibbs_state(GibbsSpec(np.diag([0.0, E1]), math.log(3) / E1))
        assert np.allclose(z.matrix, np.diag([0.75, 0.25]), atol=1e-15)
        beta = math.log(3) / E1
        assert f == pytest.approx(-math.log(1 + 1 / 3) / beta, abs=1e-14)

    def test_non_diagonal_hamiltonian(self, rng):
        h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = h + h.conj().T
        z, _ = gibbs_state(GibbsSpec(h, 0.7))
        ref = matrix_exp_hermitian(-0.7 * h)
        assert np.allclose(z.matrix, ref / np.trace(ref), atol=1e-12)

    def test_negative_beta(self):
        with pytest.raises(ValueError):
            GibbsSpec(np.eye(2), -1.0)


class TestTwoCopy:
    @staticmethod
    def state_vector_oracle(mode):
        """Pure-state simulation on atom(2) x cavity(4) x atom_x(2) x cavity_x(4)."""
        T = jc_pulse_matrix(QUARTER_PERIOD, 4).reshape(2, 4, 2, 4)

        def pulse(psi, i, j):
            moved = np.moveaxis(psi, [i, j], [0, 1])
            moved = np.tensordot(T, moved, axes=([2, 3], [0, 1]))
            return np.moveaxis(moved, [0, 1], [i, j])

        psi = np.zeros((2, 4, 2, 4))
        psi[E, 0, E, 0] = 1.0
        if mode == "decorrelation":
            psi = pulse(psi, 2, 1)
        psi = pulse(psi, 0, 3)
        rho = np.einsum("abcd,efcd->abef", psi, psi.conj()).reshape(8, 8)
        B = jc_pulse_matrix(QUARTER_PERIOD, 4) @ np.kron(np.diag([1.0, -1.0]), np.eye(4))
        return rho, B @ rho @ B.T

    def test_decorrelation_two_copy_matches_channel(self, rho_tau):
        res = simulate_two_copy_protocol(None, "decorrelation")
        assert trace_distance(res.rho_tilde_0, decorrelate(rho_tau)) <= 1e-9

    @pytest.mark.parametrize("mode", ["decorrelation", "reset"])
    def test_matches_state_vector_oracle(self, mode):
        res = simulate_two_copy_protocol(None, mode)
        t0, tt = self.state_vector_oracle(mode)
        assert trace_distance(res.rho_tilde_0.matrix, t0) <= 1e-12
        assert trace_distance(res.rho_tilde_tau.matrix, tt) <= 1e-12

    def test_decorrelation_fixtures(self):
        res = simulate_two_copy_protocol(None, "decorrelation")
        assert trace_distance(res.rho_tilde_0.matrix, eq12()) <= 1e-9
        tt = res.rho_tilde_tau.matrix
        s2 = math.sin(math.sqrt(2) * math.pi / 4) ** 2
        assert tt[6, 6].real == pytest.approx(s2 / 4, abs=1e-12)
        assert tt[6, 6].real == pytest.approx(0.2008, abs=1e-4)
        assert tt[1, 1].real == pytest.approx(0.0492, abs=1e-4)

    def test_reset_fixtures(self):
        res = simulate_two_copy_protocol(None, "reset")
        eq14 = np.kron(np.eye(2) / 2, np.diag([1.0, 0, 0, 0]))
        assert trace_distance(res.rho_tilde_0.matrix, eq14) <= 1e-9
        eq15 = 0.5 * np.outer(ket(L, G, 0), ket(L, G, 0)) + 0.5 * eq10()
        assert trace_distance(res.rho_tilde_tau.matrix, eq15) <= 1e-9

    def test_layout(self):
        assert two_copy_layout().labels == ("atom", "cavity", "atom_x", "cavity_x")

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            simulate_two_copy_protocol(None, "swap")
