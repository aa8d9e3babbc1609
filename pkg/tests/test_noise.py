import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irrevqed.dynamics import (
    QUARTER_PERIOD,
    apply_stage,
    jc_pulse_matrix,
    simulate_two_copy_protocol,
    two_copy_layout,
)
from irrevqed.noise import (
    ImperfectionModel,
    apply_imperfections,
    atom_damping_kraus,
    cavity_damping_kraus,
    excitation_injection_kraus,
)
from irrevqed.qstate import DensityOperator, atom_cavity_layout, validate_density

from conftest import random_density

L = atom_cavity_layout(4)
E0, E1, G0, G1 = 0, 1, 4, 5


def forward_with(model, rho_0):
    return apply_imperfections(apply_stage(rho_0, "forward"), "forward", model)


class TestModel:
    def test_defaults_ideal(self):
        assert ImperfectionModel().is_ideal
        assert not ImperfectionModel.realistic().is_ideal

    @pytest.mark.parametrize("kw", [{"atom_decay_per_stage": 1.5}, {"second_atom_prob": -0.1},
                                    {"pulse_area_jitter": -0.01}, {"echo_angle_error": math.inf}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ImperfectionModel(**kw)

    def test_json_round_trip(self):
        m = ImperfectionModel.realistic()
        assert ImperfectionModel.from_json(m.to_json()) == m

    def test_unknown_field(self):
        with pytest.raises(ValueError):
            ImperfectionModel.from_json({"atom_lifetime": 1.0})


class TestKraus:
    @pytest.mark.parametrize("kraus", [atom_damping_kraus(0.3), cavity_damping_kraus(0.4, 4),
                                       excitation_injection_kraus(4)])
    def test_trace_preserving(self, kraus):
        total = sum(k.conj().T @ k for k in kraus)
        assert np.allclose(total, np.eye(len(total)), atol=1e-14)

    def test_full_cavity_damping_empties_cavity(self):
        ks = cavity_damping_kraus(1.0, 4)
        rho = np.diag([0, 0, 1.0, 0])
        assert np.allclose(sum(k @ rho @ k.T for k in ks), np.diag([1.0, 0, 0, 0]))


class TestApply:
    def test_ideal_is_identity(self, rho_tau):
        for stage in ("forward", "backward"):
            assert apply_imperfections(rho_tau, stage, ImperfectionModel()) is rho_tau

    def test_full_atom_decay(self, rho_0):
        out = apply_imperfections(rho_0, "forward", ImperfectionModel(atom_decay_per_stage=1.0))
        expected = np.zeros((8, 8))
        expected[G0, G0] = 1.0
        assert np.allclose(out.matrix, expected)

    def test_bad_stage(self, rho_0):
        with pytest.raises(ValueError):
            apply_imperfections(rho_0, "middle", ImperfectionModel.realistic())

    def test_echo_error_only_on_backward(self, rho_0):
        m = ImperfectionModel(echo_angle_error=0.1)
        assert np.allclose(apply_imperfections(rho_0, "forward", m).matrix, rho_0.matrix)
        assert not np.allclose(apply_imperfections(rho_0, "backward", m).matrix, rho_0.matrix)

    def test_echo_error_equals_rotated_flip(self, rho_tau):
        # exact: backward stage with R(delta) P in place of P
        delta = 0.2
        u = jc_pulse_matrix(QUARTER_PERIOD)
        flip = np.kron(np.diag([1.0, -np.exp(1j * delta)]), np.eye(4))
        expected = u @ flip @ rho_tau.matrix @ flip.conj().T @ u.T
        out = apply_imperfections(apply_stage(rho_tau, "backward"), "backward",
                                  ImperfectionModel(echo_angle_error=delta))
        assert np.allclose(out.matrix, expected, atol=1e-12)

    def test_second_atom_only_on_forward(self, rho_tau):
        m = ImperfectionModel(second_atom_prob=0.2)
        assert np.allclose(apply_imperfections(rho_tau, "backward", m).matrix, rho_tau.matrix)
        out = apply_imperfections(rho_tau, "forward", m).matrix
        # |e0> -> |e1> with probability 0.2
        assert out[E1, E1].real == pytest.approx(0.2 * 0.5)
        assert out[E0, E0].real == pytest.approx(0.8 * 0.5)

    def test_jitter_matches_monte_carlo_and_closed_form(self, rho_0):
        j = 0.05
        out = forward_with(ImperfectionModel(pulse_area_jitter=j), rho_0)
        coh = out.matrix[E0, G1].real
        # on the {|e0>, |g1>} manifold the coherence is sin(2 phi) / 2 with phi = theta (1 + j x)
        x = np.random.default_rng(7).standard_normal(10**6)
        samples = 0.5 * np.sin(2 * QUARTER_PERIOD * (1 + j * x))
        mc, se = samples.mean(), samples.std() / math.sqrt(len(x))
        assert abs(coh - mc) <= 5 * se
        closed = 0.5 * math.sin(2 * QUARTER_PERIOD) * math.exp(-2 * (QUARTER_PERIOD * j) ** 2)
        assert coh == pytest.approx(closed, abs=1e-9)
        assert coh < 0.5

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from(["forward", "backward"]))
    def test_output_valid(self, seed, stage):
        rho = DensityOperator(L, random_density(np.random.default_rng(seed), 8))
        out = apply_imperfections(rho, stage, ImperfectionModel(0.1, 0.2, 0.1, 0.3, 0.2))
        assert validate_density(out.matrix, tol_psd=1e-12, tol_trace=1e-12).passed

    def test_two_copy_with_noise_valid(self):
        res = simulate_two_copy_protocol(ImperfectionModel.realistic(), "decorrelation")
        assert validate_density(res.rho_tilde_0.matrix).passed
        assert validate_density(res.rho_tilde_tau.matrix).passed
        assert two_copy_layout().total_dim == 64
