import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irrevqed.dynamics import decorrelate, reset_subsystem
from irrevqed.qstate import (
    DensityOperator,
    LayoutError,
    Operator,
    SpaceLayout,
    StateError,
    UnitaryOperator,
    atom_cavity_layout,
    basis_state,
    dumps_operator,
    embed,
    fidelity,
    hermitian_eig,
    loads_operator,
    matrix_exp_hermitian,
    matrix_log_clamped,
    partial_trace,
    projector,
    tensor_product,
    trace_distance,
    validate_density,
)

from conftest import random_density, random_unitary

ATOM_L = SpaceLayout.of(("atom", 2))
CAV_L = SpaceLayout.of(("cavity", 4))


def charpoly_roots(m):
    """Eigenvalues through the Faddeev-LeVerrier characteristic polynomial."""
    n = m.shape[0]
    coeffs = [1.0 + 0j]
    M = np.zeros_like(m)
    for k in range(1, n + 1):
        M = m @ M + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(m @ M) / k)
    return np.sort(np.roots(coeffs).real)


class TestLayout:
    def test_canonical_layout(self, layout):
        assert layout.labels == ("atom", "cavity")
        assert layout.total_dim == 8

    def test_duplicate_labels_rejected(self):
        with pytest.raises(LayoutError):
            SpaceLayout.of(("a", 2), ("a", 3))

    def test_nonpositive_dim_rejected(self):
        with pytest.raises(LayoutError):
            SpaceLayout.of(("a", 0))

    def test_json_round_trip(self, layout):
        assert SpaceLayout.from_json(json.loads(json.dumps(layout.to_json()))) == layout

    def test_basis_ordering_is_atom_major(self, layout):
        # |g0> sits right after the four |e n> states
        assert np.argmax(basis_state(layout, atom=1, cavity=0)) == 4
        assert np.argmax(basis_state(layout, atom=0, cavity=3)) == 3


class TestTensorProduct:
    def test_basis_product(self, rho_0):
        e = DensityOperator(ATOM_L, np.diag([1.0, 0.0]))
        vac = DensityOperator(CAV_L, np.diag([1.0, 0, 0, 0]))
        prod = tensor_product(e, vac)
        assert isinstance(prod, DensityOperator)
        assert np.array_equal(prod.matrix, rho_0.matrix)

    def test_maximally_mixed(self):
        prod = tensor_product(DensityOperator.maximally_mixed(ATOM_L),
                              DensityOperator.maximally_mixed(CAV_L))
        assert np.allclose(prod.matrix, np.eye(8) / 8, atol=1e-15)

    def test_marginals_of_bell_state_give_decorrelated_product(self, rho_tau):
        a = partial_trace(rho_tau, ["atom"])
        c = partial_trace(rho_tau, ["cavity"])
        expected = np.kron(np.eye(2) / 2, np.diag([0.5, 0.5, 0, 0]))
        assert np.allclose(tensor_product(a, c).matrix, expected, atol=1e-15)

    def test_label_collision(self):
        a = DensityOperator.maximally_mixed(ATOM_L)
        with pytest.raises(LayoutError):
            tensor_product(a, a)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_multiplicative(self, seed):
        rng = np.random.default_rng(seed)
        a = Operator(ATOM_L, rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        b = Operator(CAV_L, rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
        assert abs(tensor_product(a, b).trace() - a.trace() * b.trace()) <= 1e-12 * max(
            1.0, abs(a.trace() * b.trace()))


class TestPartialTrace:
    def test_product_state(self, rho_0):
        assert np.allclose(partial_trace(rho_0, ["atom"]).matrix, np.diag([1.0, 0.0]))

    def test_bell_marginal_is_maximally_mixed(self, rho_tau):
        assert np.allclose(partial_trace(rho_tau, ["atom"]).matrix, np.eye(2) / 2, atol=1e-15)

    def test_reset_marginal_is_vacuum(self, rho_tau):
        vac = DensityOperator(CAV_L, np.diag([1.0, 0, 0, 0]))
        reset = reset_subsystem(rho_tau, vac)
        assert np.allclose(partial_trace(reset, ["cavity"]).matrix, vac.matrix, atol=1e-15)

    def test_unknown_label(self, rho_0):
        with pytest.raises(LayoutError):
            partial_trace(rho_0, ["photon"])

    def test_empty_keep(self, rho_0):
        with pytest.raises(LayoutError):
            partial_trace(rho_0, [])

    def test_keeps_layout_order_for_three_factors(self, rng):
        lay = SpaceLayout.of(("a", 2), ("b", 3), ("c", 2))
        ma, mb, mc = random_density(rng, 2), random_density(rng, 3), random_density(rng, 2)
        rho = DensityOperator(lay, np.kron(np.kron(ma, mb), mc))
        red = partial_trace(rho, ["c", "a"])
        assert red.layout.labels == ("a", "c")
        assert np.allclose(red.matrix, np.kron(ma, mc), atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_trace_preserved_and_factor_recovered(self, seed):
        rng = np.random.default_rng(seed)
        a = DensityOperator(ATOM_L, random_density(rng, 2))
        b = Operator(CAV_L, 0.3 * random_density(rng, 4))
        prod = tensor_product(a, b)
        red = partial_trace(prod, ["atom"])
        assert abs(red.trace() - prod.trace()) <= 1e-12
        diff = red.matrix - a.matrix * b.trace()
        assert np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))).sum() <= 1e-12


class TestEmbed:
    def test_embed_second_factor(self, layout):
        x = np.array([[0, 1], [1, 0]], dtype=complex)
        lay = SpaceLayout.of(("c", 3), ("a", 2))
        assert np.allclose(embed(x, lay, ["a"]), np.kron(np.eye(3), x))

    def test_shape_mismatch(self, layout):
        with pytest.raises(LayoutError):
            embed(np.eye(3), layout, ["atom"])


class TestHermitianEig:
    def test_diagonal(self):
        w, V = hermitian_eig(np.diag([0.25, 0.75]))
        assert np.allclose(w, [0.25, 0.75])
        assert np.allclose(V, np.eye(2))

    def test_bell_state(self, rho_tau):
        w, V = hermitian_eig(rho_tau.matrix)
        assert np.allclose(w, [0] * 7 + [1], atol=1e-12)
        top = np.zeros(8)
        top[0] = top[5] = 1 / np.sqrt(2)
        assert np.allclose(V[:, -1], top, atol=1e-12)

    def test_degenerate_spectrum_yields_standard_basis(self):
        w, V = hermitian_eig(np.eye(8) / 8)
        assert np.array_equal(V, np.eye(8))

    def test_ordering_reproducible_under_basis_rotation_in_degenerate_block(self, rng):
        # same operator up to round-off; the eigenbasis must not depend on LAPACK's choice
        m = np.diag([0.5, 0.5, 0.0, 0.0]).astype(complex)
        u = np.eye(4, dtype=complex)
        u[:2, :2] = random_unitary(rng, 2)
        w1, V1 = hermitian_eig(m)
        w2, V2 = hermitian_eig(u @ m @ u.conj().T)
        assert np.allclose(w1, w2, atol=1e-12)
        assert np.allclose(V1, V2, atol=1e-8)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_charpoly_oracle_and_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        h = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        h = 0.5 * (h + h.conj().T)
        w, V = hermitian_eig(h)
        assert np.all(np.diff(w) >= 0)
        assert np.allclose(w, charpoly_roots(h), atol=1e-6)
        err = np.linalg.norm(h - (V * w) @ V.conj().T, 2)
        assert err <= 10 * np.finfo(float).eps * 8 * np.linalg.norm(h, 2)
        assert np.allclose(V.conj().T @ V, np.eye(8), atol=1e-12)

    def test_rejects_non_hermitian(self):
        with pytest.raises(StateError):
            hermitian_eig(np.array([[0, 1], [0, 0]]))


class TestMatrixLog:
    def test_maximally_mixed(self):
        assert np.allclose(matrix_log_clamped(np.eye(8) / 8, 1e-300), -np.log(8) * np.eye(8))

    def test_clamp(self):
        assert np.allclose(matrix_log_clamped(np.diag([1.0, 0.0]), 1e-12),
                           np.diag([0.0, np.log(1e-12)]))

    def test_scalar_oracle(self):
        assert np.allclose(matrix_log_clamped(np.diag([0.75, 0.25])),
                           np.diag([np.log(0.75), np.log(0.25)]), atol=1e-15)

    def test_bad_floor(self):
        with pytest.raises(ValueError):
            matrix_log_clamped(np.eye(2) / 2, 0.0)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_exp_log_round_trip(self, seed):
        rho = random_density(np.random.default_rng(seed), 8)
        back = matrix_exp_hermitian(matrix_log_clamped(rho))
        assert trace_distance(back, rho) <= 1e-10


class TestValidateDensity:
    def test_pass(self):
        d = validate_density(np.eye(2) / 2)
        assert d.passed and np.isclose(d.min_eigenvalue, 0.5)

    def test_negative_eigenvalue(self):
        d = validate_density(np.diag([1.1, -0.1]))
        assert not d.passed and np.isclose(d.min_eigenvalue, -0.1)

    def test_tiny_asymmetry_accepted(self, rho_0):
        m = rho_0.matrix.copy()
        m[0, 1] += 1e-14
        assert validate_density(m, tol_herm=1e-12).passed

    def test_trace_defect(self):
        assert not validate_density(np.eye(2)).unit_trace

    def test_constructor_enforces(self, qubit):
        with pytest.raises(StateError):
            DensityOperator(qubit, np.diag([1.1, -0.1]))

    def test_unitary_check(self, qubit):
        with pytest.raises(StateError):
            UnitaryOperator(qubit, np.diag([1.0, 2.0]))


class TestDistancesAndSerialization:
    def test_fidelity_and_trace_distance(self, layout):
        a = projector(layout, atom=0, cavity=0)
        b = projector(layout, atom=1, cavity=0)
        assert fidelity(a, a) == pytest.approx(1.0)
        assert fidelity(a, b) == pytest.approx(0.0, abs=1e-15)
        assert trace_distance(a, b) == pytest.approx(1.0)

    def test_exact_round_trip(self, rng, layout):
        rho = DensityOperator(layout, random_density(rng, 8))
        back = loads_operator(dumps_operator(rho))
        assert back.layout == layout
        assert np.array_equal(back.matrix, rho.matrix)

    def test_json_shape(self, rho_0):
        d = json.loads(dumps_operator(rho_0))
        assert set(d) == {"layout", "real", "imag"}
        assert len(d["real"]) == 8 and len(d["real"][0]) == 8

    def test_decorrelate_keeps_marginals(self, rho_tau):
        dec = decorrelate(rho_tau)
        for lab in ("atom", "cavity"):
            assert np.allclose(partial_trace(dec, [lab]).matrix, partial_trace(rho_tau, [lab]).matrix)
