import numpy as np
import pytest

from irrevqed.dynamics import apply_stage, initial_state
from irrevqed.qstate import DensityOperator, SpaceLayout, atom_cavity_layout


def random_density(rng, d, rank=None):
    """Random full-rank (or given-rank) density matrix from a Ginibre draw."""
    k = d if rank is None else rank
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    m = g @ g.conj().T
    return m / np.trace(m).real


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def layout():
    return atom_cavity_layout(4)


@pytest.fixture
def qubit():
    return SpaceLayout.of(("q", 2))


@pytest.fixture
def rho_0():
    return initial_state(4)


@pytest.fixture
def rho_tau(rho_0):
    return apply_stage(rho_0, "forward")


def ket(layout, atom, n):
    v = np.zeros(layout.total_dim, dtype=complex)
    v[atom * layout.dim_of("cavity") + n] = 1.0
    return v


def state_from(layout, m):
    return DensityOperator(layout, np.asarray(m, dtype=complex))
