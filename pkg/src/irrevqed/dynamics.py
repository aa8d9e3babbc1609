"""Jaynes-Cummings pulses, the echo flip, cycle stages and environment channels.

Conventions
-----------
* The atom factor uses index 0 for ``|e>`` and 1 for ``|g>``.
* A resonant pulse of area ``theta`` rotates each manifold ``{|e,n>, |g,n+1>}``
  by the real angle ``sqrt(n+1) * theta``; ``theta = pi/4`` is the quarter Rabi
  period that maps ``|e0>`` to ``(|e0> + |g1>)/sqrt(2)``.
* The backward stage is ``U_JC(theta) @ P`` where ``P`` is the atomic phase
  flip ``diag(+1, -1)`` on ``(e, g)``.  Since ``P U_JC(theta) P = U_JC(-theta)``,
  backward after forward equals conjugation by ``P``: the identity on every
  atom-diagonal operator and on ``rho_0 = |e0><e0|``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qstate import (
    ATOM,
    CAVITY,
    DensityOperator,
    LayoutError,
    Operator,
    SpaceLayout,
    UnitaryOperator,
    atom_cavity_layout,
    basis_state,
    embed,
    hermitian_eig,
    partial_trace,
    tensor_product,
)

QUARTER_PERIOD = math.pi / 4
E, G = 0, 1


@dataclass(frozen=True)
class PulseSpec:
    theta: float = QUARTER_PERIOD
    cavity_dim: int = 4

    def __post_init__(self):
        if not math.isfinite(self.theta):
            raise ValueError(f"pulse area must be finite, got {self.theta}")
        if self.cavity_dim < 2:
            raise ValueError(f"cavity_dim must be >= 2, got {self.cavity_dim}")


class DephasingMode(str, enum.Enum):
    FIXED_ENERGY_FOCK = "fixed_energy_fock"
    EIGENBASIS_OF_REDUCED_STATE = "eigenbasis_of_reduced_state"


class DephasingTarget(str, enum.Enum):
    B_ONLY = "B_only"
    BOTH = "both_A_and_B"


@dataclass(frozen=True)
class DephasingBasisSpec:
    mode: DephasingMode = DephasingMode.FIXED_ENERGY_FOCK
    target: DephasingTarget = DephasingTarget.B_ONLY

    def __post_init__(self):
        object.__setattr__(self, "mode", DephasingMode(self.mode))
        object.__setattr__(self, "target", DephasingTarget(self.target))


@dataclass(frozen=True)
class GibbsSpec:
    hamiltonian: np.ndarray
    beta: float

    def __post_init__(self):
        if math.isnan(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be >= 0 or +inf, got {self.beta}")


# --------------------------------------------------------------------------
# unitaries


def jc_generator(cavity_dim: int) -> np.ndarray:
    """Real antisymmetric generator ``K`` with ``U_JC(theta) = exp(theta K)``.

    The top manifold coupling ``|e, d-1> <-> |g, d>`` falls outside the
    truncation, so ``|e, d-1>`` is left invariant.
    """
    d = cavity_dim
    K = np.zeros((2 * d, 2 * d))
    for n in range(d - 1):
        e_n = E * d + n
        g_n1 = G * d + n + 1
        K[g_n1, e_n] = math.sqrt(n + 1)
        K[e_n, g_n1] = -math.sqrt(n + 1)
    return K


def jc_pulse_matrix(theta: float, cavity_dim: int = 4) -> np.ndarray:
    d = cavity_dim
    U = np.eye(2 * d)
    for n in range(d - 1):
        e_n = E * d + n
        g_n1 = G * d + n + 1
        c, s = math.cos(math.sqrt(n + 1) * theta), math.sin(math.sqrt(n + 1) * theta)
        U[e_n, e_n] = c
        U[g_n1, e_n] = s
        U[e_n, g_n1] = -s
        U[g_n1, g_n1] = c
    return U


def jc_pulse_unitary(spec: PulseSpec = PulseSpec()) -> UnitaryOperator:
    """Resonant atom-cavity pulse of area ``spec.theta`` as a real orthogonal matrix."""
    return UnitaryOperator(atom_cavity_layout(spec.cavity_dim),
                           jc_pulse_matrix(spec.theta, spec.cavity_dim))


def echo_flip(layout: SpaceLayout | None = None, atom: str = ATOM,
              angle_error: float = 0.0) -> UnitaryOperator:
    """Atomic phase flip ``|e><e| - |g><g|`` tensored with identity elsewhere.

    ``angle_error`` adds a residual rotation ``diag(1, exp(i*angle_error))`` on
    top of the pi phase.
    """
    layout = layout or atom_cavity_layout()
    if layout.dim_of(atom) != 2:
        raise LayoutError(f"factor {atom!r} is not a qubit")
    p = np.diag([1.0, -np.exp(1j * angle_error)])
    return UnitaryOperator(layout, embed(p, layout, [atom]))


def stage_unitary(stage: str, cavity_dim: int = 4, theta: float = QUARTER_PERIOD,
                  echo_error: float = 0.0) -> UnitaryOperator:
    layout = atom_cavity_layout(cavity_dim)
    u = jc_pulse_matrix(theta, cavity_dim)
    if stage == "forward":
        return UnitaryOperator(layout, u)
    if stage == "backward":
        return UnitaryOperator(layout, u @ echo_flip(layout, angle_error=echo_error).matrix)
    raise ValueError(f"stage must be 'forward' or 'backward', got {stage!r}")


def _pair_unitary(layout: SpaceLayout, u: np.ndarray, atom: str, cavity: str) -> np.ndarray:
    return embed(u, layout, [atom, cavity])


def apply_stage(rho: DensityOperator, stage: str, atom: str = ATOM, cavity: str = CAVITY,
                theta: float = QUARTER_PERIOD) -> DensityOperator:
    """Apply the forward pulse ``U_JC`` or the backward ``U_JC @ P`` to the atom-cavity pair."""
    layout = rho.layout
    if layout.dim_of(atom) != 2:
        raise LayoutError(f"factor {atom!r} is not a qubit")
    d = layout.dim_of(cavity)
    u = stage_unitary(stage, d, theta).matrix
    U = _pair_unitary(layout, u, atom, cavity)
    return DensityOperator(layout, U @ rho.matrix @ U.conj().T, check=False)


# --------------------------------------------------------------------------
# reference states


def initial_state(cavity_dim: int = 4) -> DensityOperator:
    """``|e0><e0|``."""
    layout = atom_cavity_layout(cavity_dim)
    return DensityOperator.pure(layout, basis_state(layout, atom=E, cavity=0))


# --------------------------------------------------------------------------
# channels


def _local_projectors(rho: DensityOperator, label: str, mode: DephasingMode) -> list[np.ndarray]:
    d = rho.layout.dim_of(label)
    if mode is DephasingMode.FIXED_ENERGY_FOCK:
        vecs = np.eye(d)
    else:
        _, vecs = hermitian_eig(partial_trace(rho, [label]).matrix)
    return [np.outer(vecs[:, k], vecs[:, k].conj()) for k in range(d)]


def dephase_channel(rho: DensityOperator, basis: DephasingBasisSpec = DephasingBasisSpec(),
                    a: str = ATOM, b: str = CAVITY) -> DensityOperator:
    """Non-selective projective dephasing on ``b`` (and optionally ``a``).

    In eigenbasis mode the rank-one projectors come from the deterministic
    eigenvectors of the reduced state, so degenerate marginals dephase in a
    reproducible basis.
    """
    layout = rho.layout
    m = rho.matrix
    labels = [b] if basis.target is DephasingTarget.B_ONLY else [a, b]
    for lab in labels:
        projs = [embed(p, layout, [lab]) for p in _local_projectors(rho, lab, basis.mode)]
        m = sum(p @ m @ p for p in projs)
    return DensityOperator(layout, m, check=False)


def decorrelate(rho: DensityOperator, a: str = ATOM, b: str = CAVITY) -> DensityOperator:
    """Replace a bipartite state by the product of its two marginals."""
    if set(rho.layout.labels) != {a, b}:
        raise LayoutError(f"decorrelate needs a bipartite {a}/{b} layout, got {rho.layout.labels}")
    ra = partial_trace(rho, [a])
    rb = partial_trace(rho, [b])
    first, second = (ra, rb) if rho.layout.labels[0] == a else (rb, ra)
    return tensor_product(first, second)


def reset_subsystem(rho: DensityOperator, target: DensityOperator, b: str = CAVITY) -> DensityOperator:
    """Keep the marginal of everything except ``b`` and put ``b`` in ``target``."""
    if target.layout.labels != (b,):
        target = DensityOperator(SpaceLayout.of((b, target.dim)), target.matrix, check=False)
    if rho.layout.dim_of(b) != target.dim:
        raise LayoutError(f"target dimension {target.dim} != dim of {b!r} ({rho.layout.dim_of(b)})")
    others = [lab for lab in rho.layout.labels if lab != b]
    rest = partial_trace(rho, others)
    prod = tensor_product(rest, target)
    # restore the original factor order
    order = [prod.layout.index(lab) for lab in rho.layout.labels]
    dims = prod.layout.dims
    n = len(dims)
    t = prod.matrix.reshape(dims + dims).transpose(order + [n + i for i in order])
    return DensityOperator(rho.layout, t.reshape(rho.dim, rho.dim), check=False)


def gibbs_state(spec: GibbsSpec, layout: SpaceLayout | None = None) -> tuple[DensityOperator, float]:
    """Thermal state ``exp(-beta H)/Z`` and free energy ``-ln(Z)/beta``.

    At ``beta = inf`` the state is the uniform mixture over the ground
    eigenspace and the free energy is the ground energy; at ``beta = 0`` the free
    energy is ``-inf`` (returned as such).
    """
    H = np.asarray(spec.hamiltonian, dtype=complex)
    layout = layout or SpaceLayout.of(("system", H.shape[0]))
    w, V = hermitian_eig(H)
    e0 = w[0]
    if math.isinf(spec.beta):
        weights = (np.abs(w - e0) <= 1e-12 * max(1.0, abs(e0))).astype(float)
        free = float(e0)
    else:
        weights = np.exp(-spec.beta * (w - e0))
        z_shift = weights.sum()
        free = float(e0 - math.log(z_shift) / spec.beta) if spec.beta > 0 else -math.inf
    weights = weights / weights.sum()
    return DensityOperator(layout, (V * weights) @ V.conj().T, check=False), free


# --------------------------------------------------------------------------
# two-copy protocol

MAIN_ATOM, MAIN_CAVITY, AUX_ATOM, AUX_CAVITY = "atom", "cavity", "atom_x", "cavity_x"


def two_copy_layout(cavity_dim: int = 4) -> SpaceLayout:
    return SpaceLayout.of((MAIN_ATOM, 2), (MAIN_CAVITY, cavity_dim),
                          (AUX_ATOM, 2), (AUX_CAVITY, cavity_dim))


@dataclass(frozen=True)
class TwoCopyResult:
    """Staged states of the main atom-cavity pair."""

    mode: str
    rho_tilde_0: DensityOperator
    rho_tilde_tau: DensityOperator


def simulate_two_copy_protocol(imperfections=None, mode: str = "decorrelation",
                               cavity_dim: int = 4) -> TwoCopyResult:
    """Two atoms, two cavities: the physical stand-in for decorrelation and reset.

    Sequence on ``atom (x) cavity (x) atom_x (x) cavity_x``, all atoms starting in
    ``|e>`` and both cavities empty:

    1. ``atom_x`` <-> ``cavity`` quarter-period pulse (skipped in reset mode),
    2. ``atom`` <-> ``cavity_x`` quarter-period pulse,
    3. trace out ``atom_x`` and ``cavity_x`` to get the main pair's ``rho~_0``,
    4. backward stage on the main pair.

    With an :class:`~irrevqed.noise.ImperfectionModel`, the stage noise is
    applied after every pulse to the atom and cavity that pulse addressed.
    """
    if mode not in ("decorrelation", "reset"):
        raise ValueError(f"mode must be 'decorrelation' or 'reset', got {mode!r}")
    noisy = imperfections is not None and not imperfections.is_ideal
    if noisy:
        from .noise import apply_imperfections
    layout = two_copy_layout(cavity_dim)
    psi = basis_state(layout, atom=E, cavity=0, atom_x=E, cavity_x=0)
    rho = DensityOperator.pure(layout, psi)
    pulse = jc_pulse_matrix(QUARTER_PERIOD, cavity_dim)

    def pulse_on(state, atom, cavity):
        U = embed(pulse, layout, [atom, cavity])
        out = DensityOperator(layout, U @ state.matrix @ U.conj().T, check=False)
        if noisy:
            out = apply_imperfections(out, "forward", imperfections, atom, cavity)
        return out

    if mode == "decorrelation":
        rho = pulse_on(rho, AUX_ATOM, MAIN_CAVITY)
    rho = pulse_on(rho, MAIN_ATOM, AUX_CAVITY)
    rho_t0 = partial_trace(rho, [MAIN_ATOM, MAIN_CAVITY])
    rho_tt = apply_stage(rho_t0, "backward")
    if noisy:
        rho_tt = apply_imperfections(rho_tt, "backward", imperfections)
    return TwoCopyResult(mode, rho_t0, rho_tt)


def environment_channel(kind: str, basis: DephasingBasisSpec = DephasingBasisSpec(),
                        reset_target: DensityOperator | None = None
                        ) -> Callable[[DensityOperator], DensityOperator]:
    """Return the ideal single-pair map for an environment kind."""
    if kind == "identity":
        return lambda rho: rho
    if kind == "dephasing":
        return lambda rho: dephase_channel(rho, basis)
    if kind == "decorrelation":
        return decorrelate
    if kind == "local_thermalization":
        def reset(rho):
            tgt = reset_target
            if tgt is None:
                d = rho.layout.dim_of(CAVITY)
                vac = np.zeros((d, d))
                vac[0, 0] = 1.0
                tgt = DensityOperator(SpaceLayout.of((CAVITY, d)), vac)
            return reset_subsystem(rho, tgt)
        return reset
    raise ValueError(f"unknown environment kind {kind!r}")


def is_channel_output_valid(rho: Operator, tol: float = 1e-12) -> bool:
    m = rho.matrix
    return (abs(np.trace(m) - 1) <= tol
            and np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0] >= -tol)


def kraus_apply(rho: DensityOperator, kraus: Sequence[np.ndarray]) -> DensityOperator:
    m = sum(k @ rho.matrix @ k.conj().T for k in kraus)
    return DensityOperator(rho.layout, m, check=False)
