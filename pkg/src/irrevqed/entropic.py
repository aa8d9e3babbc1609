"""Entropies, KLU divergence and the entropy-production formulas.

Values are in bits unless ``base=math.e`` is requested.  A divergence that
is genuinely infinite (support violation) is reported with ``diverged=True``
and ``value=inf`` instead of a large clamped number.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import DephasingBasisSpec, GibbsSpec, dephase_channel, gibbs_state
from .qstate import (
    CAVITY,
    LOG_FLOOR,
    DensityOperator,
    LayoutError,
    Operator,
    partial_trace,
    tensor_product,
    validate_density,
)

SUPPORT_TOL = 1e-10
BITS = 2.0


@dataclass(frozen=True)
class EntropyValue:
    value: float
    diverged: bool = False
    base: float = BITS

    def __post_init__(self):
        if self.diverged:
            object.__setattr__(self, "value", math.inf)

    def __float__(self) -> float:
        return float(self.value)

    @classmethod
    def infinite(cls, base: float = BITS) -> "EntropyValue":
        return cls(math.inf, True, base)

    def __sub__(self, other: "EntropyValue") -> "EntropyValue":
        if self.diverged or other.diverged:
            return EntropyValue.infinite(self.base)
        return EntropyValue(self.value - other.value, False, self.base)

    def __add__(self, other: "EntropyValue") -> "EntropyValue":
        if self.diverged or other.diverged:
            return EntropyValue.infinite(self.base)
        return EntropyValue(self.value + other.value, False, self.base)


class EnvironmentKind(str, enum.Enum):
    IDENTITY = "identity"
    DEPHASING = "dephasing"
    DECORRELATION = "decorrelation"
    LOCAL_THERMALIZATION = "local_thermalization"


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, Operator) else np.asarray(rho, dtype=complex)


def _check_state(rho) -> None:
    diag = validate_density(_matrix(rho))
    if not diag.passed:
        raise ValueError(f"not a valid density operator: {diag}")


def _entropy_nats(w: np.ndarray) -> float:
    w = w[w > 0]
    return float(-np.sum(w * np.log(w))) + 0.0  # no negative zero


def von_neumann_entropy(rho, base: float = BITS, check: bool = True) -> EntropyValue:
    if check:
        _check_state(rho)
    w = np.linalg.eigvalsh(_matrix(rho))
    return EntropyValue(_entropy_nats(w) / math.log(base), False, base)


def klu_divergence(rho1, rho2, support_tol: float = SUPPORT_TOL, base: float = BITS,
                   floor: float = LOG_FLOOR) -> EntropyValue:
    """Kullback-Leibler-Umegaki divergence ``-Tr[rho1 ln rho2] - S(rho1)``.

    Diverges when some eigenvector of ``rho2`` with eigenvalue below
    ``support_tol`` carries more than ``support_tol`` of ``rho1``'s weight.
    """
    if isinstance(rho1, Operator) and isinstance(rho2, Operator) and rho1.layout != rho2.layout:
        raise LayoutError("klu_divergence needs both states on the same layout")
    m1, m2 = _matrix(rho1), _matrix(rho2)
    if m1.shape != m2.shape:
        raise LayoutError(f"shape mismatch {m1.shape} vs {m2.shape}")
    mu, V = np.linalg.eigh(0.5 * (m2 + m2.conj().T))
    weights = np.real(np.einsum("ij,ik,kj->j", V.conj(), m1, V))
    outside = mu < support_tol
    if np.any(weights[outside] > support_tol):
        return EntropyValue.infinite(base)
    cross = -float(np.dot(weights, np.log(np.maximum(mu, floor))))
    s1 = _entropy_nats(np.linalg.eigvalsh(0.5 * (m1 + m1.conj().T)))
    return EntropyValue((cross - s1) / math.log(base), False, base)


def _bipartition(rho: DensityOperator, a: Sequence[str] | str | None):
    labels = rho.layout.labels
    if len(labels) < 2:
        raise LayoutError("mutual information needs at least two factors")
    if a is None:
        a = [labels[0]]
    elif isinstance(a, str):
        a = [a]
    a = list(a)
    for lab in a:
        rho.layout.index(lab)
    b = [lab for lab in labels if lab not in a]
    if not b:
        raise LayoutError("bipartition leaves the second part empty")
    return a, b


def mutual_information(rho: DensityOperator, a: Sequence[str] | str | None = None,
                       base: float = BITS) -> EntropyValue:
    """``S(A) + S(B) - S(AB)``; ``a`` names the first part (default: first factor)."""
    a, b = _bipartition(rho, a)
    s_a = von_neumann_entropy(partial_trace(rho, a), base, check=False)
    s_b = von_neumann_entropy(partial_trace(rho, b), base, check=False)
    s_ab = von_neumann_entropy(rho, base, check=False)
    return EntropyValue(s_a.value + s_b.value - s_ab.value, False, base)


def product_of_marginals(rho: DensityOperator, a: Sequence[str] | str | None = None) -> DensityOperator:
    a, b = _bipartition(rho, a)
    prod = tensor_product(partial_trace(rho, a), partial_trace(rho, b))
    if prod.layout.labels == rho.layout.labels:
        return prod
    order = [prod.layout.index(lab) for lab in rho.layout.labels]
    dims = prod.layout.dims
    n = len(dims)
    t = prod.matrix.reshape(dims + dims).transpose(order + [n + i for i in order])
    return DensityOperator(rho.layout, t.reshape(rho.dim, rho.dim), check=False)


def relative_entropy_of_coherence(rho: DensityOperator, basis: DephasingBasisSpec = DephasingBasisSpec(),
                                  base: float = BITS) -> EntropyValue:
    """``S(dephased rho) - S(rho)`` for the given dephasing basis."""
    deph = dephase_channel(rho, basis)
    return (von_neumann_entropy(deph, base, check=False)
            - von_neumann_entropy(rho, base, check=False))


def entropy_production(rho_start, rho_end, support_tol: float = SUPPORT_TOL,
                       base: float = BITS) -> EntropyValue:
    """Ensemble entropy production ``D(rho_start || rho_end)``.

    Pass ``(rho_tau, rho~_0)`` or ``(rho_0, rho~_tau)``; both agree when the
    forward and backward stages are unitary.
    """
    return klu_divergence(rho_start, rho_end, support_tol, base)


def sigma_closed_form(kind: EnvironmentKind | str, rho_tau: DensityOperator,
                      basis: DephasingBasisSpec = DephasingBasisSpec(),
                      gibbs: GibbsSpec | None = None, b: str = CAVITY,
                      support_tol: float = SUPPORT_TOL, base: float = BITS) -> EntropyValue:
    """Closed-form entropy production of an environment acting on ``rho_tau``.

    identity: 0.  dephasing: ``I(rho_tau) - I(deph(rho_tau))``.
    decorrelation: ``I(rho_tau)``.  local_thermalization:
    ``I(rho_tau) + D(rho_tau^B || zeta_beta^B)`` for the Gibbs state of ``gibbs``.
    """
    kind = EnvironmentKind(kind)
    if kind is EnvironmentKind.IDENTITY:
        return EntropyValue(0.0, False, base)
    if kind is EnvironmentKind.DEPHASING:
        return (mutual_information(rho_tau, base=base)
                - mutual_information(dephase_channel(rho_tau, basis), base=base))
    if kind is EnvironmentKind.DECORRELATION:
        return mutual_information(rho_tau, base=base)
    if gibbs is None:
        raise ValueError("local_thermalization needs a GibbsSpec for the reset subsystem")
    rho_b = partial_trace(rho_tau, [b])
    zeta, _ = gibbs_state(gibbs, rho_b.layout)
    return mutual_information(rho_tau, base=base) + klu_divergence(rho_b, zeta, support_tol, base)


def thermalization_entropy_production(rho: DensityOperator, gibbs: GibbsSpec,
                                      base: float = BITS) -> EntropyValue:
    """``Delta S - beta Q`` for complete thermalization of ``rho`` to ``zeta_beta``.

    Only finite ``beta`` is meaningful here.
    """
    if math.isinf(gibbs.beta):
        raise ValueError("complete thermalization needs a finite beta")
    zeta, _ = gibbs_state(gibbs, rho.layout)
    H = np.asarray(gibbs.hamiltonian, dtype=complex)
    dS = (von_neumann_entropy(zeta, math.e, check=False).value
          - von_neumann_entropy(rho, math.e, check=False).value)
    Q = float(np.real(np.trace(H @ (zeta.matrix - rho.matrix))))
    return EntropyValue((dS - gibbs.beta * Q) / math.log(base), False, base)


def erased_mutual_information(rho_tau: DensityOperator,
                              channel: Callable[[DensityOperator], DensityOperator],
                              base: float = BITS) -> EntropyValue:
    """Mutual information removed by ``channel``: ``I(rho_tau) - I(channel(rho_tau))``."""
    return mutual_information_drop(rho_tau, channel(rho_tau), base)


def mutual_information_drop(before: DensityOperator, after: DensityOperator,
                            base: float = BITS) -> EntropyValue:
    return mutual_information(before, base=base) - mutual_information(after, base=base)


def entropy_bits(rho) -> float:
    """Plain-float von Neumann entropy in bits, without validation (for ensemble maps)."""
    return _entropy_nats(np.linalg.eigvalsh(_matrix(rho))) / math.log(2)
