"""Dense Hermitian linear algebra on labeled tensor-product spaces.

Operators carry a :class:`SpaceLayout` (ordered ``(label, dim)`` factors) so
partial traces and embeddings can be addressed by subsystem name.  Basis
ordering is row-major over the factors: for the canonical atom(2) x cavity(4)
layout the basis reads ``|e0>, |e1>, ..., |e3>, |g0>, ..., |g3>``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

TOL_HERM = 1e-10
TOL_TRACE = 1e-10
TOL_PSD = 1e-10
TOL_UNITARY = 1e-10
LOG_FLOOR = 1e-18

ATOM = "atom"
CAVITY = "cavity"


class LayoutError(ValueError):
    """Raised on label collisions, unknown labels or dimension mismatches."""


class StateError(ValueError):
    """Raised when a matrix violates a density/unitary/Hermitian invariant."""


@dataclass(frozen=True)
class SpaceLayout:
    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lab), int(dim)) for lab, dim in self.factors)
        object.__setattr__(self, "factors", factors)
        labels = [lab for lab, _ in factors]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate labels in layout: {labels}")
        for lab, dim in factors:
            if dim < 1:
                raise LayoutError(f"factor {lab!r} has non-positive dimension {dim}")

    @classmethod
    def of(cls, *factors: tuple[str, int]) -> "SpaceLayout":
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=int)) if self.factors else 1

    def dim_of(self, label: str) -> int:
        for lab, dim in self.factors:
            if lab == label:
                return dim
        raise LayoutError(f"unknown label {label!r}; layout has {self.labels}")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown label {label!r}; layout has {self.labels}") from None

    def subset(self, labels: Iterable[str]) -> "SpaceLayout":
        keep = set(labels)
        for lab in keep:
            self.index(lab)
        return SpaceLayout(tuple(f for f in self.factors if f[0] in keep))

    def concat(self, other: "SpaceLayout") -> "SpaceLayout":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise LayoutError(f"label collision in tensor product: {sorted(clash)}")
        return SpaceLayout(self.factors + other.factors)

    def to_json(self) -> list:
        return [[lab, dim] for lab, dim in self.factors]

    @classmethod
    def from_json(cls, data) -> "SpaceLayout":
        return cls(tuple((lab, dim) for lab, dim in data))


def atom_cavity_layout(cavity_dim: int = 4) -> SpaceLayout:
    """The experiment layout: two-level atom (index 0 = e, 1 = g) and a truncated cavity."""
    return SpaceLayout.of((ATOM, 2), (CAVITY, cavity_dim))


@dataclass(frozen=True, eq=False)
class Operator:
    """A square matrix acting on a labeled space."""

    layout: SpaceLayout
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        n = self.layout.total_dim
        if m.shape != (n, n):
            raise LayoutError(f"matrix shape {m.shape} does not match layout dimension {n}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def dag(self) -> np.ndarray:
        return self.matrix.conj().T


class DensityOperator(Operator):
    """Positive semidefinite, unit-trace Hermitian operator.

    Validation runs on construction unless ``check=False`` is passed; internal
    code that produces states through trace- and positivity-preserving maps
    skips it.
    """

    def __init__(self, layout: SpaceLayout, matrix, check: bool = True):
        super().__init__(layout, matrix)
        if check:
            diag = validate_density(self.matrix)
            if not diag.passed:
                raise StateError(f"invalid density operator: {diag}")

    @classmethod
    def pure(cls, layout: SpaceLayout, psi) -> "DensityOperator":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(layout, np.outer(psi, psi.conj()))

    @classmethod
    def maximally_mixed(cls, layout: SpaceLayout) -> "DensityOperator":
        n = layout.total_dim
        return cls(layout, np.eye(n) / n)


class UnitaryOperator(Operator):
    def __init__(self, layout: SpaceLayout, matrix, check: bool = True):
        super().__init__(layout, matrix)
        if check:
            err = np.linalg.norm(self.matrix @ self.dag() - np.eye(self.dim), 2)
            if err > TOL_UNITARY:
                raise StateError(f"matrix is not unitary: ||UU^+ - I|| = {err:.3e}")

    def conjugate(self, rho: DensityOperator) -> DensityOperator:
        if rho.layout != self.layout:
            raise LayoutError("layout mismatch between unitary and state")
        return DensityOperator(rho.layout, self.matrix @ rho.matrix @ self.dag(), check=False)


def basis_state(layout: SpaceLayout, **indices: int) -> np.ndarray:
    """Computational basis ket with the given per-label indices (missing labels -> 0)."""
    unknown = set(indices) - set(layout.labels)
    if unknown:
        raise LayoutError(f"unknown labels {sorted(unknown)}")
    idx = tuple(indices.get(lab, 0) for lab in layout.labels)
    ket = np.zeros(layout.total_dim, dtype=complex)
    ket[np.ravel_multi_index(idx, layout.dims)] = 1.0
    return ket


def projector(layout: SpaceLayout, **indices: int) -> DensityOperator:
    return DensityOperator.pure(layout, basis_state(layout, **indices))


# --------------------------------------------------------------------------
# products and partial traces


def tensor_product(a: Operator, b: Operator) -> Operator:
    """Kronecker product with concatenated layout; keeps the operand type when both agree."""
    layout = a.layout.concat(b.layout)
    m = np.kron(a.matrix, b.matrix)
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(layout, m, check=False)
    if isinstance(a, UnitaryOperator) and isinstance(b, UnitaryOperator):
        return UnitaryOperator(layout, m, check=False)
    return Operator(layout, m)


def partial_trace(rho: Operator, keep: Iterable[str]) -> Operator:
    """Trace out every factor not listed in ``keep``; kept factors retain layout order."""
    keep = set(keep)
    if not keep:
        raise LayoutError("partial_trace needs at least one label to keep")
    sub = rho.layout.subset(keep)
    dims = rho.layout.dims
    n = len(dims)
    t = rho.matrix.reshape(dims + dims)
    kept = [i for i, lab in enumerate(rho.layout.labels) if lab in keep]
    traced = [i for i in range(n) if i not in kept]
    # einsum with shared indices on traced axes
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] if i in kept else letters[i] for i in range(n)]
    out = [row[i] for i in kept] + [col[i] for i in kept]
    reduced = np.einsum("".join(row + col) + "->" + "".join(out), t)
    d = sub.total_dim
    reduced = reduced.reshape(d, d)
    if isinstance(rho, DensityOperator):
        return DensityOperator(sub, reduced, check=False)
    return Operator(sub, reduced)


def embed(op: np.ndarray, layout: SpaceLayout, labels: Sequence[str]) -> np.ndarray:
    """Lift ``op`` acting on the ordered factors ``labels`` to the full ``layout``.

    Identity acts on the remaining factors.
    """
    idx = [layout.index(lab) for lab in labels]
    sub_dims = [layout.dims[i] for i in idx]
    k = int(np.prod(sub_dims))
    op = np.asarray(op, dtype=complex)
    if op.shape != (k, k):
        raise LayoutError(f"operator shape {op.shape} does not match factors {labels}")
    rest = [i for i in range(len(layout.dims)) if i not in idx]
    rest_dim = int(np.prod([layout.dims[i] for i in rest])) if rest else 1
    full = np.kron(op, np.eye(rest_dim))
    # full acts on order (labels..., rest...); permute back to layout order
    order = idx + rest
    dims_in_order = [layout.dims[i] for i in order]
    n = len(order)
    t = full.reshape(dims_in_order + dims_in_order)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    d = layout.total_dim
    return t.reshape(d, d)


# --------------------------------------------------------------------------
# spectral tools


def _check_hermitian(m: np.ndarray, tol: float = TOL_HERM) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StateError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    defect = float(np.abs(m - m.conj().T).max(initial=0.0))
    if defect > tol * scale:
        raise StateError(f"matrix is not Hermitian (defect {defect:.3e})")
    return 0.5 * (m + m.conj().T)


def _canonical_phase(v: np.ndarray) -> np.ndarray:
    # first component with non-negligible magnitude made real positive
    k = int(np.argmax(np.abs(v) > 1e-8))
    ph = v[k] / abs(v[k])
    return v / ph


def _canonical_degenerate_basis(w: np.ndarray, V: np.ndarray, decimals: int) -> np.ndarray:
    # Within each degenerate cluster LAPACK may return any orthonormal basis;
    # replace it by Gram-Schmidt on the projected standard basis vectors.
    V = V.copy()
    d = len(w)
    scale = max(1.0, float(np.abs(w).max(initial=0.0)))
    start = 0
    while start < d:
        stop = start + 1
        while stop < d and w[stop] - w[start] <= 10.0 ** (-decimals) * scale:
            stop += 1
        k = stop - start
        if k > 1:
            P = V[:, start:stop] @ V[:, start:stop].conj().T
            basis = []
            for j in range(d):
                v = P[:, j].copy()
                for b in basis:
                    v -= b * (b.conj() @ v)
                nv = np.linalg.norm(v)
                if nv > 1e-6:
                    basis.append(v / nv)
                if len(basis) == k:
                    break
            V[:, start:stop] = np.column_stack(basis)
        start = stop
    return V


def hermitian_eig(m, tol: float = TOL_HERM, decimals: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix with a reproducible ordering.

    Eigenvalues come back ascending.  Within a group of eigenvalues that agree to
    ``decimals`` places, eigenvectors (phase-fixed so their first significant
    entry is real positive) are ordered by descending lexicographic order of
    their rounded entries, so a degenerate diagonal matrix yields the standard
    basis in index order.

    Returns
    -------
    w : ndarray, shape (d,)
    V : ndarray, shape (d, d)
        Columns are orthonormal eigenvectors, ``m = V diag(w) V^+``.
    """
    h = _check_hermitian(m, tol)
    w, V = np.linalg.eigh(h)
    V = _canonical_degenerate_basis(w, V, decimals)
    V = np.column_stack([_canonical_phase(V[:, j]) for j in range(V.shape[1])])

    def key(j):
        v = np.round(V[:, j], decimals)
        entries = tuple(x for z in v for x in (-z.real + 0.0, -z.imag + 0.0))
        return (round(float(w[j]), decimals),) + entries

    order = sorted(range(len(w)), key=key)
    return w[order], V[:, order]


def matrix_log_clamped(rho, floor: float = LOG_FLOOR) -> np.ndarray:
    """Matrix logarithm with eigenvalues below ``floor`` raised to ``floor`` first."""
    if not floor > 0:
        raise ValueError(f"log floor must be positive, got {floor}")
    m = rho.matrix if isinstance(rho, Operator) else rho
    w, V = hermitian_eig(m)
    return (V * np.log(np.maximum(w, floor))) @ V.conj().T


def matrix_exp_hermitian(h) -> np.ndarray:
    w, V = hermitian_eig(h)
    return (V * np.exp(w)) @ V.conj().T


@dataclass(frozen=True)
class DensityDiagnostics:
    herm_defect: float
    min_eigenvalue: float
    trace_defect: float
    tol_herm: float
    tol_psd: float
    tol_trace: float

    @property
    def hermitian(self) -> bool:
        return self.herm_defect <= self.tol_herm

    @property
    def psd(self) -> bool:
        return self.min_eigenvalue >= -self.tol_psd

    @property
    def unit_trace(self) -> bool:
        return self.trace_defect <= self.tol_trace

    @property
    def passed(self) -> bool:
        return self.hermitian and self.psd and self.unit_trace


def validate_density(m, tol_herm: float = TOL_HERM, tol_psd: float = TOL_PSD,
                     tol_trace: float = TOL_TRACE) -> DensityDiagnostics:
    """Report Hermiticity defect, minimum eigenvalue and trace defect of ``m``.

    Never raises on a square input; the eigenvalues are those of the Hermitian part.
    """
    m = np.asarray(m.matrix if isinstance(m, Operator) else m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise StateError(f"expected a square matrix, got shape {m.shape}")
    herm = float(np.abs(m - m.conj().T).max(initial=0.0))
    h = 0.5 * (m + m.conj().T)
    min_eig = float(np.linalg.eigvalsh(h)[0]) if m.size else 0.0
    tr = np.trace(m)
    trace_defect = float(abs(tr - 1.0))
    return DensityDiagnostics(herm, min_eig, trace_defect, tol_herm, tol_psd, tol_trace)


# --------------------------------------------------------------------------
# distances


def trace_distance(a, b) -> float:
    """Half the trace norm of the difference."""
    ma = a.matrix if isinstance(a, Operator) else np.asarray(a)
    mb = b.matrix if isinstance(b, Operator) else np.asarray(b)
    diff = ma - mb
    diff = 0.5 * (diff + diff.conj().T)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def fidelity(a, b) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(a) b sqrt(a)))**2``."""
    ma = a.matrix if isinstance(a, Operator) else np.asarray(a)
    mb = b.matrix if isinstance(b, Operator) else np.asarray(b)
    w, V = np.linalg.eigh(0.5 * (ma + ma.conj().T))
    sa = (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T
    inner = sa @ mb @ sa
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


# --------------------------------------------------------------------------
# serialization


def operator_to_json(op: Operator) -> dict:
    return {
        "layout": op.layout.to_json(),
        "real": op.matrix.real.tolist(),
        "imag": op.matrix.imag.tolist(),
    }


def operator_from_json(data: dict, kind: type = DensityOperator, check: bool = True) -> Operator:
    layout = SpaceLayout.from_json(data["layout"])
    m = np.array(data["real"], dtype=float) + 1j * np.array(data["imag"], dtype=float)
    if kind is Operator:
        return Operator(layout, m)
    return kind(layout, m, check=check)


def dumps_operator(op: Operator) -> str:
    return json.dumps(operator_to_json(op))


def loads_operator(text: str, kind: type = DensityOperator) -> Operator:
    return operator_from_json(json.loads(text), kind)
