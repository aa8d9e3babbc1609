"""Compiled inner loop of the Metropolis sampler.

States are stored as real coordinates ``x`` in the Hermitian basis
``{E_ii} + {E_ij + E_ji} + {i E_ij - i E_ji}`` (i < j), so a proposal is a
plain vector increment and outcome probabilities are ``A @ x``.
"""

from __future__ import annotations

import math

import numba
import numpy as np


def hermitian_index(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column of the upper-triangle coordinates, in coordinate order."""
    iu, ju = np.triu_indices(d, 1)
    return iu.astype(np.int64), ju.astype(np.int64)


def to_coords(m: np.ndarray) -> np.ndarray:
    d = m.shape[0]
    iu, ju = hermitian_index(d)
    return np.concatenate([np.real(np.diag(m)), m.real[iu, ju], m.imag[iu, ju]])


def from_coords(x: np.ndarray, d: int) -> np.ndarray:
    iu, ju = hermitian_index(d)
    u = len(iu)
    m = np.diag(x[:d]).astype(complex)
    m[iu, ju] = x[d:d + u] + 1j * x[d + u:]
    m[ju, iu] = x[d:d + u] - 1j * x[d + u:]
    return m


def design_matrix(effects: np.ndarray) -> np.ndarray:
    """Rows ``a`` with ``Tr(rho E) = a @ x`` for each effect ``E``."""
    d = effects.shape[-1]
    iu, ju = hermitian_index(d)
    diag = np.real(np.einsum("kii->ki", effects))
    return np.hstack([diag, 2 * effects.real[:, iu, ju], 2 * effects.imag[:, iu, ju]])


@numba.njit(cache=True)
def _positive_definite(x, d, iu, ju):
    u = iu.shape[0]
    m = np.zeros((d, d), dtype=np.complex128)
    for i in range(d):
        m[i, i] = x[i]
    for k in range(u):
        m[iu[k], ju[k]] = x[d + k] + 1j * x[d + u + k]
        m[ju[k], iu[k]] = x[d + k] - 1j * x[d + u + k]
    L = np.zeros((d, d), dtype=np.complex128)
    for j in range(d):
        s = m[j, j].real
        for k in range(j):
            s -= L[j, k].real ** 2 + L[j, k].imag ** 2
        if s <= 0.0:
            return False
        ljj = math.sqrt(s)
        L[j, j] = ljj
        for i in range(j + 1, d):
            t = m[i, j]
            for k in range(j):
                t -= L[i, k] * np.conj(L[j, k])
            L[i, j] = t / ljj
    return True


@numba.njit(cache=True)
def run_block(x, p, ll, dx, logu, A, counts, d, iu, ju, record, out):
    """Advance the chain ``len(dx)`` steps in place.

    ``record[k] >= 0`` stores the state after step ``k`` into ``out[record[k]]``.
    Returns ``(ll, n_accepted)``; ``x`` and ``p`` are updated in place.
    """
    m, n = dx.shape
    K = A.shape[0]
    xn = np.empty(n)
    pn = np.empty(K)
    accepted = 0
    for step in range(m):
        for i in range(n):
            xn[i] = x[i] + dx[step, i]
        if _positive_definite(xn, d, iu, ju):
            ok = True
            ll_new = 0.0
            for r in range(K):
                acc = p[r]
                for i in range(n):
                    acc += A[r, i] * dx[step, i]
                if acc <= 0.0:
                    ok = False
                    break
                pn[r] = acc
                ll_new += counts[r] * math.log(acc)
            if ok and logu[step] < ll_new - ll:
                for i in range(n):
                    x[i] = xn[i]
                for r in range(K):
                    p[r] = pn[r]
                ll = ll_new
                accepted += 1
        if record[step] >= 0:
            for i in range(n):
                out[record[step], i] = x[i]
    return ll, accepted
