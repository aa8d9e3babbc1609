"""Imperfection channels applied after each ideal cycle stage.

Magnitudes are free parameters.  Every channel here is CPTP, so the composed
map keeps density operators valid.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from .dynamics import QUARTER_PERIOD, jc_pulse_matrix
from .qstate import ATOM, CAVITY, DensityOperator, embed

_PROBABILITIES = ("atom_decay_per_stage", "cavity_decay_per_stage", "second_atom_prob")

# probabilists' Gauss-Hermite rule, 5 nodes
_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(5)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(2 * math.pi)


@dataclass(frozen=True)
class ImperfectionModel:
    atom_decay_per_stage: float = 0.0
    cavity_decay_per_stage: float = 0.0
    pulse_area_jitter: float = 0.0
    echo_angle_error: float = 0.0
    second_atom_prob: float = 0.0

    def __post_init__(self):
        for name in _PROBABILITIES:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.pulse_area_jitter >= 0:
            raise ValueError(f"pulse_area_jitter must be >= 0, got {self.pulse_area_jitter}")
        if not math.isfinite(self.echo_angle_error):
            raise ValueError("echo_angle_error must be finite")

    @classmethod
    def realistic(cls) -> "ImperfectionModel":
        """Defaults that put noisy runs visibly below the ideal values."""
        return cls(0.02, 0.02, 0.03, 0.05, 0.02)

    @property
    def is_ideal(self) -> bool:
        return all(getattr(self, f.name) == 0 for f in fields(self))

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "ImperfectionModel":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown imperfection fields: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})


def atom_damping_kraus(gamma: float) -> list[np.ndarray]:
    # index 0 = e, 1 = g
    k0 = np.array([[math.sqrt(1 - gamma), 0], [0, 1]], dtype=complex)
    k1 = np.array([[0, 0], [math.sqrt(gamma), 0]], dtype=complex)
    return [k0, k1]


def cavity_damping_kraus(gamma: float, dim: int) -> list[np.ndarray]:
    """Truncated bosonic amplitude damping; ``K_k |n> = sqrt(C(n,k) (1-g)^(n-k) g^k) |n-k>``."""
    out = []
    for k in range(dim):
        K = np.zeros((dim, dim), dtype=complex)
        for n in range(k, dim):
            K[n - k, n] = math.sqrt(math.comb(n, k) * (1 - gamma) ** (n - k) * gamma ** k)
        out.append(K)
    return out


def excitation_injection_kraus(dim: int) -> list[np.ndarray]:
    """``|n> -> |n+1>`` with the top level left in place (keeps the map trace preserving)."""
    shift = np.zeros((dim, dim), dtype=complex)
    for n in range(dim - 1):
        shift[n + 1, n] = 1.0
    top = np.zeros((dim, dim), dtype=complex)
    top[dim - 1, dim - 1] = 1.0
    return [shift, top]


def _kraus_on(m: np.ndarray, layout, label: str, kraus) -> np.ndarray:
    ks = [embed(k, layout, [label]) for k in kraus]
    return sum(k @ m @ k.conj().T for k in ks)


def apply_imperfections(rho: DensityOperator, stage: str, model: ImperfectionModel,
                        atom: str = ATOM, cavity: str = CAVITY,
                        theta: float = QUARTER_PERIOD) -> DensityOperator:
    """Noise correction applied to the output of an ideal ``stage``.

    In order: atomic amplitude damping, cavity amplitude damping, the echo
    angle error (backward stage only), pulse-area jitter and second-atom
    excitation injection (forward stage only).

    Because pulses of different areas share one generator, a pulse of area
    ``theta*(1 + j*x)`` equals the ideal pulse followed by an extra pulse of
    area ``theta*j*x``; jitter is the 5-node Gauss-Hermite average of that
    extra pulse over ``x ~ N(0, 1)``.  Likewise an echo ``R(delta) P`` in place
    of ``P`` equals the ideal backward stage followed by
    ``U_JC R(delta) U_JC^+``.
    """
    if stage not in ("forward", "backward"):
        raise ValueError(f"stage must be 'forward' or 'backward', got {stage!r}")
    if model.is_ideal:
        return rho
    layout = rho.layout
    d = layout.dim_of(cavity)
    m = rho.matrix
    if model.atom_decay_per_stage > 0:
        m = _kraus_on(m, layout, atom, atom_damping_kraus(model.atom_decay_per_stage))
    if model.cavity_decay_per_stage > 0:
        m = _kraus_on(m, layout, cavity, cavity_damping_kraus(model.cavity_decay_per_stage, d))
    if stage == "backward" and model.echo_angle_error != 0:
        u = jc_pulse_matrix(theta, d)
        r = np.kron(np.diag([1.0, np.exp(1j * model.echo_angle_error)]), np.eye(d))
        W = embed(u @ r @ u.T, layout, [atom, cavity])
        m = W @ m @ W.conj().T
    if model.pulse_area_jitter > 0:
        acc = np.zeros_like(m)
        for x, w in zip(_GH_NODES, _GH_WEIGHTS):
            V = embed(jc_pulse_matrix(theta * model.pulse_area_jitter * x, d), layout, [atom, cavity])
            acc += w * (V @ m @ V.conj().T)
        m = acc
    if stage == "forward" and model.second_atom_prob > 0:
        p = model.second_atom_prob
        m = (1 - p) * m + p * _kraus_on(m, layout, cavity, excitation_injection_kraus(d))
    m = 0.5 * (m + m.conj().T)
    return DensityOperator(layout, m, check=False)

