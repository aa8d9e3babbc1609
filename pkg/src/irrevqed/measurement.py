"""Tomography effect families and synthetic measurement records.

Each measurement setting pairs an atomic detection basis with a cavity
displacement ``alpha``.  Its effects are

    E_{s,n} = M_s (x) D(alpha)|n><n|D(alpha)^+      (n < photon_resolution)

plus, for each atomic outcome ``s``, a complement absorbing the unresolved
photon numbers, so every setting sums to the identity exactly.  ``M_s`` is
the basis projector mixed with its partner by the detection error.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .qstate import DensityOperator, LayoutError, SpaceLayout, atom_cavity_layout, hermitian_eig

DEFAULT_DETECTION_ERROR = 0.05
# 0 plus a regular heptagon: informationally complete with z/x/y atomic bases at cavity_dim=4
DEFAULT_AMPLITUDES = (0j,) + tuple(0.9 * np.exp(2j * np.pi * k / 7) for k in range(7))

_SQ = 1 / math.sqrt(2)
ATOMIC_BASES = {
    "z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
    "x": (np.array([_SQ, _SQ], dtype=complex), np.array([_SQ, -_SQ], dtype=complex)),
    "y": (np.array([_SQ, 1j * _SQ]), np.array([_SQ, -1j * _SQ])),
}


def displacement_operator(alpha: complex, dim: int) -> np.ndarray:
    """``exp(alpha a^+ - alpha^* a)`` for the truncated ladder operator.

    The generator is truncated first and then exponentiated through the
    eigen-decomposition of the Hermitian matrix ``i*(alpha a^+ - alpha^* a)``,
    so the result is exactly unitary on the truncated space.
    """
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)
    gen = alpha * a.conj().T - np.conj(alpha) * a
    w, V = hermitian_eig(1j * gen)
    return (V * np.exp(-1j * w)) @ V.conj().T


@dataclass(frozen=True)
class SettingSpec:
    """One measurement setting; enough to rebuild its effects exactly."""

    atomic_basis: str
    alpha: complex
    detection_error: float = DEFAULT_DETECTION_ERROR
    photon_resolution: int = 4
    cavity_dim: int = 4

    def __post_init__(self):
        if self.atomic_basis not in ATOMIC_BASES:
            raise ValueError(f"atomic_basis must be one of {sorted(ATOMIC_BASES)}, got {self.atomic_basis!r}")
        if not 0.0 <= self.detection_error <= 0.5:
            raise ValueError(f"detection error must lie in [0, 0.5], got {self.detection_error}")
        if not (math.isfinite(complex(self.alpha).real) and math.isfinite(complex(self.alpha).imag)):
            raise ValueError("displacement amplitude must be finite")
        if not 1 <= self.photon_resolution <= self.cavity_dim:
            raise ValueError("photon_resolution must lie in [1, cavity_dim]")
        object.__setattr__(self, "alpha", complex(self.alpha))

    @property
    def id(self) -> str:
        a = self.alpha
        return f"{self.atomic_basis}@{a.real:+.6f}{a.imag:+.6f}j"

    def to_json(self) -> dict:
        return {"atomic_basis": self.atomic_basis, "alpha": [self.alpha.real, self.alpha.imag],
                "detection_error": self.detection_error,
                "photon_resolution": self.photon_resolution, "cavity_dim": self.cavity_dim}

    @classmethod
    def from_json(cls, d: dict) -> "SettingSpec":
        return cls(d["atomic_basis"], complex(*d["alpha"]), float(d["detection_error"]),
                   int(d["photon_resolution"]), int(d["cavity_dim"]))


@dataclass(frozen=True)
class EffectFamilySpec:
    atomic_bases: tuple[str, ...] = ("z", "x", "y")
    detection_error: float = DEFAULT_DETECTION_ERROR
    displacement_amplitudes: tuple[complex, ...] = DEFAULT_AMPLITUDES
    photon_resolution: int = 4
    cavity_dim: int = 4

    def __post_init__(self):
        object.__setattr__(self, "atomic_bases", tuple(self.atomic_bases))
        object.__setattr__(self, "displacement_amplitudes",
                           tuple(complex(a) for a in self.displacement_amplitudes))
        if not 0.0 <= self.detection_error <= 0.5:
            raise ValueError(f"detection error must lie in [0, 0.5], got {self.detection_error}")
        if not self.atomic_bases or not self.displacement_amplitudes:
            raise ValueError("need at least one atomic basis and one displacement amplitude")

    def settings(self) -> list[SettingSpec]:
        return [SettingSpec(b, a, self.detection_error, self.photon_resolution, self.cavity_dim)
                for b in self.atomic_bases for a in self.displacement_amplitudes]

    def to_json(self) -> dict:
        return {"atomic_bases": list(self.atomic_bases),
                "detection_error": self.detection_error,
                "displacement_amplitudes": [[a.real, a.imag] for a in self.displacement_amplitudes],
                "photon_resolution": self.photon_resolution,
                "cavity_dim": self.cavity_dim}

    @classmethod
    def from_json(cls, d: dict) -> "EffectFamilySpec":
        known = {"atomic_bases", "detection_error", "displacement_amplitudes",
                 "photon_resolution", "cavity_dim"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown effect-family fields: {sorted(unknown)}")
        kw = dict(d)
        if "displacement_amplitudes" in kw:
            kw["displacement_amplitudes"] = tuple(
                complex(*a) if isinstance(a, (list, tuple)) else complex(a)
                for a in kw["displacement_amplitudes"])
        if "atomic_bases" in kw:
            kw["atomic_bases"] = tuple(kw["atomic_bases"])
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class EffectSet:
    setting: SettingSpec
    layout: SpaceLayout
    effects: np.ndarray = field(repr=False)  # (K, d, d)
    outcomes: tuple[tuple[int, int | None], ...]  # (atomic outcome, photon number or None for rest)

    @property
    def id(self) -> str:
        return self.setting.id

    def __len__(self) -> int:
        return len(self.effects)


def _atomic_effects(basis: str, eps: float) -> list[np.ndarray]:
    v0, v1 = ATOMIC_BASES[basis]
    p0, p1 = np.outer(v0, v0.conj()), np.outer(v1, v1.conj())
    return [(1 - eps) * p0 + eps * p1, (1 - eps) * p1 + eps * p0]


def build_setting(setting: SettingSpec) -> EffectSet:
    d = setting.cavity_dim
    D = displacement_operator(setting.alpha, d)
    cav = [np.outer(D[:, n], D[:, n].conj()) for n in range(setting.photon_resolution)]
    rest = np.eye(d) - sum(cav)
    rest = 0.5 * (rest + rest.conj().T)
    effects, outcomes = [], []
    for s, m in enumerate(_atomic_effects(setting.atomic_basis, setting.detection_error)):
        for n, c in enumerate(cav):
            effects.append(np.kron(m, c))
            outcomes.append((s, n))
        effects.append(np.kron(m, rest))
        outcomes.append((s, None))
    return EffectSet(setting, atom_cavity_layout(d), np.array(effects), tuple(outcomes))


def build_effect_set(spec: EffectFamilySpec = EffectFamilySpec()) -> list[EffectSet]:
    """One :class:`EffectSet` per (atomic basis, displacement) pair."""
    return [build_setting(s) for s in spec.settings()]


def born_probabilities(rho: DensityOperator, effect_set: EffectSet) -> np.ndarray:
    """``Tr(rho E_i)`` for each effect, clipped to ``[0, 1]``."""
    if rho.layout.dims != effect_set.layout.dims:
        raise LayoutError("state and effect set live on different spaces")
    p = np.real(np.einsum("ij,kji->k", rho.matrix, effect_set.effects))
    return np.clip(p, 0.0, 1.0)


# --------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Outcome counts per measurement setting, in insertion order."""

    settings: dict[str, SettingSpec] = field(default_factory=dict)
    counts: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, setting: SettingSpec, counts: Sequence[int]) -> None:
        counts = np.asarray(counts, dtype=np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        self.settings[setting.id] = setting
        self.counts[setting.id] = counts

    @property
    def records(self) -> list[tuple[str, int, int]]:
        return [(sid, i, int(c)) for sid, cs in self.counts.items()
                for i, c in enumerate(cs) if c > 0]

    @property
    def total_shots(self) -> int:
        return int(sum(int(c.sum()) for c in self.counts.values()))

    def effect_sets(self) -> list[EffectSet]:
        return [build_setting(self.settings[sid]) for sid in self.counts]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"id": sid, "spec": self.settings[sid].to_json(),
                             "counts": [int(c) for c in cs]})
                 for sid, cs in self.counts.items()]
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text: str) -> "Dataset":
        ds = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            setting = SettingSpec.from_json(obj["spec"])
            if setting.id != obj["id"]:
                raise ValueError(f"record id {obj['id']!r} does not match its spec ({setting.id!r})")
            expected = 2 * (setting.photon_resolution + 1)
            if len(obj["counts"]) != expected:
                raise ValueError(f"{obj['id']}: expected {expected} counts, got {len(obj['counts'])}")
            ds.add(setting, obj["counts"])
        return ds


def split_shots(total: int, parts: int) -> list[int]:
    """Spread ``total`` shots as evenly as possible over ``parts`` settings."""
    q, r = divmod(int(total), parts)
    return [q + (1 if k < r else 0) for k in range(parts)]


def sample_dataset(rho: DensityOperator, effect_sets: Iterable[EffectSet],
                   shots: int | Sequence[int], seed) -> Dataset:
    """Multinomial counts per setting from the Born probabilities.

    ``shots`` is either one count applied to every setting or a per-setting
    sequence.  ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    effect_sets = list(effect_sets)
    if np.isscalar(shots):
        shots = [int(shots)] * len(effect_sets)
    if len(shots) != len(effect_sets):
        raise ValueError("need one shot count per effect set")
    rng = np.random.default_rng(seed)
    ds = Dataset()
    for es, n in zip(effect_sets, shots):
        if n < 0:
            raise ValueError("shots must be >= 0")
        if n == 0:
            continue
        p = born_probabilities(rho, es)
        ds.add(es.setting, rng.multinomial(n, p / p.sum()))
    return ds
