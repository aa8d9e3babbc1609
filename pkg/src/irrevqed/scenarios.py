"""End-to-end forward / environment / backward cycles with simulated tomography.

A scenario produces the four reference states ``rho_0``, ``rho_tau``,
``rho~_0`` and ``rho~_tau``, samples a tomography record at each, reconstructs
them (maximum likelihood and a Metropolis ensemble) and estimates

* ``sigma``: entropy production ``D(rho_0 || rho~_tau)`` from the cycle endpoints,
* ``erased_mi``: ``I(rho_tau) - I(rho~_0)`` around the environment,
* the von Neumann entropy at every point,

together with plug-in values from the maximum-likelihood states and the
exact values of the simulated true states.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from .dynamics import (
    DephasingBasisSpec,
    apply_stage,
    dephase_channel,
    initial_state,
    simulate_two_copy_protocol,
)
from .entropic import (
    EntropyValue,
    EnvironmentKind,
    entropy_bits,
    klu_divergence,
    mutual_information,
    von_neumann_entropy,
)
from .inference import (
    FunctionalEstimate,
    LikelihoodModel,
    MLEResult,
    PosteriorEnsemble,
    SamplerOptions,
    estimate_functional,
    metropolis_sample,
    mle_estimate,
)
from .measurement import Dataset, EffectFamilySpec, build_effect_set, sample_dataset, split_shots
from .noise import ImperfectionModel, apply_imperfections
from .qstate import DensityOperator, fidelity, operator_to_json, validate_density

log = logging.getLogger(__name__)

POINTS = ("rho_0", "rho_tau", "rho_tilde_0", "rho_tilde_tau")
ENV_ALIASES = {
    "id": "identity", "identity": "identity",
    "deph": "dephasing", "dephasing": "dephasing",
    "decor": "decorrelation", "decorrelation": "decorrelation",
    "reset": "local_thermalization", "local_thermalization": "local_thermalization",
}
ENV_SHORT = {"identity": "id", "dephasing": "deph", "decorrelation": "decor",
             "local_thermalization": "reset"}


class ConfigError(ValueError):
    """Invalid or incomplete scenario configuration."""


class NumericalError(RuntimeError):
    """A reconstruction produced an invalid state."""


def normalize_environment(name: str) -> str:
    try:
        return ENV_ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; expected one of {sorted(ENV_ALIASES)}") from None


@dataclass(frozen=True)
class MLEOptions:
    max_iters: int = 20000
    tol: float = 1e-10
    dilution: float = 0.5

    def to_json(self) -> dict:
        return {"max_iters": self.max_iters, "tol": self.tol, "dilution": self.dilution}


@dataclass(frozen=True)
class ScenarioConfig:
    environment: str = "identity"
    imperfections: ImperfectionModel = ImperfectionModel()
    effects: EffectFamilySpec = EffectFamilySpec()
    shots: int = 50_000
    seed: int = 0
    sampler: SamplerOptions = SamplerOptions(n=100, thinning=10_000, burn_in=50_000)
    mle: MLEOptions = MLEOptions()
    dephasing_basis: DephasingBasisSpec = DephasingBasisSpec()
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "environment", normalize_environment(self.environment))
        if self.shots < 0:
            raise ConfigError("shots must be >= 0")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    @property
    def kind(self) -> EnvironmentKind:
        return EnvironmentKind(self.environment)

    def to_json(self) -> dict:
        return {
            "environment": self.environment,
            "imperfections": self.imperfections.to_json(),
            "effects": self.effects.to_json(),
            "shots": self.shots,
            "seed": self.seed,
            "sampler": self.sampler.to_json(),
            "mle": self.mle.to_json(),
            "dephasing_basis": {"mode": self.dephasing_basis.mode.value,
                                "target": self.dephasing_basis.target.value},
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioConfig":
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration fields: {sorted(unknown)}")
        try:
            kw = {}
            if "environment" in d:
                kw["environment"] = str(d["environment"])
            if "imperfections" in d:
                kw["imperfections"] = ImperfectionModel.from_json(d["imperfections"])
            if "effects" in d:
                kw["effects"] = EffectFamilySpec.from_json(d["effects"])
            if "shots" in d:
                kw["shots"] = _as_int(d["shots"], "shots")
            if "seed" in d:
                kw["seed"] = _as_int(d["seed"], "seed")
            if "sampler" in d:
                kw["sampler"] = SamplerOptions.from_json(d["sampler"])
            if "mle" in d:
                kw["mle"] = MLEOptions(**d["mle"])
            if "dephasing_basis" in d:
                kw["dephasing_basis"] = DephasingBasisSpec(**d["dephasing_basis"])
            if "output_dir" in d:
                kw["output_dir"] = str(d["output_dir"])
            return cls(**kw)
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_json(data)

    def canonical_json(self) -> str:
        """Sorted, compact JSON of everything that affects the numbers (not output paths)."""
        d = self.to_json()
        del d["output_dir"]
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def point_seed(self, point: str, purpose: str) -> int:
        """Independent, reproducible per-task seed derived from the config seed."""
        key = [POINTS.index(point), ["data", "chain"].index(purpose)]
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _as_int(v, name):
    if isinstance(v, bool) or not float(v).is_integer():
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(v)


# --------------------------------------------------------------------------
# true states


def true_states(environment: str, imperfections: ImperfectionModel = ImperfectionModel(),
                dephasing_basis: DephasingBasisSpec = DephasingBasisSpec(),
                cavity_dim: int = 4) -> dict[str, DensityOperator]:
    """Simulated states at the four reference points of one cycle."""
    env = normalize_environment(environment)
    rho_0 = initial_state(cavity_dim)
    rho_tau = apply_imperfections(apply_stage(rho_0, "forward"), "forward", imperfections)
    if env in ("decorrelation", "local_thermalization"):
        mode = "decorrelation" if env == "decorrelation" else "reset"
        res = simulate_two_copy_protocol(imperfections, mode, cavity_dim)
        rho_t0, rho_tt = res.rho_tilde_0, res.rho_tilde_tau
    else:
        rho_t0 = rho_tau if env == "identity" else dephase_channel(rho_tau, dephasing_basis)
        rho_tt = apply_imperfections(apply_stage(rho_t0, "backward"), "backward", imperfections)
    return {"rho_0": rho_0, "rho_tau": rho_tau, "rho_tilde_0": rho_t0, "rho_tilde_tau": rho_tt}


# --------------------------------------------------------------------------
# report types


@dataclass(frozen=True)
class Quantity:
    environment: str
    name: str
    estimate: float
    delta: float = 0.0
    diverged_fraction: float = 0.0
    diverged: bool = False
    method: str = "ensemble"

    def to_json(self) -> dict:
        return {"environment": self.environment, "name": self.name, "method": self.method,
                "estimate": self.estimate if math.isfinite(self.estimate) else None,
                "delta": self.delta if math.isfinite(self.delta) else None,
                "diverged_fraction": self.diverged_fraction, "diverged": self.diverged}

    @classmethod
    def from_json(cls, d: dict) -> "Quantity":
        est = math.inf if d["estimate"] is None else float(d["estimate"])
        delta = math.nan if d["delta"] is None else float(d["delta"])
        return cls(d["environment"], d["name"], est, delta, float(d["diverged_fraction"]),
                   bool(d["diverged"]), d.get("method", "ensemble"))


@dataclass
class PointSummary:
    true_state: DensityOperator
    mle: MLEResult | None = None
    ensemble: PosteriorEnsemble | None = None

    @property
    def mle_fidelity(self) -> float:
        return fidelity(self.true_state, self.mle.rho) if self.mle is not None else math.nan

    def to_json(self) -> dict:
        out = {"true_state": operator_to_json(self.true_state)}
        if self.mle is not None:
            out["mle"] = {"state": operator_to_json(self.mle.rho),
                          "log_likelihood": self.mle.log_likelihood,
                          "iterations": self.mle.iterations, "converged": self.mle.converged,
                          "fidelity_to_true": self.mle_fidelity}
        if self.ensemble is not None:
            e = self.ensemble
            out["ensemble"] = {"n": len(e), "thinning": e.thinning, "burn_in": e.burn_in,
                               "seed": e.seed, "sigma": e.sigma,
                               "acceptance_rate": e.acceptance_rate}
        return out


@dataclass
class ScenarioReport:
    environment: str
    config_hash: str
    seed: int
    ideal: bool
    points: dict[str, PointSummary] = field(default_factory=dict)
    quantities: list[Quantity] = field(default_factory=list)
    partial: bool = False
    points_json: dict | None = field(default=None, repr=False)

    def quantity(self, name: str, method: str | None = None) -> Quantity:
        for q in self.quantities:
            if q.name == name and (method is None or q.method == method):
                return q
        raise KeyError(name)

    def to_json(self) -> dict:
        return {
            "environment": self.environment,
            "provenance": {"config_hash": self.config_hash, "seed": self.seed,
                           "ideal": self.ideal, "partial": self.partial},
            "points": ({k: v.to_json() for k, v in self.points.items()}
                       if self.points or self.points_json is None else self.points_json),
            "quantities": [q.to_json() for q in self.quantities],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ScenarioReport":
        """Rebuild a report for re-rendering; point details are kept as plain JSON."""
        prov = d["provenance"]
        return cls(d["environment"], prov["config_hash"], int(prov["seed"]), bool(prov["ideal"]),
                   {}, [Quantity.from_json(q) for q in d["quantities"]],
                   bool(prov.get("partial", False)), d.get("points", {}))


# --------------------------------------------------------------------------
# stages of a run


def simulate_datasets(config: ScenarioConfig, states: dict[str, DensityOperator]) -> dict[str, Dataset]:
    effect_sets = build_effect_set(config.effects)
    shots = split_shots(config.shots, len(effect_sets))
    return {name: sample_dataset(states[name], effect_sets, shots, config.point_seed(name, "data"))
            for name in POINTS}


def reconstruct(config: ScenarioConfig, name: str, dataset: Dataset,
                sampler: bool = True) -> tuple[MLEResult, PosteriorEnsemble | None]:
    """Maximum likelihood, then a Metropolis chain started from it."""
    model = LikelihoodModel(dataset, build_effect_set(config.effects))
    mle = mle_estimate(model, config.mle.max_iters, config.mle.tol, config.mle.dilution)
    if not validate_density(mle.rho.matrix).passed:
        raise NumericalError(f"{name}: maximum-likelihood state is not a valid density operator")
    if not sampler:
        return mle, None
    opts = replace(config.sampler, seed=config.point_seed(name, "chain"))
    ens = metropolis_sample(model, opts, initial=mle.rho)
    for m in ens.samples:
        if not validate_density(m).passed:
            raise NumericalError(f"{name}: sampler produced an invalid state")
    return mle, ens


def _d_bits(a, b) -> EntropyValue:
    return klu_divergence(a, b)


def _mi_drop(a, b) -> float:
    return mutual_information(a).value - mutual_information(b).value


def _exact(env: str, name: str, v: EntropyValue | float, method: str) -> Quantity:
    if isinstance(v, EntropyValue):
        return Quantity(env, name, v.value, 0.0, 1.0 if v.diverged else 0.0, v.diverged, method)
    return Quantity(env, name, float(v), 0.0, 0.0, False, method)


def _from_estimate(env: str, name: str, est: FunctionalEstimate) -> Quantity:
    return Quantity(env, name, est.f_est, est.delta, est.diverged_fraction,
                    est.n_used == 0, "ensemble")


def state_quantities(env: str, states: dict[str, DensityOperator], method: str) -> list[Quantity]:
    """Exact sigma, erased mutual information and entropies of fixed states."""
    out = [
        _exact(env, "sigma", _d_bits(states["rho_0"], states["rho_tilde_tau"]), method),
        _exact(env, "sigma_forward", _d_bits(states["rho_tau"], states["rho_tilde_0"]), method),
        _exact(env, "erased_mi", _mi_drop(states["rho_tau"], states["rho_tilde_0"]), method),
    ]
    out += [_exact(env, f"entropy_{p}", von_neumann_entropy(states[p], check=False), method)
            for p in POINTS]
    return out


def analyze(config: ScenarioConfig, points: dict[str, PointSummary], ideal: bool = False) -> ScenarioReport:
    env = ENV_SHORT[config.environment]
    report = ScenarioReport(env, config.config_hash, config.seed, ideal, points)
    truths = {k: p.true_state for k, p in points.items()}
    if ideal:
        report.quantities = state_quantities(env, truths, "true")
        return report
    ens = {k: p.ensemble for k, p in points.items() if p.ensemble is not None}
    report.partial = len(ens) < len(POINTS)
    qs = []
    if "rho_0" in ens and "rho_tilde_tau" in ens:
        qs.append(_from_estimate(env, "sigma", estimate_functional(
            _d_bits, ens["rho_0"], ens["rho_tilde_tau"])))
    if "rho_tau" in ens and "rho_tilde_0" in ens:
        qs.append(_from_estimate(env, "erased_mi", estimate_functional(
            _mi_drop, ens["rho_tau"], ens["rho_tilde_0"])))
    qs += [_from_estimate(env, f"entropy_{p}", estimate_functional(entropy_bits, ens[p]))
           for p in POINTS if p in ens]
    if report.partial:
        report.quantities = qs
        return report
    mles = {k: p.mle.rho for k, p in points.items()}
    qs += [q for q in state_quantities(env, mles, "mle") if q.name in ("sigma", "erased_mi")]
    qs += [q for q in state_quantities(env, truths, "true") if q.name in ("sigma", "erased_mi")]
    report.quantities = qs
    return report


def run_scenario(config: ScenarioConfig, ideal: bool = False,
                 progress: Callable[[str], None] | None = None) -> ScenarioReport:
    """Simulate, measure, reconstruct and analyze one environment.

    ``ideal=True`` takes the true-state shortcut: quantities are evaluated on
    the simulated states directly, with no data or reconstruction.
    """
    states = true_states(config.environment, config.imperfections, config.dephasing_basis,
                         config.effects.cavity_dim)
    points = {name: PointSummary(states[name]) for name in POINTS}
    if ideal:
        return analyze(config, points, ideal=True)
    datasets = simulate_datasets(config, states)
    for name in POINTS:
        if progress:
            progress(f"reconstructing {name}")
        try:
            points[name].mle, points[name].ensemble = reconstruct(config, name, datasets[name])
        except NumericalError as exc:
            # keep going: the report is flagged partial and omits dependent quantities
            log.error("%s", exc)
    return analyze(config, points)


# re-exported for the public surface of this module
from .noise import apply_imperfections as apply_imperfections  # noqa: E402,F811
from .report import render_report as render_report  # noqa: E402
