"""Likelihood, maximum-likelihood reconstruction and Metropolis sampling of states.

The sampler targets ``L(rho | data)`` times the flat (Lebesgue) measure on
unit-trace Hermitian matrices restricted to the positive cone.  Moves are
``rho + eps - Tr(eps) 1/d`` with ``eps`` a Hermitian matrix of independent
Gaussian entries; moves leaving the positive cone are rejected outright.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._kernel import design_matrix, from_coords, hermitian_index, run_block, to_coords
from .entropic import EntropyValue
from .measurement import Dataset, EffectSet
from .qstate import (
    DensityOperator,
    LayoutError,
    Operator,
    SpaceLayout,
    atom_cavity_layout,
    operator_from_json,
    operator_to_json,
)

log = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    pass


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, Operator) else np.asarray(rho, dtype=complex)


class LikelihoodModel:
    """Multinomial likelihood of a :class:`Dataset`.

    Only outcomes with positive counts are kept; they are stacked into a real
    design matrix so that ``p = A @ [Re rho, Im rho]`` in one product.
    """

    def __init__(self, dataset: Dataset, effect_sets: Sequence[EffectSet] | None = None,
                 layout: SpaceLayout | None = None):
        self.dataset = dataset
        if effect_sets is None:
            effect_sets = dataset.effect_sets()
        by_id = {es.id: es for es in effect_sets}
        effects, counts = [], []
        for sid, cs in dataset.counts.items():
            if sid not in by_id:
                raise KeyError(f"dataset references unknown effect set {sid!r}")
            es = by_id[sid]
            if len(cs) != len(es):
                raise ValueError(f"{sid}: {len(cs)} counts for {len(es)} effects")
            for i in np.flatnonzero(cs):
                effects.append(es.effects[i])
                counts.append(cs[i])
        if layout is None:
            layout = effect_sets[0].layout if effect_sets else atom_cavity_layout()
        self.layout = layout
        self.dim = layout.total_dim
        d = self.dim
        self.effects = np.array(effects, dtype=complex).reshape(-1, d, d)
        self.counts = np.array(counts, dtype=float)
        self.total = float(self.counts.sum())
        self.design = np.hstack([self.effects.real.reshape(-1, d * d),
                                 self.effects.imag.reshape(-1, d * d)])

    @property
    def is_empty(self) -> bool:
        return self.total == 0

    def probabilities(self, rho) -> np.ndarray:
        m = _as_matrix(rho)
        return self.design @ np.concatenate([m.real.ravel(), m.imag.ravel()])

    def __call__(self, rho) -> float:
        return log_likelihood(rho, self)


def log_likelihood(rho, model: LikelihoodModel) -> float:
    """``sum_i n_i ln Tr(rho E_i)`` in nats; ``-inf`` if an observed outcome has probability <= 0."""
    m = _as_matrix(rho)
    if m.shape != (model.dim, model.dim):
        raise LayoutError(f"state of shape {m.shape} vs model dimension {model.dim}")
    if model.is_empty:
        return 0.0
    p = model.probabilities(m)
    if np.any(p <= 0):
        return -math.inf
    return float(model.counts @ np.log(p))


# --------------------------------------------------------------------------
# maximum likelihood


@dataclass
class MLEResult:
    rho: DensityOperator
    log_likelihood: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def mle_estimate(model: LikelihoodModel, max_iters: int = 20000, tol: float = 1e-10,
                 dilution: float = 0.5, initial=None) -> MLEResult:
    """Diluted ``R rho R`` fixed-point iteration from the maximally mixed state.

    Each step proposes ``N[(1 - lam) rho + lam R rho R]`` with
    ``R = sum_i (n_i/N) E_i / Tr(rho E_i)``.  A proposal that lowers the
    log-likelihood is retried with ``lam`` halved, so accepted iterations are
    monotone.  Iteration stops once the gain of an accepted step drops below
    ``tol`` nats (or no halving improves).  On hitting ``max_iters`` the last
    iterate is returned with ``converged=False`` and a warning is logged.
    """
    if not 0 < dilution <= 1:
        raise ValueError(f"dilution must lie in (0, 1], got {dilution}")
    d = model.dim
    rho = np.eye(d, dtype=complex) / d if initial is None else _as_matrix(initial).copy()
    ll = log_likelihood(rho, model)
    history = [ll]
    if model.is_empty:
        return MLEResult(DensityOperator(model.layout, rho, check=False), ll, 0, True, history)
    freqs = model.counts / model.total
    converged = False
    it = 0
    while it < max_iters:
        it += 1
        p = model.probabilities(rho)
        R = np.tensordot(freqs / p, model.effects, axes=1)
        rrr = R @ rho @ R
        lam = dilution
        accepted = False
        for _ in range(40):
            cand = (1 - lam) * rho + lam * rrr
            cand = 0.5 * (cand + cand.conj().T)
            cand /= np.real(np.trace(cand))
            ll_new = log_likelihood(cand, model)
            if ll_new >= ll:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            converged = True
            break
        gain = ll_new - ll
        rho, ll = cand, ll_new
        history.append(ll)
        if gain < tol:
            converged = True
            break
    if not converged:
        log.warning("mle_estimate stopped after %d iterations without converging", max_iters)
    return MLEResult(DensityOperator(model.layout, rho, check=False), ll, it, converged, history)


# --------------------------------------------------------------------------
# Metropolis sampling


@dataclass(frozen=True)
class ProposalParams:
    sigma: float | None = None
    window: tuple[float, float] = (0.4, 0.6)
    adapt_rate: float = 2.0
    adapt_every: int = 100

    def __post_init__(self):
        lo, hi = self.window
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0 < lo < hi < 1:
            raise ValueError(f"acceptance window must lie inside (0, 1), got {self.window}")
        if self.adapt_every < 1 or self.adapt_rate < 0:
            raise ValueError("adapt_every must be >= 1 and adapt_rate >= 0")

    @property
    def target(self) -> float:
        return 0.5 * sum(self.window)


@dataclass(frozen=True)
class SamplerOptions:
    n: int = 100
    thinning: int = 100_000
    burn_in: int = 100_000
    seed: int = 0
    proposal: ProposalParams = ProposalParams()

    def __post_init__(self):
        if self.n < 1 or self.thinning < 1 or self.burn_in < 0:
            raise ValueError("need n >= 1, thinning >= 1 and burn_in >= 0")

    def to_json(self) -> dict:
        p = self.proposal
        return {"n": self.n, "thinning": self.thinning, "burn_in": self.burn_in, "seed": self.seed,
                "sigma": p.sigma, "window": list(p.window), "adapt_rate": p.adapt_rate,
                "adapt_every": p.adapt_every}

    @classmethod
    def from_json(cls, d: dict) -> "SamplerOptions":
        known = {"n", "thinning", "burn_in", "seed", "sigma", "window", "adapt_rate", "adapt_every"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sampler fields: {sorted(unknown)}")
        pkw = {k: d[k] for k in ("sigma", "adapt_rate", "adapt_every") if k in d}
        if "window" in d:
            pkw["window"] = tuple(d["window"])
        kw = {k: int(d[k]) for k in ("n", "thinning", "burn_in", "seed") if k in d}
        return cls(proposal=ProposalParams(**pkw), **kw)


@dataclass
class PosteriorEnsemble:
    layout: SpaceLayout
    samples: np.ndarray = field(repr=False)  # (n, d, d)
    thinning: int
    burn_in: int
    seed: int
    sigma: float
    acceptance_rate: float  # after burn-in
    acceptance_history: list[float] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.samples)

    def states(self) -> list[DensityOperator]:
        return [DensityOperator(self.layout, m, check=False) for m in self.samples]

    def to_json(self) -> dict:
        return {
            "layout": self.layout.to_json(),
            "seed": self.seed, "thinning": self.thinning, "burn_in": self.burn_in,
            "sigma": self.sigma, "acceptance_rate": self.acceptance_rate,
            "acceptance_history": list(self.acceptance_history),
            "samples": [{"real": m.real.tolist(), "imag": m.imag.tolist()} for m in self.samples],
        }

    @classmethod
    def from_json(cls, d: dict) -> "PosteriorEnsemble":
        samples = np.array([np.array(s["real"]) + 1j * np.array(s["imag"]) for s in d["samples"]])
        return cls(SpaceLayout.from_json(d["layout"]), samples, int(d["thinning"]),
                   int(d["burn_in"]), int(d["seed"]), float(d["sigma"]),
                   float(d["acceptance_rate"]), list(d.get("acceptance_history", [])))

    def dumps(self) -> str:
        return json.dumps(self.to_json())


def proposal_increments(rng: np.random.Generator, d: int, sigma: float, size: int) -> np.ndarray:
    """``size`` traceless proposal increments in Hermitian coordinates.

    Diagonal entries and the real and imaginary parts of the upper triangle
    are independent ``N(0, sigma^2)``; the trace is then removed from the
    diagonal.
    """
    dx = rng.normal(0.0, sigma, size=(size, d * d))
    dx[:, :d] -= dx[:, :d].mean(axis=1, keepdims=True)
    return dx


def hermitian_increment(rng: np.random.Generator, d: int, sigma: float, size: int) -> np.ndarray:
    """Matrix form of :func:`proposal_increments`, shape ``(size, d, d)``."""
    return np.array([from_coords(v, d) for v in proposal_increments(rng, d, sigma, size)])


def _interior_start(rho: np.ndarray, model: LikelihoodModel) -> np.ndarray:
    # Mix in d^2/(N + d^2) of the identity: an isotropic proposal started on
    # the boundary of the cone sees almost every move rejected and sigma
    # collapses, whereas this puts the small eigenvalues near their typical
    # posterior scale.
    d = model.dim
    eta = d * d / (model.total + d * d)
    while True:
        cand = (1 - eta) * rho + eta * np.eye(d) / d
        if np.linalg.eigvalsh(cand)[0] > 0 and math.isfinite(log_likelihood(cand, model)):
            return cand
        eta = min(1.0, 10 * eta)


def default_sigma(model: LikelihoodModel) -> float:
    # deliberately small: adaptation grows sigma quickly, while an oversized
    # first step throws the chain far from the mode
    return 0.1 / (model.dim * math.sqrt(1.0 + model.total))


def metropolis_sample(model: LikelihoodModel, options: SamplerOptions = SamplerOptions(),
                      initial=None) -> PosteriorEnsemble:
    """Draw ``options.n`` states distributed as the likelihood (flat prior).

    The chain starts at ``initial`` (the maximally mixed state by default),
    nudged into the interior of the positive cone when it sits on the boundary
    as rank-deficient maximum-likelihood states do.
    ``sigma`` is tuned during burn-in every ``adapt_every`` steps by a
    Robbins-Monro step on ``log sigma`` toward the centre of the acceptance
    window, then frozen at its average over the second half of burn-in so the
    retained chain runs a fixed Metropolis kernel.
    One state is kept every ``thinning`` steps after burn-in.
    """
    d = model.dim
    prop = options.proposal
    rng = np.random.default_rng(options.seed)
    rho = np.eye(d, dtype=complex) / d if initial is None else _as_matrix(initial).copy()
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.real(np.trace(rho))
    rho = _interior_start(rho, model)
    ll = log_likelihood(rho, model)

    A = np.ascontiguousarray(design_matrix(model.effects)) if not model.is_empty \
        else np.zeros((0, d * d))
    counts = np.ascontiguousarray(model.counts, dtype=float)
    iu, ju = hermitian_index(d)
    x = to_coords(rho)
    p = A @ x

    sigma = prop.sigma if prop.sigma is not None else default_sigma(model)
    log_sigma = math.log(sigma)
    history: list[float] = []
    out = np.zeros((options.n, d * d))
    total = options.burn_in + options.n * options.thinning
    step = 0
    post_acc = 0
    n_batches = 0
    tail: list[float] = []
    while step < total:
        if step < options.burn_in:
            m = min(prop.adapt_every, options.burn_in - step)
        else:
            m = min(16384, total - step)
        dx = proposal_increments(rng, d, sigma, m)
        logu = np.log(rng.random(m))
        record = np.full(m, -1, dtype=np.int64)
        if step + m > options.burn_in:
            after = np.arange(step + 1, step + m + 1) - options.burn_in
            keep = (after > 0) & (after % options.thinning == 0)
            record[keep] = after[keep] // options.thinning - 1
        ll, acc = run_block(x, p, ll, dx, logu, A, counts, d, iu, ju, record, out)
        if step < options.burn_in:
            rate = acc / m
            history.append(rate)
            n_batches += 1
            log_sigma += prop.adapt_rate / math.sqrt(n_batches) * (rate - prop.target)
            sigma = math.exp(log_sigma)
            if step + m >= options.burn_in // 2:
                tail.append(log_sigma)
            if step + m == options.burn_in:
                # freeze at the average over the second half of burn-in
                sigma = math.exp(sum(tail) / len(tail))
        else:
            post_acc += acc
        step += m
        # cancel accumulated round-off in the incremental probabilities
        x[:d] += (1.0 - x[:d].sum()) / d
        p = A @ x
    samples = np.array([from_coords(v, d) for v in out])
    rate = post_acc / (options.n * options.thinning)
    return PosteriorEnsemble(model.layout, samples, options.thinning, options.burn_in,
                             options.seed, sigma, rate, history)


# --------------------------------------------------------------------------
# functional estimation


@dataclass(frozen=True)
class FunctionalEstimate:
    f_est: float
    delta: float
    n_used: int
    diverged_fraction: float

    @property
    def standard_error(self) -> float:
        return self.delta / math.sqrt(self.n_used) if self.n_used else math.inf

    def to_json(self) -> dict:
        return {"estimate": _finite_or_none(self.f_est), "delta": _finite_or_none(self.delta),
                "n_used": self.n_used, "diverged_fraction": self.diverged_fraction}


def _finite_or_none(x: float):
    return float(x) if math.isfinite(x) else None


def _value(v) -> tuple[float, bool]:
    if isinstance(v, EntropyValue):
        return v.value, v.diverged or not math.isfinite(v.value)
    v = float(v)
    return v, not math.isfinite(v)


def estimate_functional(f: Callable, *ensembles: PosteriorEnsemble) -> FunctionalEstimate:
    """Sample mean and standard deviation of ``f`` over one or two ensembles.

    With two ensembles ``f(rho, sigma)`` is evaluated on equal-index pairs.
    Divergent evaluations are left out of the moments and counted in
    ``diverged_fraction``.
    """
    if not ensembles or len(ensembles) > 2:
        raise ValueError("estimate_functional takes one or two ensembles")
    n = len(ensembles[0])
    if n == 0:
        raise ValueError("empty ensemble")
    if len(ensembles) == 2 and len(ensembles[1]) != n:
        raise ValueError(f"ensemble sizes differ: {n} vs {len(ensembles[1])}")
    state_lists = [e.states() for e in ensembles]
    vals, diverged = [], 0
    for k in range(n):
        v, div = _value(f(*(states[k] for states in state_lists)))
        if div:
            diverged += 1
        else:
            vals.append(v)
    vals = np.array(vals)
    if len(vals) == 0:
        return FunctionalEstimate(math.inf, math.nan, 0, 1.0)
    return FunctionalEstimate(float(vals.mean()), float(vals.std()), len(vals), diverged / n)


def mean_state(ensemble: PosteriorEnsemble) -> DensityOperator:
    """Entrywise average of the samples (the mean Bayesian estimate)."""
    if len(ensemble) == 0:
        raise ValueError("empty ensemble")
    m = ensemble.samples.mean(axis=0)
    return DensityOperator(ensemble.layout, 0.5 * (m + m.conj().T), check=False)


def ensemble_from_states(states: Sequence[DensityOperator], seed: int = 0) -> PosteriorEnsemble:
    """Wrap fixed states as an ensemble (e.g. for the true-state shortcut)."""
    layout = states[0].layout
    return PosteriorEnsemble(layout, np.array([s.matrix for s in states]), 1, 0, seed, 0.0, 1.0)


def save_mle(result: MLEResult) -> dict:
    out = operator_to_json(result.rho)
    out.update(log_likelihood=result.log_likelihood, iterations=result.iterations,
               converged=result.converged)
    return out


def load_mle(d: dict) -> DensityOperator:
    return operator_from_json(d, DensityOperator, check=False)
