"""
Spurious divergences from maximum likelihood
============================================

With few shots the maximum-likelihood state is often rank deficient.  When the
end point of a cycle is reconstructed with a smaller support than the start
point, the relative entropy between them is infinite even though the cycle
is perfectly reversible.  Averaging the divergence over states drawn from the
likelihood avoids this: each draw has full rank almost surely.

Runtime is about ten seconds.
"""

# %%
import numpy as np

from irrevqed.entropic import klu_divergence
from irrevqed.inference import SamplerOptions, estimate_functional
from irrevqed.scenarios import ScenarioConfig, reconstruct, simulate_datasets, true_states

states = true_states("identity")

# %%
# Identity cycle with 1000 shots per point
# ----------------------------------------
for seed in range(5):
    cfg = ScenarioConfig(environment="identity", shots=1000, seed=seed,
                         sampler=SamplerOptions(n=20, thinning=2000, burn_in=20_000))
    data = simulate_datasets(cfg, states)
    m0, e0 = reconstruct(cfg, "rho_0", data["rho_0"])
    m1, e1 = reconstruct(cfg, "rho_tilde_tau", data["rho_tilde_tau"])
    plug_in = klu_divergence(m0.rho, m1.rho)
    est = estimate_functional(klu_divergence, e0, e1)
    ranks = [int(np.sum(np.linalg.eigvalsh(m.rho.matrix) > 1e-9)) for m in (m0, m1)]
    shown = "inf" if plug_in.diverged else f"{plug_in.value:.3f}"
    print(f"seed {seed}: MLE ranks {ranks}, plug-in D = {shown:>7s} bits, "
          f"ensemble D = {est.f_est:.3f} +- {est.delta:.3f} bits")

# %%
# The ensemble value is small but positive: a divergence between two noisy
# reconstructions of the same state cannot be negative, and its average over
# draws shrinks only as the data grow.
