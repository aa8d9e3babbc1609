"""
How imperfections pull the bars below the ideal lines
=====================================================

Each mechanism is switched on alone at its default strength, then all
together.  Values are exact on the simulated states.
"""

# %%
from dataclasses import replace

from irrevqed.entropic import klu_divergence, mutual_information
from irrevqed.noise import ImperfectionModel
from irrevqed.scenarios import true_states

realistic = ImperfectionModel.realistic()
models = {"ideal": ImperfectionModel()}
for field in ("atom_decay_per_stage", "cavity_decay_per_stage", "pulse_area_jitter",
              "echo_angle_error", "second_atom_prob"):
    models[field] = replace(ImperfectionModel(), **{field: getattr(realistic, field)})
models["all"] = realistic

# %%
print(f"{'model':24s}{'I(rho_tau)':>12s}" + "".join(f"{e:>10s}" for e in ("id", "deph", "decor")))
for name, model in models.items():
    row = []
    for env in ("identity", "dephasing", "decorrelation"):
        s = true_states(env, model)
        d = klu_divergence(s["rho_0"], s["rho_tilde_tau"])
        row.append("inf" if d.diverged else f"{d.value:.3f}")
    mi = mutual_information(true_states("identity", model)["rho_tau"]).value
    print(f"{name:24s}{mi:12.3f}" + "".join(f"{v:>10s}" for v in row))

# %%
# The start of the cycle is the pure state |e0>, so the divergence is finite
# only if the return state contains |e0> in its support.  Decay and a wrong
# echo angle each leave a low-rank return state that misses part of that
# direction, and the identity cycle diverges.  Together the mechanisms spread
# the return state over enough directions that the divergence is finite again.
