# %% [markdown]
# p = 2.  A single h_2 block carries two chiral channels, so 2 pi sigma = -2 for
# any compact perturbation.  On h_2 + conj(h_2) (FTR, even index) the
# transmission may drop to 0, but with V1 = 0 it settles at 2.

# %%
from z2scatter import build_model, perturbation_library
from z2scatter.cli import RunConfig, sweep_rows
from z2scatter.scatter import compute_smatrix, observables, trace_identity_check
from z2scatter.solver import LeafDiscretization

model = build_model(1, 0, 2)
for l in (0.5, 1, 2, 4):
    V = perturbation_library("p2_sigma3", 3.0, l)
    S = compute_smatrix(model, V, 3.0, LeafDiscretization(0, l, 12, 30), 1 / 8)
    o = observables(S, model)
    print(f"l={l}: 2 pi sigma = {o.sigma2pi:+.12f}  trace residual {trace_identity_check(S):.1e}")

# %% FTR p=2 model, short sweep
for name in ("p2_V2", "p2_V1V2"):
    cfg = RunConfig(M=1, N=1, p=2, E=3.0, perturbation=name, lengths=(1.0, 2.0, 4.0, 8.0))
    print(name, [f"{r[1]:.4f}" for r in sweep_rows(cfg)])
