# %% [markdown]
# Self-convergence of S in n_x and in the number of merge levels.
#
# The reference is a single leaf with n_x = 20.  Errors are relative
# Frobenius norms.  The y-truncation stays fixed (n_y = 40) so only the x error
# is visible.

# %%
import numpy as np

from z2scatter import build_model, perturbation_library
from z2scatter.scatter import ScatterProblem, compute_smatrix
from z2scatter.solver import LeafDiscretization

E = 1.8
model = build_model(1, 1, 1)
V = perturbation_library("V_TR", E, 1.0)

ref = compute_smatrix(model, V, E, LeafDiscretization(0, 1, 20, 40), leaf_max=None).S
for n_x in range(2, 13):
    S = compute_smatrix(model, V, E, LeafDiscretization(0, 1, n_x, 40), leaf_max=None).S
    print(f"n_x={n_x:2d}  err={np.linalg.norm(S - ref) / np.linalg.norm(ref):.2e}")

# %% merging: fixed n_x per leaf, more leaves -> error drops to a plateau
prob = ScatterProblem(model, V, E, LeafDiscretization(0, 1, 6, 40))
for L in range(5):
    S = prob.smatrix(0.0, 1.0, 2.0**-L).S
    print(f"L={L}  leaves={2**L:2d}  err={np.linalg.norm(S - ref) / np.linalg.norm(ref):.2e}")

# %% n_y: geometric but much slower decay than in n_x
ref_y = compute_smatrix(model, V, E, LeafDiscretization(0, 1, 12, 60), leaf_max=None).S
for n_y in (10, 20, 30, 40, 50):
    S = compute_smatrix(model, V, E, LeafDiscretization(0, 1, 12, n_y), leaf_max=None).S
    print(f"n_y={n_y}  err={np.linalg.norm(S - ref_y) / np.linalg.norm(ref_y):.2e}")
