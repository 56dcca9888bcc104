# %% [markdown]
# Z2 index from branch data, and the gap-opening coupling.
#
# Flows of h_p^{+M} inside a window give sigma; the parity is the index.
# Two crossing branches of opposite flow can be gapped by a theta-symmetric
# 4x4 coupling; the doublets are pushed exactly to the window edges.

# %%
import numpy as np

from z2scatter.theory import (
    GapCoupling,
    coupled_spectrum,
    gap_pairing,
    index2_from_flows,
    model_h1_branches,
    sigma_from_flows,
)

for M in (1, 2, 3):
    br = model_h1_branches(M, M, 1, 1.7, 1.9)
    print(f"M={M}: sigma(H_1)={sigma_from_flows(br):+d}  index2={index2_from_flows(br):+d}  pairing={gap_pairing(br)}")

# %%
gap = GapCoupling(-1.0, 1.0, 0.1)
for s in np.linspace(-0.1, 0.1, 5):
    e1, e2 = gap.affine_branches(s)
    lm, lp = coupled_spectrum(e1, e2, gap.alpha(s))
    print(f"xi={s:+.3f}  E1={e1:+.3f} E2={e2:+.3f}  ->  {lm:+.6f} {lp:+.6f}")
