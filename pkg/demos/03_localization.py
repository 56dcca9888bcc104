# %% [markdown]
# One-sided transmission against the support length.
#
# FTR-symmetric disorder (V_TR) cannot localize the (1,1,1) model: tr T+*T+
# decreases towards 1 but never below.  V_NTR breaks the symmetry and the
# transmission decays to 0.  Pass a max length as argv[1] (default 8; 32 takes
# a few minutes per curve on one core).

# %%
import math
import sys

from z2scatter.cli import RunConfig, sweep_rows
from z2scatter.scatter import default_workers

lmax = float(sys.argv[1]) if len(sys.argv) > 1 else 8.0
lengths = tuple(2.0**k for k in range(int(round(math.log2(lmax))) + 1))

for name, (M, N) in (("V_TR", (1, 1)), ("V_NTR", (1, 1)), ("V_TRS_M2", (2, 2))):
    cfg = RunConfig(M=M, N=N, perturbation=name, lengths=lengths, workers=default_workers())
    print(name)
    for row in sweep_rows(cfg):
        l, tp, ntm, sig, unit, skew, dt, flag = row
        print(f"  l={l:5g}  trT+={tp:.5f}  -trT-={ntm:.5f}  2pi sigma={sig:+.1e}  unit={unit:.1e}  {dt:.1f}s {flag}")
