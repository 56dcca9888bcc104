# %% [markdown]
# Modes of the edge Hamiltonian at fixed energy.
#
# h = D_x s3 - D_y s2 + y s1 on L2(R^2, C^2).  In the Hermite basis the
# y-part is a ladder, so at energy E each level n gives a 2x2 problem and a
# wavenumber xi_n.  Levels below p are the chiral (linear) branches.

# %%
import numpy as np

from z2scatter import build_model, enumerate_modes, ladder_coeff

E = 1.8
model = build_model(1, 1, 1)
basis = enumerate_modes(model, E, 6)
print(f"(1,1,1) at E={E}: n+ = {basis.n_plus}, n- = {basis.n_minus}")
for m in basis.modes:
    print(f"  block {m.block} conj={int(m.conjugated)} n={m.n} {m.kind:10s} xi={m.xi:.4f}  J={m.current:+.4f}")

# %% p = 2: two chiral levels, hyperbola thresholds at beta_n^2 = 4n(n-1)
print([round(ladder_coeff(n, 2) ** 2, 6) for n in range(2, 6)])
b2 = enumerate_modes(build_model(1, 0, 2), 3.0, 8)
print("(1,0,2) at E=3: right", b2.n_plus, "left", b2.n_minus)

# %% Kramers pairing: theta maps the k-th right-mover onto the k-th left-mover
for r, l in zip([m for m in basis.right if m.propagating], [m for m in basis.left if m.propagating]):
    print(f"  xi {r.xi.real:+.4f} <-> {l.xi.real:+.4f}")
