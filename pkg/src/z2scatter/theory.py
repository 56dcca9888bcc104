"""Spectral flow, conductivity and Z2 parity from band data, and the two-branch gap opening.

A branch is a piece of a dispersion curve E(xi) whose graph enters the energy
window [E_-, E_+] at one end of its domain and leaves at the other.  Its flow
is +1 (crossing upwards), -1 (downwards) or 0 (enters and leaves through the
same edge).  For an FTR-symmetric H = H_1 + theta* H_1 theta the parity of the
total flow of H_1 is the Z2 index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectral import ladder_coeff

EDGE_TOL = 1e-9


@dataclass(frozen=True)
class BranchCurve:
    xi_minus: float
    xi_plus: float
    energy: Callable
    E_minus: float
    E_plus: float
    label: str = ""

    @property
    def endpoint_energies(self):
        return float(self.energy(self.xi_minus)), float(self.energy(self.xi_plus))

    def validate(self):
        for e in self.endpoint_energies:
            if min(abs(e - self.E_minus), abs(e - self.E_plus)) > EDGE_TOL:
                raise ValueError(
                    f"branch {self.label or '?'}: endpoint energy {e} is not on the window edges "
                    f"[{self.E_minus}, {self.E_plus}]"
                )
        return self


def tabulated_branch(xi, E, E_minus, E_plus, label="") -> BranchCurve:
    """Branch from samples; only the end values matter for the flow."""
    xi = np.asarray(xi, dtype=float)
    E = np.asarray(E, dtype=float)
    return BranchCurve(float(xi[0]), float(xi[-1]), lambda s: np.interp(s, xi, E), E_minus, E_plus, label)


def _flip(f):
    return lambda s: f(-s)


def kramers_partner(branch: BranchCurve) -> BranchCurve:
    """theta-image of a branch: same energies at -xi, hence opposite flow."""
    return BranchCurve(
        -branch.xi_plus, -branch.xi_minus, _flip(branch.energy), branch.E_minus, branch.E_plus, branch.label + "~"
    )


def spectral_flow(branch: BranchCurve) -> int:
    lo, hi = branch.validate().endpoint_energies
    d = hi - lo
    if abs(d) <= 2 * EDGE_TOL:
        return 0
    return 1 if d > 0 else -1


def sigma_from_flows(branches) -> int:
    return sum(_flow(b) for b in branches)


def index2_from_flows(branches) -> int:
    return -1 if sigma_from_flows(branches) % 2 else 1


def _flow(b) -> int:
    return b if isinstance(b, (int, np.integer)) else spectral_flow(b)


def _window_pieces(f, roots, E_minus, E_plus, label):
    """Split a monotone-by-pieces curve at the window crossings ``roots``."""
    pts = sorted(set(roots))
    out = []
    for k, (s0, s1) in enumerate(zip(pts[:-1], pts[1:])):
        mid = f(0.5 * (s0 + s1))
        if E_minus < mid < E_plus:
            out.append(BranchCurve(s0, s1, f, E_minus, E_plus, f"{label}.{k}"))
    return out


def _hyperbola(beta, sign):
    return lambda s: sign * np.sqrt(np.asarray(s) ** 2 + beta * beta)


def _linear(slope):
    return lambda s: slope * np.asarray(s)


def dirac_branches(p: int, E_minus: float, E_plus: float, conjugated: bool = False, n_max: int = 50) -> list:
    """Pieces of the h_p (or conjugate block) dispersion curves inside [E_-, E_+].

    Branches: E = -xi for every level n < p (E = +xi on conjugate blocks) and
    E = +-sqrt(xi^2 + beta_n^2) for n >= p.
    """
    if not E_minus < E_plus:
        raise ValueError("need E_minus < E_plus")
    out = []
    slope = 1.0 if conjugated else -1.0
    for n in range(p):
        f = _linear(slope)
        out.append(BranchCurve(*sorted((E_minus / slope, E_plus / slope)), f, E_minus, E_plus, f"lin{n}"))
    for n in range(p, n_max + 1):
        beta = ladder_coeff(n, p)
        if beta >= max(abs(E_minus), abs(E_plus)):
            break
        for sign in (1.0, -1.0):
            f = _hyperbola(beta, sign)
            roots = []
            for e in (E_minus, E_plus):
                if sign * e >= beta:
                    r = math.sqrt(e * e - beta * beta)
                    roots += [-r, r]
            out.extend(_window_pieces(f, roots, E_minus, E_plus, f"n{n}{'+' if sign > 0 else '-'}"))
    return out


def model_h1_branches(M: int, N: int, p: int, E_minus: float, E_plus: float) -> list:
    """Branches of H_1 for the block model.

    For M = N the conjugate blocks are the theta-images of the h blocks, so
    H_1 = h^{+M}.  Otherwise every block is returned (the flows then sum to
    the conductivity of the full model).
    """
    out = []
    for _ in range(M):
        out += dirac_branches(p, E_minus, E_plus, conjugated=False)
    if M != N:
        for _ in range(N):
            out += dirac_branches(p, E_minus, E_plus, conjugated=True)
    return out


# ------------------------------------------------------------- gap opening


@dataclass(frozen=True)
class GapCoupling:
    E_minus: float
    E_plus: float
    delta: float

    def __post_init__(self):
        if not (self.E_plus - self.E_minus > 2 * self.delta > 0):
            raise ValueError("need E_plus - E_minus > 2 delta > 0")

    def alpha(self, xi) -> float:
        return gap_alpha(xi, self.E_minus, self.E_plus, self.delta)

    @property
    def slope(self) -> float:
        return (self.E_plus - self.E_minus - 2 * self.delta) / (2 * self.delta)

    def affine_branches(self, xi):
        """E_1 decreasing, E_2 increasing, both affine through the window centre."""
        mid = 0.5 * (self.E_plus + self.E_minus)
        return -self.slope * xi + mid, self.slope * xi + mid


def gap_alpha(xi: float, E_minus: float, E_plus: float, delta: float) -> float:
    if not (E_plus - E_minus > 2 * delta > 0):
        raise ValueError("need E_plus - E_minus > 2 delta > 0")
    if abs(xi) > delta * (1 + 1e-14):
        raise ValueError(f"|xi| = {abs(xi)} exceeds delta = {delta}")
    h = 0.5 * (E_plus - E_minus - 2 * delta)
    return h * math.sqrt(max(0.0, 1.0 - (xi / delta) ** 2))


def coupling_matrix(E1: float, E2: float, alpha: complex) -> np.ndarray:
    """Density of H + Q_12 in the basis (psi_1, psi_2, theta psi_1, theta psi_2)."""
    a, ab = alpha, np.conj(alpha)
    return np.array(
        [
            [E1, 0, 0, a],
            [0, E2, -a, 0],
            [0, -ab, E1, 0],
            [ab, 0, 0, E2],
        ],
        dtype=complex,
    )


THETA4 = np.array([[0, 0, -1, 0], [0, 0, 0, -1], [1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)


def theta4(v: np.ndarray) -> np.ndarray:
    """theta in the basis (psi_1, psi_2, theta psi_1, theta psi_2)."""
    return THETA4 @ np.conj(v)


def coupled_spectrum(E1: float, E2: float, alpha: complex, tol: float = 1e-12):
    """(lambda_-, lambda_+), each doubly degenerate, checked against the closed form."""
    w = np.linalg.eigvalsh(coupling_matrix(E1, E2, alpha))
    r = math.sqrt(abs(alpha) ** 2 + 0.25 * (E1 - E2) ** 2)
    lam = 0.5 * (E1 + E2) - r, 0.5 * (E1 + E2) + r
    scale = 1.0 + abs(E1) + abs(E2) + abs(alpha)
    expect = np.array([lam[0], lam[0], lam[1], lam[1]])
    err = np.max(np.abs(w - expect))
    if err > tol * scale:
        raise AssertionError(f"coupled spectrum deviates from closed form by {err:.3g}")
    return lam


def coupled_parity(gap: GapCoupling, mu: float = 1.0, n_grid: int = 101) -> int:
    """Z2 parity of the coupled pair with coupling mu * alpha, from the flows of lambda_+-.

    One curve per Kramers doublet is kept (the doublets are exactly degenerate).
    Flows are measured against the shrunken window [E_- + delta, E_+ - delta],
    which the uncoupled affine branches cross exactly at xi = -+delta.
    """
    xi = np.linspace(-gap.delta, gap.delta, n_grid)
    lo, hi = [], []
    for s in xi:
        e1, e2 = gap.affine_branches(s)
        a = mu * gap.alpha(s)
        lm, lp = coupled_spectrum(e1, e2, a)
        lo.append(lm)
        hi.append(lp)
    Em, Ep = gap.E_minus + gap.delta, gap.E_plus - gap.delta
    flows = []
    for curve in (np.array(lo), np.array(hi)):
        inside = (curve > Em - EDGE_TOL) & (curve < Ep + EDGE_TOL)
        if not inside.any():
            continue
        e0, e1 = np.clip(curve[0], Em, Ep), np.clip(curve[-1], Em, Ep)
        flows.append(0 if abs(e1 - e0) <= 2 * EDGE_TOL else int(np.sign(e1 - e0)))
    return index2_from_flows(flows)


def gap_pairing(branches):
    """Gap crossing branches two by two; returns (residual count, (-1)^residual).

    Non-crossing branches are removed first.  Two crossing branches with equal
    flows are made opposite by choosing the Kramers partner of one of them
    (this changes the total flow by 2), then gapped by Q_12.
    """
    flows = [_flow(b) for b in branches]
    crossing = [f for f in flows if f != 0]
    while len(crossing) >= 2:
        f1, f2 = crossing.pop(), crossing.pop()
        if f1 == f2:
            f2 = -f2
        assert f1 + f2 == 0
    residual = len(crossing)
    index = -1 if residual else 1
    if index != index2_from_flows(flows):
        raise AssertionError("pairing parity disagrees with the flow parity")
    return residual, index
