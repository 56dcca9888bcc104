"""Outgoing Green's kernel of the block Dirac model and the leaf density solve.

The scattered field is ``psi_out = G rho`` with ``rho`` supported on one
x-interval [a, b].  The density is stored at ``n_x`` Gauss-Legendre nodes in x
and as Hermite coefficients of levels ``0..n_y-1`` in y.  The equation
``rho + V G rho = -V psi_in`` is enforced at the x nodes and Galerkin-projected
onto the Hermite levels, giving a square dense system of size
``spinor_dim * n_x * n_y``.

In Hermite space the kernel is diagonal per channel n (level of the lower
component; the upper component sits on level n - p).  For an h-block the
channel kernel is::

    [[(D + E) g_n,  beta_n g_n],
     [beta_n g_n,  (-D + E) g_n]],     g_n(x) = -exp(theta_n |x|) / (2 theta_n)

with ``theta_n = i sgn(E) sqrt(E^2 - beta_n^2)`` for propagating channels and
``-sqrt(beta_n^2 - E^2)`` for evanescent ones.  Conj-blocks swap ``D -> -D``.
``D = -i d/dx`` hits the kink and becomes ``-i theta sgn(x - x0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import zgecon

from .model import BlockModel, PerturbationSpec
from .spectral import HermiteBasis, Mode, ladder_coeff

COND_LIMIT = 1e12


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class GreenChannel:
    n: int
    theta: complex

    @property
    def weight(self) -> complex:
        return -1.0 / (2.0 * self.theta)

    @property
    def propagating(self) -> bool:
        return self.theta.real == 0.0


def green_channels(E: float, p: int, n_chan: int) -> list[GreenChannel]:
    out = []
    for n in range(n_chan):
        d = E * E - ladder_coeff(n, p) ** 2
        if d > 0:
            theta = complex(0.0, math.copysign(math.sqrt(d), E))
        else:
            theta = complex(-math.sqrt(-d), 0.0)
        out.append(GreenChannel(n, theta))
    return out


def channel_kernel(E: float, p: int, n: int, dx: float, conjugated: bool = False) -> np.ndarray:
    """2x2 outgoing kernel of channel n at separation dx = x - x0, acting on (upper, lower)."""
    theta = green_channels(E, p, n + 1)[n].theta
    beta = ladder_coeff(n, p)
    e = np.exp(theta * abs(dx))
    g = -e / (2 * theta)
    s = float(np.sign(dx))
    plus = 0.5j * s * e + E * g
    minus = -0.5j * s * e + E * g
    if conjugated:
        plus, minus = minus, plus
    return np.array([[plus, beta * g], [beta * g, minus]])


@dataclass(frozen=True)
class LeafDiscretization:
    a: float
    b: float
    n_x: int
    n_y: int
    n_quad: int | None = None
    n_chan: int | None = None

    @property
    def length(self) -> float:
        return self.b - self.a

    def resolved(self, p: int) -> "LeafDiscretization":
        n_chan = self.n_chan if self.n_chan is not None else self.n_y + p
        if n_chan < self.n_y + p:
            raise ValueError(
                f"n_chan={n_chan} < n_y + p = {self.n_y + p}: the ladder would drop density levels"
            )
        n_quad = self.n_quad if self.n_quad is not None else self.n_y + p + 8
        if n_quad < self.n_y + 8:
            raise ValueError("n_quad must be at least n_y + 8")
        return LeafDiscretization(self.a, self.b, self.n_x, self.n_y, n_quad, n_chan)

    def nodes(self) -> np.ndarray:
        g, _ = leggauss(self.n_x)
        return 0.5 * (self.a + self.b) + 0.5 * (self.b - self.a) * g

    def on(self, a: float, b: float) -> "LeafDiscretization":
        return LeafDiscretization(a, b, self.n_x, self.n_y, self.n_quad, self.n_chan)


def _quad_points(n_x: int, thetas, length: float) -> int:
    rate = max((abs(t) for t in thetas), default=0.0) * length
    return n_x + 8 + int(math.ceil(0.75 * rate))


def xkernel_table(thetas, targets, a: float, b: float, n_x: int, n_pts: int | None = None):
    """Integrals of Legendre polynomials against exp(theta |x - x0|) over [a, b].

    Returns ``(K0, K1)`` with shape ``(len(thetas), len(targets), n_x)``::

        K0[c, t, j] = int_a^b P_j(x0) exp(theta_c |x_t - x0|) dx0
        K1[c, t, j] = int_a^b P_j(x0) sgn(x_t - x0) exp(theta_c |x_t - x0|) dx0

    ``P_j`` is mapped to [a, b].  Each integral is split at the kink and both
    pieces use Gauss-Legendre quadrature whose order grows with ``|theta| (b-a)``.
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=complex))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    if n_pts is None:
        n_pts = _quad_points(n_x, thetas, b - a)
    g, w = leggauss(n_pts)
    xs = np.clip(targets, a, b)
    lo = np.stack([np.full_like(xs, a), xs])
    hi = np.stack([xs, np.full_like(xs, b)])
    half = 0.5 * (hi - lo)
    t = (0.5 * (hi + lo))[..., None] + half[..., None] * g
    wt = half[..., None] * w
    P = legvander((2.0 * t - a - b) / (b - a), n_x - 1)
    d = targets[None, :, None] - t
    e = np.exp(thetas[:, None, None, None] * np.abs(d)[None]) * wt[None]
    K0 = np.einsum("cstq,stqj->ctj", e, P)
    K1 = np.einsum("cstq,stqj->ctj", e * np.sign(d)[None], P)
    return K0, K1


def xkernel(theta: complex, x: float, interval, j: int, signed: bool = False) -> complex:
    a, b = interval
    K0, K1 = xkernel_table([theta], [x], a, b, j + 1)
    return complex((K1 if signed else K0)[0, 0, j])


@dataclass
class DensityCoeffs:
    """Density values at the Legendre nodes, Hermite levels in y.

    ``nodal`` has shape ``(n_x, spinor_dim, n_y)`` (plus trailing right-hand-side
    axes when several incoming modes were solved together).
    """

    disc: LeafDiscretization
    nodal: np.ndarray

    @property
    def legendre(self) -> np.ndarray:
        """rho_{i,n,c}: Legendre index first, then spinor component, then level."""
        u = (2.0 * self.disc.nodes() - self.disc.a - self.disc.b) / self.disc.length
        Vand = legvander(u, self.disc.n_x - 1)
        flat = self.nodal.reshape(self.disc.n_x, -1)
        return np.linalg.solve(Vand, flat).reshape(self.nodal.shape)


class GreenOperator:
    """Channel-structured outgoing Green's kernel for densities on one leaf."""

    def __init__(self, model: BlockModel, E: float, disc: LeafDiscretization):
        self.model = model
        self.E = float(E)
        self.disc = disc.resolved(model.p)
        d = self.disc
        self.channels = green_channels(E, model.p, d.n_chan)
        self.thetas = np.array([c.theta for c in self.channels])
        self.betas = np.array([ladder_coeff(n, model.p) for n in range(d.n_chan)])
        self.x_nodes = d.nodes()
        u = (2.0 * self.x_nodes - d.a - d.b) / d.length
        self._inv_vand = np.linalg.inv(legvander(u, d.n_x - 1))
        self._route_cache = {}

    def routes(self, n_levels: int):
        """(out comp, in comp, channels, out levels, in levels, kernel tag) for densities on n_levels levels."""
        if n_levels not in self._route_cache:
            self._route_cache[n_levels] = self._build_routes(n_levels)
        return self._route_cache[n_levels]

    def _build_routes(self, n_y: int):
        p, n_chan = self.model.p, self.disc.n_chan
        routes = []
        for s in range(self.model.n_blocks):
            up, lo = 2 * s, 2 * s + 1
            conj = self.model.is_conjugated(s)
            diag_up, diag_lo = ("minus", "plus") if conj else ("plus", "minus")
            ns_all = np.arange(n_chan)
            for out_c, in_c, out_shift, in_shift, tag in (
                (up, up, p, p, diag_up),
                (up, lo, p, 0, "beta"),
                (lo, up, 0, p, "beta"),
                (lo, lo, 0, 0, diag_lo),
            ):
                ns = ns_all[(ns_all >= max(out_shift, in_shift)) & (ns_all - in_shift < n_y)]
                if len(ns) == 0:
                    continue
                n0, n1 = int(ns[0]), int(ns[-1]) + 1
                routes.append(
                    (out_c, in_c, slice(n0, n1), slice(n0 - out_shift, n1 - out_shift), slice(n0 - in_shift, n1 - in_shift), tag)
                )
        return routes

    def kernels(self, targets):
        """x-kernels per channel at ``targets`` acting on nodal densities."""
        d = self.disc
        K0, K1 = xkernel_table(self.thetas, targets, d.a, d.b, d.n_x)
        K0 = K0 @ self._inv_vand
        K1 = K1 @ self._inv_vand
        w = (-0.5 / self.thetas)[:, None, None]
        E = self.E
        return {
            "beta": w * K0 * self.betas[:, None, None],
            "plus": 0.5j * K1 + E * w * K0,
            "minus": -0.5j * K1 + E * w * K0,
        }

    def apply(self, rho: np.ndarray, targets) -> np.ndarray:
        """Hermite coefficients of G rho at ``targets``: shape (T, N, n_chan, ...)."""
        kern = self.kernels(targets)
        T = len(np.atleast_1d(targets))
        extra = rho.shape[3:]
        out = np.zeros((T, self.model.spinor_dim, self.disc.n_chan) + extra, dtype=complex)
        for out_c, in_c, ns, mout, kin, tag in self.routes(rho.shape[2]):
            X = kern[tag][ns]
            out[:, out_c, mout] += np.einsum("ntj,jn...->tn...", X, rho[:, in_c, kin])
        return out


class LeafProblem:
    """Assembled and factorised density system for one leaf."""

    def __init__(self, model: BlockModel, V: PerturbationSpec, E: float, disc: LeafDiscretization):
        if V.dim != model.spinor_dim:
            raise ValueError(f"perturbation dim {V.dim} does not match spinor_dim {model.spinor_dim}")
        self.model = model
        self.V = V
        self.E = float(E)
        self.green = GreenOperator(model, E, disc)
        self.disc = self.green.disc
        d = self.disc
        self.hermite = HermiteBasis(d.n_chan - 1, d.n_quad, scale=1.0 / math.sqrt(2.0))
        Vq = V.evaluate(self.green.x_nodes[:, None], self.hermite.nodes[None, :])
        self.is_zero = not np.any(Vq)
        phi = self.hermite.values
        wphi = phi * self.hermite.weights
        # Galerkin matrix of V(x_i, .): (n_x, N, n_y, N, n_chan).  Field levels >= n_y
        # are dropped so the truncated perturbation is P V P, still Hermitian and
        # theta-symmetric; unitarity and skewness then hold at any n_y.
        self.B = np.zeros((d.n_x, model.spinor_dim, d.n_y, model.spinor_dim, d.n_chan), dtype=complex)
        self.B[..., : d.n_y] = np.einsum("nq,iqcd,mq->icndm", wphi[: d.n_y], Vq, phi[: d.n_y], optimize=True)
        self._lu = None
        self.rcond = None

    @property
    def size(self) -> int:
        return self.disc.n_x * self.model.spinor_dim * self.disc.n_y

    def matrix(self) -> np.ndarray:
        d, N = self.disc, self.model.spinor_dim
        kern = self.green.kernels(self.green.x_nodes)
        A = np.zeros((d.n_x, N, d.n_y, d.n_x, N, d.n_y), dtype=complex)
        for out_c, in_c, ns, mout, kin, tag in self.green.routes(d.n_y):
            X = kern[tag][ns]  # (L, i, j)
            contrib = self.B[:, :, :, out_c, mout][:, :, :, None, :] * X.transpose(1, 2, 0)[:, None, None]
            A[:, :, :, :, in_c, kin] += contrib
        A = A.reshape(self.size, self.size)
        A[np.diag_indices(self.size)] += 1.0
        return A

    def factorize(self):
        if self._lu is None:
            A = self.matrix()
            anorm = np.abs(A).sum(axis=0).max()
            lu, piv = lu_factor(A, overwrite_a=True, check_finite=False)
            rcond, info = zgecon(lu, anorm, norm="1")
            self.rcond = float(rcond)
            if info != 0 or rcond * COND_LIMIT < 1.0:
                raise SolverError(
                    f"leaf [{self.disc.a}, {self.disc.b}]: condition estimate {1 / max(rcond, 1e-300):.3g}"
                    f" exceeds {COND_LIMIT:.0e} (discretisation too coarse or E near a resonance)"
                )
            self._lu = (lu, piv)
        return self._lu

    def incident_coeffs(self, modes, refs) -> np.ndarray:
        """Hermite coefficients of incoming modes at the x nodes: (n_x, N, n_chan, R)."""
        d, p = self.disc, self.model.p
        out = np.zeros((d.n_x, self.model.spinor_dim, d.n_chan, len(modes)), dtype=complex)
        x = self.green.x_nodes
        for r, (m, ref) in enumerate(zip(modes, refs)):
            phase = np.exp(1j * m.xi * (x - ref))
            if m.n >= p:
                out[:, 2 * m.block, m.n - p, r] = phase * m.upper
            out[:, 2 * m.block + 1, m.n, r] = phase * m.lower
        return out

    def rhs(self, modes, refs) -> np.ndarray:
        """-V psi_in projected on the density levels: (n_x, N, n_y, R)."""
        d, p = self.disc, self.model.p
        out = np.empty((d.n_x, self.model.spinor_dim, d.n_y, len(modes)), dtype=complex)
        x = self.green.x_nodes
        for r, (m, ref) in enumerate(zip(modes, refs)):
            col = m.lower * self.B[:, :, :, 2 * m.block + 1, m.n]
            if m.n >= p:
                col = col + m.upper * self.B[:, :, :, 2 * m.block, m.n - p]
            out[..., r] = -np.exp(1j * m.xi * (x - ref))[:, None, None] * col
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Density for right-hand sides of shape (n_x, N, n_y, R)."""
        shape = rhs.shape
        if self.is_zero:
            return np.zeros(shape, dtype=complex)
        lu = self.factorize()
        sol = lu_solve(lu, rhs.reshape(self.size, -1), check_finite=False)
        return sol.reshape(shape)


def apply_green(model: BlockModel, E: float, rho: DensityCoeffs, targets) -> np.ndarray:
    """Hermite coefficients of ``G rho`` at the x positions ``targets``."""
    return GreenOperator(model, E, rho.disc).apply(rho.nodal, targets)


def evaluate_field(coeffs: np.ndarray, y) -> np.ndarray:
    """Field values from Hermite coefficients (levels on the last axis)."""
    from .spectral import hermite_functions

    n = coeffs.shape[-1]
    return coeffs @ hermite_functions(n - 1, np.asarray(y, dtype=float))


def solve_leaf(
    model: BlockModel, V: PerturbationSpec, E: float, disc: LeafDiscretization, incoming: Mode, ref: float | None = None
) -> DensityCoeffs:
    """Density generated by one incoming mode of unit amplitude at ``ref``.

    ``ref`` defaults to the edge the mode enters through (a for right-going,
    b for left-going modes).
    """
    prob = LeafProblem(model, V, E, disc)
    if ref is None:
        ref = prob.disc.a if incoming.right_going else prob.disc.b
    rho = prob.solve(prob.rhs([incoming], [ref]))[..., 0]
    return DensityCoeffs(prob.disc, rho)
