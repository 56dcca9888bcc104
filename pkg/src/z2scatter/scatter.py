"""Transmission/reflection matrices of leaves, their merging, and the scattering matrix.

Amplitudes are edge referenced: a right-going mode is measured at the left
edge when it comes in and at the right edge when it leaves; left-going modes
the other way round.  With this convention an empty interval has diagonal
T blocks ``exp(i xi l)`` (right) and ``exp(-i xi l)`` (left), which never
exceed one in modulus, even for strongly evanescent channels.
"""

from __future__ import annotations

import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .model import BlockModel, PerturbationSpec
from .solver import LeafDiscretization, LeafProblem, SolverError
from .spectral import ModeBasis, enumerate_modes

ADJ_TOL = 1e-12
FORMAT_VERSION = 1


@dataclass
class TRMatrix:
    a: float
    b: float
    right: tuple
    left: tuple
    Tp: np.ndarray
    Rm: np.ndarray
    Rp: np.ndarray
    Tm: np.ndarray
    convention: str = "edge"

    @property
    def length(self) -> float:
        return self.b - self.a

    def full(self) -> np.ndarray:
        return np.block([[self.Tp, self.Rm], [self.Rp, self.Tm]])


def free_tr(basis: ModeBasis, a: float, b: float) -> TRMatrix:
    """TR matrix of an interval without perturbation."""
    ell = b - a
    tp = np.array([np.exp(1j * m.xi * ell) for m in basis.right])
    tm = np.array([np.exp(-1j * m.xi * ell) for m in basis.left])
    nr, nl = len(tp), len(tm)
    return TRMatrix(
        a, b, basis.right, basis.left, np.diag(tp), np.zeros((nr, nl), complex), np.zeros((nl, nr), complex), np.diag(tm)
    )


def _mode_matrix(basis: ModeBasis, n_chan: int):
    """Columns: mode vectors in Hermite coefficient space (right modes, then left)."""
    model, p = basis.model, basis.model.p
    N = model.spinor_dim
    valid = np.zeros((N, n_chan), dtype=bool)
    valid[1::2, :] = True
    valid[0::2, : n_chan - p] = True
    modes = basis.right + basis.left
    Phi = np.zeros((N, n_chan, len(modes)), dtype=complex)
    for k, m in enumerate(modes):
        if m.n >= p:
            Phi[2 * m.block, m.n - p, k] = m.upper
        Phi[2 * m.block + 1, m.n, k] = m.lower
    return valid, Phi[valid]


def leaf_tr(
    model: BlockModel,
    V: PerturbationSpec,
    E: float,
    interval,
    disc: LeafDiscretization,
    basis: ModeBasis | None = None,
) -> TRMatrix:
    """TR matrix of one leaf from the density solve.

    ``basis`` must list every channel the discretisation carries; by default it
    is enumerated with ``n_mode_max = n_chan - 1``.
    """
    a, b = float(interval[0]), float(interval[1])
    prob = LeafProblem(model, V, E, disc.on(a, b))
    n_chan = prob.disc.n_chan
    if basis is None:
        basis = enumerate_modes(model, E, n_chan - 1)
    if basis.n_chan != n_chan:
        raise ValueError(f"mode basis has {basis.n_chan} channels, discretisation {n_chan}")
    if prob.is_zero:
        return free_tr(basis, a, b)

    modes = basis.right + basis.left
    refs = [a] * len(basis.right) + [b] * len(basis.left)
    rho = prob.solve(prob.rhs(modes, refs))
    w = prob.green.apply(rho, [a, b])  # (2, N, n_chan, R)

    valid, Phi = _mode_matrix(basis, n_chan)
    cond = np.linalg.cond(Phi)
    if cond > 1e10:
        raise SolverError(f"mode profile matrix is near singular (cond {cond:.3g}); E too close to a band edge")
    amp_a = np.linalg.solve(Phi, w[0][valid])
    amp_b = np.linalg.solve(Phi, w[1][valid])
    nr = len(basis.right)
    free = free_tr(basis, a, b)
    out_b = amp_b[:nr]
    out_a = amp_a[nr:]
    return TRMatrix(
        a,
        b,
        basis.right,
        basis.left,
        free.Tp + out_b[:, :nr],
        out_b[:, nr:],
        out_a[:, :nr],
        free.Tm + out_a[:, nr:],
    )


def merge_tr(left: TRMatrix, right: TRMatrix) -> TRMatrix:
    """Star product of adjacent TR matrices ``left`` on [a, c] and ``right`` on [c, b]."""
    if abs(left.b - right.a) > ADJ_TOL:
        raise ValueError(f"intervals [{left.a}, {left.b}] and [{right.a}, {right.b}] are not adjacent")
    if len(left.right) != len(right.right) or len(left.left) != len(right.left):
        raise ValueError("TR matrices use different mode index maps")
    nr, nl = left.Tp.shape[0], left.Tm.shape[0]
    A = np.eye(nr) - left.Rm @ right.Rp
    B = np.eye(nl) - right.Rp @ left.Rm
    ca, cb = np.linalg.cond(A), np.linalg.cond(B)
    if max(ca, cb) > 1e12:
        raise SolverError(f"merge at x={left.b}: (I - R R) condition {max(ca, cb):.3g}")
    X = np.linalg.solve(A, np.hstack([left.Tp, left.Rm @ right.Tm]))
    Y = np.linalg.solve(B, np.hstack([right.Rp @ left.Tp, right.Tm]))
    Tp = right.Tp @ X[:, :nr]
    Rm = right.Rm + right.Tp @ X[:, nr:]
    Rp = left.Rp + left.Tm @ Y[:, :nr]
    Tm = left.Tm @ Y[:, nr:]
    return TRMatrix(left.a, right.b, left.right, left.left, Tp, Rm, Rp, Tm, left.convention)


def binary_merge(leaves) -> TRMatrix:
    """Pairwise adjacent tree reduction; an odd leftover is carried to the next level."""
    level = list(leaves)
    if not level:
        raise ValueError("no leaves to merge")
    while len(level) > 1:
        nxt = [merge_tr(level[k], level[k + 1]) for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def fold_merge(leaves) -> TRMatrix:
    out = leaves[0]
    for t in leaves[1:]:
        out = merge_tr(out, t)
    return out


@dataclass
class SMatrix:
    E: float
    right: tuple
    left: tuple
    S: np.ndarray

    @property
    def n_plus(self) -> int:
        return len(self.right)

    @property
    def n_minus(self) -> int:
        return len(self.left)

    @property
    def Tp(self):
        return self.S[: self.n_plus, : self.n_plus]

    @property
    def Rm(self):
        return self.S[: self.n_plus, self.n_plus :]

    @property
    def Rp(self):
        return self.S[self.n_plus :, : self.n_plus]

    @property
    def Tm(self):
        return self.S[self.n_plus :, self.n_plus :]

    def unitarity_residual(self) -> float:
        return float(np.linalg.norm(self.S.conj().T @ self.S - np.eye(self.S.shape[0])))


def extract_smatrix(tr: TRMatrix, basis: ModeBasis) -> SMatrix:
    """Current normalised scattering matrix on the propagating channels."""
    ir = [k for k, m in enumerate(tr.right) if m.propagating]
    il = [k for k, m in enumerate(tr.left) if m.propagating]
    if len(ir) != basis.n_plus or len(il) != basis.n_minus:
        raise ValueError("TR matrix is missing propagating channels of the basis")
    right = tuple(tr.right[k] for k in ir)
    left = tuple(tr.left[k] for k in il)
    S = np.block(
        [
            [tr.Tp[np.ix_(ir, ir)], tr.Rm[np.ix_(ir, il)]],
            [tr.Rp[np.ix_(il, ir)], tr.Tm[np.ix_(il, il)]],
        ]
    )
    J = np.sqrt(np.abs([m.current for m in right + left]))
    S = S * J[:, None] / J[None, :]
    return SMatrix(basis.E, right, left, S)


def ftr_covariance_residual(S: SMatrix) -> float:
    """|| S - P^T S^T P || with P = [[0, I], [-I, 0]] on the Kramers-paired channels."""
    n = S.n_plus
    if n != S.n_minus:
        return float("nan")
    Z, I = np.zeros((n, n)), np.eye(n)
    P = np.block([[Z, I], [-I, Z]])
    return float(np.linalg.norm(S.S - P.T @ S.S.T @ P))


@dataclass
class Observables:
    trT_plus: float
    trT_minus: float
    sigma2pi: float
    n_plus: int
    n_minus: int
    index2: int | None
    unitarity_residual: float
    skew_residual: float
    ftr_covariance: float = float("nan")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def observables(S: SMatrix, model: BlockModel) -> Observables:
    tp = float(np.linalg.norm(S.Tp) ** 2)
    tm = float(np.linalg.norm(S.Tm) ** 2)
    sigma = tp - tm
    if model.ftr_symmetric:
        index2 = (-1) ** S.n_plus
        skew = max(np.linalg.norm(S.Rp + S.Rp.T), np.linalg.norm(S.Rm + S.Rm.T))
        cov = ftr_covariance_residual(S)
    else:
        index2 = (1 if int(round(sigma)) % 2 == 0 else -1) if model.N == 0 else None
        skew, cov = float("nan"), float("nan")
    return Observables(tp, tm, sigma, S.n_plus, S.n_minus, index2, S.unitarity_residual(), float(skew), cov)


def trace_identity_check(S: SMatrix, basis: ModeBasis | None = None) -> float:
    n_plus = basis.n_plus if basis is not None else S.n_plus
    n_minus = basis.n_minus if basis is not None else S.n_minus
    tp = np.linalg.norm(S.Tp) ** 2
    tm = np.linalg.norm(S.Tm) ** 2
    return float(abs((tp - tm) - (n_plus - n_minus)))


# ---------------------------------------------------------------- pipeline


def leaf_partition(a: float, b: float, leaf_max: float) -> list:
    """2^L equal leaves with L = ceil(log2((b - a) / leaf_max))."""
    ratio = (b - a) / leaf_max
    L = max(0, math.ceil(math.log2(ratio) - 1e-12)) if ratio > 1 else 0
    edges = np.linspace(a, b, 2**L + 1)
    return list(zip(edges[:-1], edges[1:]))


def _leaf_job(args):
    model, V, E, interval, disc, basis = args
    return leaf_tr(model, V, E, interval, disc, basis)


@dataclass
class ScatterProblem:
    """Leaf TRs of one (model, V, E, discretisation) with a cache keyed by interval."""

    model: BlockModel
    V: PerturbationSpec
    E: float
    disc: LeafDiscretization
    workers: int = 1
    cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.disc = self.disc.resolved(self.model.p)
        self.basis = enumerate_modes(self.model, self.E, self.disc.n_chan - 1)

    def leaves(self, intervals) -> list:
        keys = [(round(a, 12), round(b, 12)) for a, b in intervals]
        todo = [k for k in dict.fromkeys(keys) if k not in self.cache]
        jobs = [(self.model, self.V, self.E, k, self.disc, self.basis) for k in todo]
        if self.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(self.workers) as pool:
                results = list(pool.map(_leaf_job, jobs))
        else:
            results = [_leaf_job(j) for j in jobs]
        self.cache.update(zip(todo, results))
        return [self.cache[k] for k in keys]

    def tr(self, a: float, b: float, leaf_max: float | None = None) -> TRMatrix:
        if leaf_max is None or leaf_max >= b - a:
            return self.leaves([(a, b)])[0]
        return binary_merge(self.leaves(leaf_partition(a, b, leaf_max)))

    def smatrix(self, a: float, b: float, leaf_max: float | None = None) -> SMatrix:
        return extract_smatrix(self.tr(a, b, leaf_max), self.basis)


def compute_smatrix(
    model: BlockModel,
    V: PerturbationSpec,
    E: float,
    disc: LeafDiscretization,
    leaf_max: float | None = 1.0 / 16,
    workers: int = 1,
) -> SMatrix:
    """S matrix of V over its support [0, l]."""
    return ScatterProblem(model, V, E, disc, workers).smatrix(0.0, V.length, leaf_max)


# ------------------------------------------------------------ serialisation


def _mode_line(m) -> str:
    return f"{m.block} {int(m.conjugated)} {m.n} {m.eps} {m.xi.real:.17g} {m.xi.imag:.17g} {m.current:.17g}"


def write_smatrix(S: SMatrix, stream) -> None:
    """Structured text: header, dimensions, mode maps, then row-major (re, im) pairs."""
    n = S.S.shape[0]
    stream.write(f"# z2scatter smatrix v{FORMAT_VERSION}\n")
    stream.write(f"E {S.E:.17g}\n")
    stream.write(f"dims {n} {S.n_plus} {S.n_minus}\n")
    stream.write("# modes: block conjugated n eps re(xi) im(xi) current\n")
    for tag, ms in (("right", S.right), ("left", S.left)):
        for m in ms:
            stream.write(f"{tag} {_mode_line(m)}\n")
    stream.write("data\n")
    for row in S.S:
        stream.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n")


def smatrix_to_text(S: SMatrix) -> str:
    buf = io.StringIO()
    write_smatrix(S, buf)
    return buf.getvalue()


def read_smatrix(text: str):
    """Returns (E, n_plus, n_minus, S array, mode rows)."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    E = float(lines[0].split()[1])
    n, n_plus, n_minus = (int(t) for t in lines[1].split()[1:])
    modes = [ln.split() for ln in lines[2 : 2 + n]]
    k = 2 + n
    assert lines[k] == "data"
    vals = np.array([[float(t) for t in ln.split()] for ln in lines[k + 1 : k + 1 + n]])
    S = vals[:, 0::2] + 1j * vals[:, 1::2]
    return E, n_plus, n_minus, S, modes


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
