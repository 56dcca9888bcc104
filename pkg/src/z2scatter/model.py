"""Block Dirac models, the fermionic time-reversal operator and the perturbation catalogue.

Spinor layout: the ``M`` blocks of ``h_p`` come first, followed by the ``N``
blocks of ``conj(h_p)``.  Each block holds two components (upper, lower), so
block ``s`` owns components ``2s`` and ``2s + 1``.  With this ordering the
time-reversal operator is ``theta = K J`` with ``J = [[0, I], [-I, 0]]`` acting
on the (h-blocks, conj-blocks) split, and an FTR-symmetric perturbation has the
form ``[[V1, -conj(V2)], [V2, conj(V1)]]`` with ``V1`` Hermitian and ``V2``
antisymmetric.

All catalogued perturbations are written directly in the rotated basis where
``h = D_x sigma_3 - D_y sigma_2 + y sigma_1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np

SIGMA0 = np.eye(2, dtype=complex)
SIGMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA3 = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class BlockModel:
    """The unperturbed operator ``h_p^{+M} + conj(h_p)^{+N}``."""

    M: int
    N: int
    p: int

    @property
    def spinor_dim(self) -> int:
        return 2 * (self.M + self.N)

    @property
    def n_blocks(self) -> int:
        return self.M + self.N

    @property
    def ftr_symmetric(self) -> bool:
        return self.M == self.N

    def is_conjugated(self, s: int) -> bool:
        return s >= self.M

    def theta(self) -> "Theta":
        return Theta(self)


def build_model(M: int, N: int, p: int) -> BlockModel:
    if M < 0 or N < 0:
        raise ValueError("block counts must be non-negative")
    if M + N < 1:
        raise ValueError("model needs at least one block (M + N >= 1)")
    if p < 1:
        raise ValueError(f"ladder power p must be >= 1, got {p}")
    return BlockModel(int(M), int(N), int(p))


class Theta:
    """theta = K J on the block layout of an FTR-symmetric model.

    ``J`` sends the h-part ``u`` and conj-part ``v`` of a spinor to ``(v, -u)``,
    so block ``s`` is paired with block ``M + s``.
    """

    def __init__(self, model: BlockModel):
        if not model.ftr_symmetric:
            raise ValueError(
                f"theta pairs h-blocks with conj-blocks and needs M == N (got M={model.M}, N={model.N})"
            )
        half = 2 * model.M
        J = np.zeros((2 * half, 2 * half))
        J[:half, half:] = np.eye(half)
        J[half:, :half] = -np.eye(half)
        self.J = J

    def apply(self, v: np.ndarray) -> np.ndarray:
        """theta v for vectors stacked along the last axis."""
        return np.conj(v) @ self.J.T

    def conjugate(self, A: np.ndarray) -> np.ndarray:
        """theta^* A theta = -J conj(A) J, batched over leading axes."""
        return -self.J @ np.conj(A) @ self.J


# ---------------------------------------------------------------------------
# perturbations


@dataclass(frozen=True)
class PerturbationSpec:
    """A matrix-valued perturbation ``V(x, y) = chi_[0,l](x) sum_k f_k(x, y) A_k``.

    The scalar profiles ``f_k`` are real, so ``V`` is Hermitian whenever every
    ``A_k`` is.  Evaluation is pure and vectorised: ``x`` and ``y`` broadcast
    against each other and the matrix axes are appended.
    """

    name: str
    dim: int
    length: float
    terms: tuple
    declared_ftr: bool = False

    def evaluate(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape, y.shape)
        out = np.zeros(shape + (self.dim, self.dim), dtype=complex)
        inside = (x >= 0.0) & (x <= self.length)
        for f, A in self.terms:
            vals = np.where(inside, f(x, y), 0.0)
            out += np.asarray(vals)[..., None, None] * A
        return out

    def __call__(self, x, y) -> np.ndarray:
        return self.evaluate(x, y)

    def scaled(self, factor: float) -> "PerturbationSpec":
        terms = tuple((f, factor * A) for f, A in self.terms)
        return PerturbationSpec(self.name, self.dim, self.length, terms, self.declared_ftr)

    def with_length(self, length: float) -> "PerturbationSpec":
        return PerturbationSpec(self.name, self.dim, float(length), self.terms, self.declared_ftr)


def zero_perturbation(dim: int, length: float = 1.0) -> PerturbationSpec:
    return PerturbationSpec("zero", dim, float(length), (), declared_ftr=True)


def _oscillation(x, E, w):
    return np.cos((-E - w) * x), np.cos((-E + w) * x), np.cos(2 * w * x) + np.cos(2 * E * x)


def v1_profile(x, y, E):
    """Oscillatory scalar profile tuned to the p = 1 propagating wavenumbers."""
    w = np.sqrt(E * E - 2.0)
    c1, c2, c3 = _oscillation(x, E, w)
    return np.exp(-y * y) * (y * c1 + y * c2 + c3)


def v2_profile(x, y, E):
    """Scalar profile tuned to the p = 2 propagating wavenumbers."""
    w = np.sqrt(E * E - 8.0)
    c1, c2, c3 = _oscillation(x, E, w)
    return (1.0 + y) * np.exp(-y * y) * (c1 + c2 + c3)


def ftr_form(V1: np.ndarray, V2: np.ndarray) -> np.ndarray:
    """Assemble [[V1, -conj(V2)], [V2, conj(V1)]]."""
    V1 = np.asarray(V1, dtype=complex)
    V2 = np.asarray(V2, dtype=complex)
    return np.block([[V1, -np.conj(V2)], [V2, np.conj(V1)]])


def _catalogue_matrices():
    I2 = SIGMA0
    Z2 = np.zeros((2, 2), dtype=complex)
    ones2 = np.ones((2, 2))
    ones3 = np.ones((3, 3))
    mats = {}
    mats["V1"] = ("v1", np.eye(8) + np.kron(np.kron(SIGMA1.real, ones2), SIGMA2), True)
    mats["V_TR"] = ("v1", np.block([[I2, (1 - 1j) * SIGMA2], [(1 + 1j) * SIGMA2, I2]]), True)
    mats["V_NTR"] = ("v1", np.block([[I2, (1 - 1j) * SIGMA2], [(1 + 1j) * SIGMA2, -I2]]), False)
    a, b = (1 - 1j) * SIGMA2, (1 + 1j) * SIGMA2
    mats["V_TRS_M2"] = (
        "v1",
        np.block([[I2, Z2, Z2, a], [Z2, -I2, a, Z2], [Z2, b, I2, Z2], [b, Z2, Z2, -I2]]),
        True,
    )
    V2_p2 = (1 + 1j) * SIGMA2
    mats["p2_V2"] = ("v2", ftr_form(np.zeros((2, 2)), V2_p2), True)
    mats["p2_V1V2"] = ("v2", ftr_form(SIGMA3, V2_p2), True)
    mats["p2_sigma3"] = ("v2", SIGMA3.copy(), False)
    V2_m3 = np.kron(ones3, SIGMA2)
    mats["M3_EXS"] = ("v1", ftr_form(np.kron(np.eye(3), SIGMA0), V2_m3), True)
    mats["M3_NEX"] = ("v1", ftr_form(np.kron(np.diag([1.0, -1.0, 2.0]), SIGMA0), V2_m3), True)
    mats["v1_scalar"] = ("v1", np.ones((1, 1), dtype=complex), False)
    mats["v2_scalar"] = ("v2", np.ones((1, 1), dtype=complex), False)
    return mats


_CATALOGUE = _catalogue_matrices()

# model each catalogued perturbation was written for, as (M, N, p)
CATALOGUE_MODELS = {
    "V1": (2, 2, 1),
    "V_TR": (1, 1, 1),
    "V_NTR": (1, 1, 1),
    "V_TRS_M2": (2, 2, 1),
    "p2_V2": (1, 1, 2),
    "p2_V1V2": (1, 1, 2),
    "p2_sigma3": (1, 0, 2),
    "M3_EXS": (3, 3, 1),
    "M3_NEX": (3, 3, 1),
}


def catalogue_names() -> list[str]:
    return sorted(_CATALOGUE)


def perturbation_library(name: str, E: float, l: float) -> PerturbationSpec:
    """Closed-form perturbation ``name`` with oscillation frequencies built from ``E``.

    Supported names: ``V1``, ``V_TR``, ``V_NTR``, ``V_TRS_M2``, ``p2_V2``,
    ``p2_V1V2``, ``p2_sigma3``, ``M3_EXS``, ``M3_NEX`` and the scalar profiles
    ``v1_scalar``, ``v2_scalar``.  The result vanishes outside ``0 <= x <= l``.
    """
    if name not in _CATALOGUE:
        raise KeyError(f"unknown perturbation {name!r}; known: {', '.join(catalogue_names())}")
    if l <= 0:
        raise ValueError("support length must be positive")
    profile, A, ftr = _CATALOGUE[name]
    if profile == "v1":
        if E * E <= 2.0:
            raise ValueError("v1 profile needs E^2 > 2")
        f = partial(v1_profile, E=float(E))
    else:
        if E * E <= 8.0:
            raise ValueError("v2 profile needs E^2 > 8")
        f = partial(v2_profile, E=float(E))
    A = np.array(A, dtype=complex)
    return PerturbationSpec(name, A.shape[0], float(l), ((f, A),), declared_ftr=ftr)


def random_ftr(seed: int, model: BlockModel, envelope: PerturbationSpec) -> PerturbationSpec:
    """Random FTR-symmetric matrix times a scalar envelope.

    Entries come from a Philox counter-based stream keyed by ``seed``, so the
    same seed reproduces the same matrix on every platform.
    """
    if not model.ftr_symmetric:
        raise ValueError("random FTR perturbations need M == N")
    if envelope.dim != 1:
        raise ValueError("envelope must be scalar-valued")
    rng = np.random.Generator(np.random.Philox(seed))
    n = 2 * model.M
    G1 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    G2 = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    V1 = 0.5 * (G1 + G1.conj().T)
    V2 = 0.5 * (G2 - G2.T)
    A = ftr_form(V1, V2)
    terms = tuple((f, a[0, 0] * A) for f, a in envelope.terms)
    return PerturbationSpec(f"random_ftr[{seed}]", A.shape[0], envelope.length, terms, declared_ftr=True)


# ---------------------------------------------------------------------------
# residuals


def support_grid(V: PerturbationSpec, nx: int = 10, ny: int = 10, ymax: float = 2.5):
    """Tensor grid covering the support (closed interval in x, |y| <= ymax)."""
    xs = np.linspace(0.0, V.length, nx)
    ys = np.linspace(-ymax, ymax, ny)
    return [(x, y) for x in xs for y in ys]


def _samples(V: PerturbationSpec, grid: Sequence) -> np.ndarray:
    pts = np.asarray(grid, dtype=float)
    if pts.size == 0:
        raise ValueError("sample grid is empty")
    return V.evaluate(pts[:, 0], pts[:, 1])


def ftr_residual(V: PerturbationSpec, model: BlockModel, sample_grid: Sequence) -> float:
    """max ||theta^* V theta - V||_F / (1 + ||V||_F) over the grid."""
    theta = Theta(model)
    if V.dim != model.spinor_dim:
        raise ValueError(f"perturbation has dim {V.dim}, model needs {model.spinor_dim}")
    A = _samples(V, sample_grid)
    diff = np.linalg.norm(theta.conjugate(A) - A, axis=(-2, -1))
    return float(np.max(diff / (1.0 + np.linalg.norm(A, axis=(-2, -1)))))


def hermiticity_residual(V: PerturbationSpec, sample_grid: Sequence) -> float:
    A = _samples(V, sample_grid)
    diff = np.linalg.norm(A - np.conj(np.swapaxes(A, -1, -2)), axis=(-2, -1))
    return float(np.max(diff / (1.0 + np.linalg.norm(A, axis=(-2, -1)))))

