"""Hermite functions, spectral branches of h_p(xi) and mode enumeration at fixed energy.

Hermite "polynomials" here are the L2-normalised Hermite functions
``phi_n(y) = (2^n n! sqrt(pi))^(-1/2) H_n(y) exp(-y^2/2)``.  With the
annihilation operator ``a = d/dy + y`` they satisfy ``a phi_n = sqrt(2n) phi_{n-1}``
and ``a^* phi_n = sqrt(2(n+1)) phi_{n+1}``, so ``a^p phi_n = beta_n phi_{n-p}``
with ``beta_n^2 = 2^p n! / (n-p)!``.

A mode of an h-block at energy E lives on one *channel* n (the Hermite level
of its lower component).  For ``n >= p`` the channel carries the two modes
``(n, +1)`` and ``(n, -1)`` with profile ``c (beta_n phi_{n-p}, (E - xi) phi_n)``;
for ``n < p`` only the linear-branch mode exists (``xi = -E`` on h-blocks,
``xi = +E`` on conj-blocks).  Conj-blocks use ``(E + xi)`` in place of ``(E - xi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_hermite

from .model import BlockModel

BAND_EDGE_TOL = 1e-12
ENUM_EDGE_TOL = 1e-9


class BandEdgeError(ValueError):
    """Energy sits on (or numerically at) a band edge of some branch."""


def hermite_functions(n_max: int, y) -> np.ndarray:
    """Values of phi_0..phi_{n_max} at ``y``; shape ``(n_max + 1,) + y.shape``."""
    y = np.asarray(y, dtype=float)
    out = np.empty((n_max + 1,) + y.shape)
    out[0] = math.pi ** -0.25 * np.exp(-0.5 * y * y)
    if n_max >= 1:
        out[1] = math.sqrt(2.0) * y * out[0]
    for n in range(1, n_max):
        out[n + 1] = math.sqrt(2.0 / (n + 1)) * y * out[n] - math.sqrt(n / (n + 1)) * out[n - 1]
    return out


def hermite_derivatives(n_max: int, y) -> np.ndarray:
    """phi_n'(y) from phi_n' = sqrt(n/2) phi_{n-1} - sqrt((n+1)/2) phi_{n+1}."""
    phi = hermite_functions(n_max + 1, y)
    out = np.empty((n_max + 1,) + np.shape(y))
    for n in range(n_max + 1):
        lower = math.sqrt(n / 2.0) * phi[n - 1] if n > 0 else 0.0
        out[n] = lower - math.sqrt((n + 1) / 2.0) * phi[n + 1]
    return out


def hermite_rule(n_quad: int, scale: float = 1.0):
    """Gauss-Hermite nodes with weights that already include ``exp(y^2)``.

    ``sum_q w_q f(y_q)`` integrates ``f`` over the real line; it is exact when
    ``f = P(y) exp(-(y/scale)^2)`` with ``deg P <= 2 n_quad - 1``.  The weights
    use ``1 / (n phi_{n-1}(t)^2)`` so nothing overflows for large ``n_quad``.
    """
    t, _ = roots_hermite(n_quad)
    phi = hermite_functions(n_quad - 1, t)[-1]
    w = 1.0 / (n_quad * phi * phi)
    return scale * t, scale * w


@dataclass
class HermiteBasis:
    """Hermite functions phi_0..phi_{n_max} tabulated on a Gauss-Hermite rule.

    ``scale = 1`` integrates products of two Hermite functions exactly;
    ``scale = 1/sqrt(2)`` integrates products of two Hermite functions times a
    Gaussian-enveloped polynomial exactly, which is what the perturbation
    projection needs.
    """

    n_max: int
    n_quad: int | None = None
    scale: float = 1.0
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    values: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_quad is None:
            self.n_quad = self.n_max + 8
        self.nodes, self.weights = hermite_rule(self.n_quad, self.scale)
        self.values = hermite_functions(self.n_max, self.nodes)
        self.values.setflags(write=False)

    def gram(self) -> np.ndarray:
        return (self.values * self.weights) @ self.values.T

    def project(self, f: np.ndarray) -> np.ndarray:
        """Hermite coefficients of samples ``f`` (nodes on the last axis)."""
        return f @ (self.values * self.weights).T

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        n = coeffs.shape[-1]
        return coeffs @ self.values[:n]


def ladder_coeff(n: int, p: int) -> float:
    """beta_n = sqrt(2^p n! / (n - p)!), zero below the ladder."""
    if n < p:
        return 0.0
    prod = 1.0
    for k in range(n - p + 1, n + 1):
        prod *= 2.0 * k
    return math.sqrt(prod)


def branch_xi(E: float, n: int, p: int, eps: int) -> complex:
    """Wavenumber of branch (n, eps) at energy E.

    Evanescent branches get ``eps * i * sqrt(beta^2 - E^2)`` so that ``eps = +1``
    decays towards ``x -> +inf``.
    """
    if eps not in (1, -1):
        raise ValueError("eps must be +1 or -1")
    if n < p:
        return complex(eps * E)
    d = E * E - ladder_coeff(n, p) ** 2
    if abs(d) <= BAND_EDGE_TOL:
        raise BandEdgeError(f"E={E} is a band edge of level n={n}, p={p}")
    if d > 0:
        return complex(eps * math.sqrt(d))
    return complex(0.0, eps * math.sqrt(-d))


def mode_profile(E: float, n: int, p: int, eps: int, conjugated: bool):
    """Normalised (upper, lower) coefficients; upper lives on level n - p."""
    xi = branch_xi(E, n, p, eps)
    beta = ladder_coeff(n, p)
    lower = (E + xi) if conjugated else (E - xi)
    c = 1.0 / math.sqrt(beta * beta + abs(lower) ** 2)
    return complex(c * beta), complex(c * lower)


def mode_current(mode: "Mode", E: float) -> float:
    """Group velocity dE/dxi of a propagating mode; 0 for evanescent modes."""
    if abs(mode.xi.imag) > 0.0:
        return 0.0
    if mode.n < mode.p:
        return 1.0 if mode.conjugated else -1.0
    return mode.xi.real / E


PROP_RIGHT, PROP_LEFT, EVAN_RIGHT, EVAN_LEFT = "PropRight", "PropLeft", "EvanRight", "EvanLeft"


@dataclass(frozen=True)
class Mode:
    block: int
    conjugated: bool
    n: int
    eps: int
    p: int
    xi: complex
    current: float
    upper: complex
    lower: complex
    kind: str

    @property
    def propagating(self) -> bool:
        return self.kind in (PROP_RIGHT, PROP_LEFT)

    @property
    def right_going(self) -> bool:
        return self.kind in (PROP_RIGHT, EVAN_RIGHT)

    @property
    def decay(self) -> float:
        return abs(self.xi.imag)

    @property
    def key(self) -> tuple:
        return (self.block, self.n, self.eps)

    def pair_key(self, n_pairs: int) -> tuple:
        # right-movers and their theta-images sort to the same position
        return (self.block % n_pairs, self.n, self.conjugated != (not self.right_going))


@dataclass(frozen=True)
class ModeBasis:
    """All modes of a model at energy E up to a channel cut-off.

    ``right`` and ``left`` list the right-going (PropRight then EvanRight) and
    left-going modes.  Propagating modes are ordered so that, for M == N
    models, ``theta`` maps the k-th right-mover to minus the k-th left-mover;
    evanescent modes follow in order of increasing decay rate.
    """

    model: BlockModel
    E: float
    n_chan: int
    right: tuple
    left: tuple

    @property
    def modes(self) -> tuple:
        prop = [m for m in self.right if m.propagating] + [m for m in self.left if m.propagating]
        evan = sorted(
            [m for m in self.right + self.left if not m.propagating], key=lambda m: (m.decay, m.key)
        )
        return tuple(prop + evan)

    @property
    def n_plus(self) -> int:
        return sum(1 for m in self.right if m.propagating)

    @property
    def n_minus(self) -> int:
        return sum(1 for m in self.left if m.propagating)

    @property
    def n_evan(self) -> int:
        return sum(1 for m in self.right + self.left if not m.propagating)

    def propagating_right(self) -> list:
        return [m for m in self.right if m.propagating]

    def propagating_left(self) -> list:
        return [m for m in self.left if m.propagating]


def _make_mode(model: BlockModel, s: int, n: int, eps: int, E: float) -> Mode:
    conj = model.is_conjugated(s)
    p = model.p
    xi = branch_xi(E, n, p, eps)
    upper, lower = mode_profile(E, n, p, eps, conj)
    if xi.imag != 0.0:
        kind = EVAN_RIGHT if xi.imag > 0 else EVAN_LEFT
        J = 0.0
    else:
        J = -1.0 if (n < p and not conj) else (1.0 if n < p else xi.real / E)
        kind = PROP_RIGHT if J > 0 else PROP_LEFT
    if not conj and kind == PROP_LEFT:
        # phase convention: theta(right-mover) = -(paired left-mover) for every pair
        upper, lower = -upper, -lower
    return Mode(s, conj, n, eps, p, xi, J, upper, lower, kind)


def enumerate_modes(model: BlockModel, E: float, n_mode_max: int) -> ModeBasis:
    """Every mode with channel level ``n <= n_mode_max`` at energy E."""
    if E == 0:
        raise ValueError("E = 0 is excluded (linear branches have no direction)")
    p = model.p
    for n in range(p, n_mode_max + 1):
        if abs(abs(E) - ladder_coeff(n, p)) <= ENUM_EDGE_TOL:
            raise BandEdgeError(f"E={E} within {ENUM_EDGE_TOL} of the band edge of level {n}")
    if ladder_coeff(n_mode_max + 1, p) < abs(E):
        raise ValueError(f"n_mode_max={n_mode_max} cuts off propagating level {n_mode_max + 1}")
    modes = []
    for s in range(model.n_blocks):
        conj = model.is_conjugated(s)
        for n in range(n_mode_max + 1):
            if n >= p:
                signs = (1, -1)
            else:
                signs = (1,) if conj else (-1,)
            for eps in signs:
                modes.append(_make_mode(model, s, n, eps, E))
    npairs = max(model.M, model.N) if model.ftr_symmetric else model.n_blocks
    right = [m for m in modes if m.right_going]
    left = [m for m in modes if not m.right_going]

    def order(ms):
        prop = sorted((m for m in ms if m.propagating), key=lambda m: m.pair_key(npairs))
        evan = sorted((m for m in ms if not m.propagating), key=lambda m: (m.decay, m.key))
        return tuple(prop + evan)

    return ModeBasis(model, float(E), n_mode_max + 1, order(right), order(left))
