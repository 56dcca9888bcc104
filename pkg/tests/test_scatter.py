import io

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from z2scatter.model import build_model, perturbation_library, random_ftr, zero_perturbation
from z2scatter.scatter import (
    SMatrix,
    ScatterProblem,
    TRMatrix,
    binary_merge,
    compute_smatrix,
    extract_smatrix,
    fold_merge,
    free_tr,
    ftr_covariance_residual,
    leaf_partition,
    leaf_tr,
    merge_tr,
    observables,
    read_smatrix,
    smatrix_to_text,
    trace_identity_check,
    write_smatrix,
)
from z2scatter.solver import LeafDiscretization, SolverError
from z2scatter.spectral import enumerate_modes

E = 1.8
M111 = build_model(1, 1, 1)
B111 = enumerate_modes(M111, E, 12)
DISC = LeafDiscretization(0, 1, 6, 12)


def _expected_free(basis, ell):
    return (
        np.array([np.exp(1j * m.xi * ell) for m in basis.right]),
        np.array([np.exp(-1j * m.xi * ell) for m in basis.left]),
    )


def test_free_tr_phases():
    tr = free_tr(B111, 0.0, 0.7)
    tp, tm = _expected_free(B111, 0.7)
    assert np.allclose(np.diag(tr.Tp), tp) and np.allclose(np.diag(tr.Tm), tm)
    assert not tr.Rm.any() and not tr.Rp.any()
    assert tr.full().shape == (len(B111.right) + len(B111.left),) * 2
    assert np.all(np.abs(np.diag(tr.full())) <= 1 + 1e-15)


def test_evanescent_decay_per_length():
    ell = 0.35
    tr = free_tr(B111, 0.0, ell)
    for k, m in enumerate(B111.right):
        if not m.propagating:
            assert tr.Tp[k, k] == pytest.approx(np.exp(-m.decay * ell), abs=1e-15)
    for k, m in enumerate(B111.left):
        if not m.propagating:
            assert tr.Tm[k, k] == pytest.approx(np.exp(-m.decay * ell), abs=1e-15)


def test_zero_perturbation_leaf_is_free():
    tr = leaf_tr(M111, zero_perturbation(4), E, (0.0, 0.5), DISC, B111)
    ref = free_tr(B111, 0.0, 0.5)
    assert np.linalg.norm(tr.full() - ref.full()) <= 1e-12


def _random_tr(rng, a, b, nr, nl, reflect=True):
    def g(m, n):
        return 0.3 * (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n)))

    z = lambda m, n: np.zeros((m, n), complex)
    return TRMatrix(
        a, b, tuple(range(nr)), tuple(range(nl)), g(nr, nr), g(nr, nl) if reflect else z(nr, nl),
        g(nl, nr) if reflect else z(nl, nr), g(nl, nl),
    )


def test_merge_without_reflection_composes():
    rng = np.random.default_rng(1)
    t1 = _random_tr(rng, 0, 1, 4, 5, reflect=False)
    t2 = _random_tr(rng, 1, 2, 4, 5, reflect=False)
    m = merge_tr(t1, t2)
    assert np.allclose(m.Tp, t2.Tp @ t1.Tp) and np.allclose(m.Tm, t1.Tm @ t2.Tm)
    assert not m.Rm.any() and not m.Rp.any()
    assert (m.a, m.b) == (0, 2)


def test_merge_with_free_leaf():
    rng = np.random.default_rng(2)
    t = _random_tr(rng, 0, 1, 3, 3)
    basis = enumerate_modes(M111, E, 2)
    nr, nl = len(basis.right), len(basis.left)
    t = _random_tr(rng, 0, 1, nr, nl)
    f = free_tr(basis, 1.0, 1.0)
    m = merge_tr(t, f)
    assert np.allclose(m.full(), t.full(), atol=1e-15)


def test_merge_rejects_gap():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError, match="adjacent"):
        merge_tr(_random_tr(rng, 0, 1, 2, 2), _random_tr(rng, 1.5, 2, 2, 2))


def test_merge_reports_resonance():
    n = 2
    t1 = TRMatrix(0, 1, (0, 1), (0, 1), np.eye(n), np.eye(n), np.eye(n), np.eye(n))
    t2 = TRMatrix(1, 2, (0, 1), (0, 1), np.eye(n), np.eye(n), np.eye(n), np.eye(n))
    with pytest.raises(SolverError):
        merge_tr(t1, t2)


def test_merge_associative_free():
    leaves = [free_tr(B111, k / 16, (k + 1) / 16) for k in range(16)]
    m = binary_merge(leaves)
    tp, tm = _expected_free(B111, 1.0)
    assert np.allclose(np.diag(m.Tp), tp, atol=1e-13) and np.allclose(np.diag(m.Tm), tm, atol=1e-13)
    assert np.abs(m.Tp - np.diag(np.diag(m.Tp))).max() < 1e-15
    assert binary_merge(leaves[:2]).b == merge_tr(*leaves[:2]).b


def test_fold_vs_tree_random_ftr_leaves():
    env = perturbation_library("v1_scalar", E, 0.5)
    V = random_ftr(7, M111, env)
    prob = ScatterProblem(M111, V, E, LeafDiscretization(0, 0.5, 5, 10))
    leaves = prob.leaves(leaf_partition(0.0, 0.5, 1 / 16))
    assert len(leaves) == 8
    d = np.linalg.norm(binary_merge(leaves).full() - fold_merge(leaves).full())
    assert d <= 1e-10


def test_leaf_partition():
    assert len(leaf_partition(0, 1, 1 / 16)) == 16
    assert len(leaf_partition(0, 1, 0.3)) == 4
    assert leaf_partition(0, 1, 2) == [(0.0, 1.0)]


def test_zero_perturbation_smatrix():
    S = compute_smatrix(M111, zero_perturbation(4), E, DISC)
    assert S.S.shape == (6, 6)
    assert np.allclose(np.abs(np.diag(S.S)), 1, atol=1e-12)
    assert np.linalg.norm(S.S - np.diag(np.diag(S.S))) < 1e-12
    assert S.unitarity_residual() <= 1e-12
    o = observables(S, M111)
    assert o.trT_plus == pytest.approx(3, abs=1e-12)
    assert o.sigma2pi == pytest.approx(0, abs=1e-12)
    assert o.index2 == -1
    assert trace_identity_check(S) == 0.0 or trace_identity_check(S) < 1e-12


def test_twelve_by_twelve():
    model = build_model(2, 2, 1)
    S = compute_smatrix(model, zero_perturbation(8), E, LeafDiscretization(0, 1, 4, 6))
    assert S.S.shape == (12, 12) and S.n_plus == S.n_minus == 6
    assert S.Tp.shape == S.Rm.shape == (6, 6)
    assert observables(S, model).index2 == 1


@pytest.fixture(scope="module")
def vtr_smatrix():
    V = perturbation_library("V_TR", E, 1.0)
    return compute_smatrix(M111, V, E, LeafDiscretization(0, 1, 8, 20), leaf_max=0.5)


def test_ftr_structure(vtr_smatrix):
    S = vtr_smatrix
    o = observables(S, M111)
    assert o.unitarity_residual <= 1e-8
    assert o.skew_residual <= 1e-8
    assert o.ftr_covariance <= 1e-8
    assert abs(o.sigma2pi) <= 1e-8
    assert o.trT_plus >= 1 - 1e-6
    # odd n_plus and skew R: one reflection singular value vanishes
    assert np.linalg.svd(S.Rp, compute_uv=False).min() <= 1e-6
    assert trace_identity_check(S) <= 1e-8


def test_ftr_covariance_of_free_model():
    S = compute_smatrix(M111, zero_perturbation(4), E, DISC)
    assert ftr_covariance_residual(S) < 1e-12


def test_p2_conductivity():
    model = build_model(1, 0, 2)
    V = perturbation_library("p2_sigma3", 3.0, 0.5)
    S = compute_smatrix(model, V, 3.0, LeafDiscretization(0, 0.5, 10, 16))
    o = observables(S, model)
    assert (S.n_plus, S.n_minus) == (1, 3)
    assert o.sigma2pi == pytest.approx(-2, abs=1e-8)
    assert o.index2 == 1
    assert np.isnan(o.skew_residual)


def test_serialisation_round_trip():
    S = compute_smatrix(M111, perturbation_library("V_TR", E, 0.25), E, LeafDiscretization(0, 0.25, 5, 10))
    text = smatrix_to_text(S)
    E2, npl, nmi, arr, modes = read_smatrix(text)
    assert E2 == E and (npl, nmi) == (S.n_plus, S.n_minus)
    assert np.array_equal(arr, S.S)
    assert len(modes) == S.S.shape[0]
    buf = io.StringIO()
    write_smatrix(S, buf)
    assert buf.getvalue() == text
    assert text.startswith("# z2scatter smatrix v1")


def test_extract_rejects_missing_channels():
    tr = free_tr(B111, 0, 1)
    small = TRMatrix(0, 1, tr.right[:1], tr.left, tr.Tp[:1, :1], tr.Rm[:1], tr.Rp[:, :1], tr.Tm)
    with pytest.raises(ValueError):
        extract_smatrix(small, B111)


@settings(max_examples=6, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 2**32 - 1))
def test_random_ftr_invariants(seed):
    env = perturbation_library("v1_scalar", E, 0.25)
    V = random_ftr(seed, M111, env)
    S = compute_smatrix(M111, V, E, LeafDiscretization(0, 0.25, 8, 12), leaf_max=None)
    o = observables(S, M111)
    assert o.unitarity_residual <= 1e-8
    assert o.skew_residual <= 1e-8
    assert o.ftr_covariance <= 1e-8
    assert abs(o.sigma2pi) <= 1e-8
    assert o.trT_plus >= 1 - 1e-6


def test_free_p2_ftr_trace_counts_modes():
    model = build_model(1, 1, 2)
    S = compute_smatrix(model, zero_perturbation(4), 3.0, LeafDiscretization(0, 1, 4, 8), leaf_max=None)
    o = observables(S, model)
    assert (o.n_plus, o.n_minus) == (4, 4)
    assert o.trT_plus == pytest.approx(4, abs=1e-12) and o.trT_minus == pytest.approx(4, abs=1e-12)
