import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from z2scatter.model import (
    CATALOGUE_MODELS,
    SIGMA2,
    Theta,
    build_model,
    catalogue_names,
    ftr_form,
    ftr_residual,
    hermiticity_residual,
    perturbation_library,
    random_ftr,
    support_grid,
    zero_perturbation,
)

ENERGY = {1: 1.8, 2: 3.0}


def catalogue_case(name):
    M, N, p = CATALOGUE_MODELS[name]
    return build_model(M, N, p), perturbation_library(name, ENERGY[p], 1.0)


def test_build_model_examples():
    m = build_model(1, 1, 1)
    assert m.spinor_dim == 4 and m.ftr_symmetric
    m = build_model(2, 2, 1)
    assert m.spinor_dim == 8 and m.ftr_symmetric
    m = build_model(1, 0, 2)
    assert m.spinor_dim == 2 and not m.ftr_symmetric


@pytest.mark.parametrize("args", [(0, 0, 1), (1, 1, 0), (-1, 2, 1)])
def test_build_model_rejects(args):
    with pytest.raises(ValueError):
        build_model(*args)


def test_theta_needs_pairing():
    with pytest.raises(ValueError):
        Theta(build_model(1, 0, 1))
    with pytest.raises(ValueError):
        ftr_residual(zero_perturbation(2), build_model(1, 0, 1), [(0.0, 0.0)])


complex_mats = arrays(np.complex128, (8, 8), elements=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))


@given(complex_mats)
def test_theta_squared_is_minus_one(A):
    th = Theta(build_model(2, 2, 1))
    assert np.allclose(th.conjugate(th.conjugate(A)), A, atol=1e-12)
    v = A[0]
    assert np.allclose(th.apply(th.apply(v)), -v, atol=1e-12)


@pytest.mark.parametrize("name", [n for n in catalogue_names() if n in CATALOGUE_MODELS])
def test_catalogue_symmetries(name):
    model, V = catalogue_case(name)
    grid = support_grid(V)
    assert hermiticity_residual(V, grid) <= 1e-12
    if model.ftr_symmetric:
        r = ftr_residual(V, model, grid)
        if V.declared_ftr:
            assert r <= 1e-12
        else:
            assert r > 1e-2


def test_v_ntr_breaks_symmetry():
    model, V = catalogue_case("V_NTR")
    assert not V.declared_ftr
    assert ftr_residual(V, model, support_grid(V)) > 0.1


def test_v1_scalar_at_origin():
    V = perturbation_library("v1_scalar", 1.8, 1.0)
    # cos terms are 1 at x = 0, the y-linear ones vanish at y = 0
    assert V(0.0, 0.0)[0, 0] == pytest.approx(2.0, abs=1e-15)


@pytest.mark.parametrize("name", catalogue_names())
def test_outside_support_is_zero(name):
    E = 3.0 if name.startswith("p2") or name == "v2_scalar" else 1.8
    V = perturbation_library(name, E, 1.5)
    assert not np.any(V(1.6, 0.3))
    assert not np.any(V(-0.01, 0.3))
    assert np.any(V(1.5, 0.3))


def test_unknown_name():
    with pytest.raises(KeyError):
        perturbation_library("nope", 1.8, 1.0)


def test_ftr_form_is_symmetric():
    model = build_model(1, 1, 1)
    A = ftr_form(np.eye(2), (1 + 1j) * SIGMA2)
    assert np.allclose(Theta(model).conjugate(A), A)


@settings(max_examples=25)
@given(st.integers(min_value=0, max_value=2**40), st.sampled_from([1, 2, 3]))
def test_random_ftr_symmetric(seed, M):
    model = build_model(M, M, 1)
    V = random_ftr(seed, model, perturbation_library("v1_scalar", 1.8, 1.0))
    grid = support_grid(V)
    assert ftr_residual(V, model, grid) <= 1e-12
    assert hermiticity_residual(V, grid) <= 1e-12


def test_random_ftr_determinism():
    model = build_model(1, 1, 1)
    env = perturbation_library("v1_scalar", 1.8, 1.0)
    a = random_ftr(7, model, env)(0.3, 0.2)
    b = random_ftr(7, model, env)(0.3, 0.2)
    c = random_ftr(8, model, env)(0.3, 0.2)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


def test_random_ftr_needs_pairing():
    with pytest.raises(ValueError):
        random_ftr(0, build_model(1, 0, 1), perturbation_library("v1_scalar", 1.8, 1.0))


def test_zero_residuals():
    model = build_model(1, 1, 1)
    V = zero_perturbation(4)
    assert ftr_residual(V, model, support_grid(V)) == 0.0
