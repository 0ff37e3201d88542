import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parastab import CoefficientField, Grid, GridFunction, HypothesisError, build_basis, norm, sobolev_constants
from parastab.sturm_liouville import LIFT_NORM, assemble_operator, eigendecompose, inner, project


def test_eigenvalues_match_discrete_closed_form(basis400):
    # -D2 + 1 has eigenvalues 4/h^2 sin^2(n pi h / 2) + 1 exactly
    h = basis400.grid.h
    n = np.arange(1, 21)
    exact = 4.0 / h**2 * np.sin(n * np.pi * h / 2) ** 2 + 1.0
    np.testing.assert_allclose(basis400.lambdas[:20], exact, rtol=1e-11)


def test_eigenvalues_approach_continuum(basis400):
    n = np.arange(1, 11)
    rel = np.abs(basis400.lambdas[:10] - (n**2 * np.pi**2 + 1)) / (n**2 * np.pi**2 + 1)
    assert rel.max() < 1e-3


def test_eigenfunctions_orthonormal_and_oriented(basis400):
    phi = basis400.phi[:30]
    gram = basis400.grid.h * phi[:, 1:-1] @ phi[:, 1:-1].T
    assert np.max(np.abs(gram - np.eye(30))) < 1e-10
    assert np.all(phi[:, 0] == 0) and np.all(phi[:, -1] == 0)
    assert np.all(basis400.dphi0 > 0)
    # phi_n = sqrt(2) sin(n pi x) so phi_n'(0) = sqrt(2) n pi
    n = np.arange(1, 6)
    np.testing.assert_allclose(basis400.dphi0[:5], math.sqrt(2) * n * np.pi, rtol=1e-3)


def test_lambda_growth_band(basis400):
    n = np.arange(1, basis400.mode_count + 1)
    ratio = basis400.lambdas / n**2
    assert ratio.min() >= 0.5 * basis400.lambdas[0]
    assert ratio.max() <= 2 * (np.pi**2 + 1)


def test_resolution_guard(unit_coeffs):
    op = assemble_operator(unit_coeffs, Grid(40))
    with pytest.raises(ValueError, match="resolution limit"):
        eigendecompose(op, 11)
    assert eigendecompose(op, 39, resolution_guard=False).mode_count == 39


@pytest.mark.parametrize("a,b,msg", [(1.0, 1.0, "max b"), (-1.0, -1.0, "min a"), (1.0, 0.0, "max b")])
def test_hypothesis_violations_named(a, b, msg):
    with pytest.raises(HypothesisError, match=msg):
        build_basis(CoefficientField.constant(a, b), Grid(40))


def test_norms_of_sine():
    g = Grid(400)
    f = GridFunction.from_callable(g, lambda x: np.sin(np.pi * x))
    assert norm(f, "L2") == pytest.approx(math.sqrt(0.5), rel=1e-10)
    assert norm(f, "H1_0") == pytest.approx(np.pi / math.sqrt(2), rel=1e-5)
    assert norm(f, "Linf") == pytest.approx(1.0)
    lift = GridFunction.from_callable(g, lambda x: 1 - x)
    assert norm(lift, "H1") == pytest.approx(LIFT_NORM, rel=1e-5)
    with pytest.raises(ValueError):
        norm(lift, "H1_0")


def test_project_matches_coefficients(basis400):
    g = basis400.grid
    f = GridFunction.from_callable(g, lambda x: x * (1 - x) ** 2)
    c = basis400.coefficients(f, 5)
    assert c[2] == pytest.approx(project(f, basis400, 3), abs=1e-14)
    assert inner(f, f, g) >= np.sum(c**2)


def test_energy_parseval(basis400_full):
    g = basis400_full.grid
    f = GridFunction.from_callable(g, lambda x: np.sin(3 * x) * x * (1 - x))
    c = basis400_full.coefficients(f)
    assert basis400_full.energy(f) == pytest.approx(np.sum(basis400_full.lambdas * c**2), rel=1e-10)


def test_sobolev_constants(basis400, unit_coeffs):
    c = sobolev_constants(unit_coeffs, basis400)
    assert c.k1 == 1.0
    assert c.k2 == pytest.approx(math.sqrt(1 + 1 / np.pi**2))
    assert c.C0 == pytest.approx(2 * LIFT_NORM**2)


@settings(max_examples=25, deadline=None)
@given(a0=st.floats(0.5, 3.0), a1=st.floats(-0.4, 0.4), b0=st.floats(-5.0, -0.1), b1=st.floats(-0.09, 0.09))
def test_polynomial_coefficients_give_simple_increasing_spectrum(a0, a1, b0, b1):
    coeffs = CoefficientField.polynomial([a0, a1], [b0, b1])
    basis = build_basis(coeffs, Grid(80))
    assert np.all(np.diff(basis.lambdas) > 0)
    assert basis.lambdas[0] >= np.pi**2 * min(a0, a0 + a1) * 0.99
    gram = basis.grid.h * basis.phi[:, 1:-1] @ basis.phi[:, 1:-1].T
    assert np.max(np.abs(gram - np.eye(basis.mode_count))) < 1e-9


def test_project_examples(basis400):
    g = basis400.grid
    phi2 = basis400.eigenfunction(2)
    assert project(phi2, basis400, 2) == pytest.approx(1.0, abs=1e-8)
    assert abs(project(phi2, basis400, 1)) < 1e-6
    lift = GridFunction.from_callable(g, lambda x: 1 - x)
    assert project(lift, basis400, 1) == pytest.approx(math.sqrt(2) / np.pi, rel=1e-4)
    with pytest.raises(IndexError):
        project(lift, basis400, 0)


def test_shift_structure_and_symmetry():
    g = Grid(50)
    A0 = assemble_operator(CoefficientField.constant(1.0, -1e-300), g).toarray()
    A1 = assemble_operator(CoefficientField.constant(1.0, -1.0), g).toarray()
    np.testing.assert_allclose(A1 - A0, np.eye(g.M - 1), atol=1e-9)
    var = assemble_operator(CoefficientField.polynomial([1.0, 1.0], [-1.0]), g).toarray()
    assert np.array_equal(var, var.T)


def test_eigenvalue_refinement_second_order(unit_coeffs):
    lam = [build_basis(unit_coeffs, Grid(M), 10).lambdas for M in (100, 200, 400)]
    ratio = (lam[0] - lam[1]) / (lam[1] - lam[2])
    assert np.all((ratio >= 3.5) & (ratio <= 4.5))


def test_rayleigh_consistency(basis400):
    op = basis400.operator
    for n in range(1, 11):
        phi = basis400.eigenfunction(n)
        assert abs(op.energy(phi) - basis400.lambdas[n - 1]) / basis400.lambdas[n - 1] < 1e-4


def test_random_poincare_and_norm_equivalence(basis400_full, unit_coeffs):
    from parastab.nonlinearity import random_h10_field

    g = basis400_full.grid
    c = sobolev_constants(unit_coeffs, basis400_full)
    rng = np.random.default_rng(11)
    for _ in range(100):
        f = GridFunction(g, random_h10_field(g, rng))
        semi, l2 = norm(f, "H1_0"), norm(f, "L2")
        assert semi**2 >= np.pi**2 * l2**2 * (1 - 1e-4)
        coef = basis400_full.coefficients(f)
        energy = math.sqrt(np.sum(basis400_full.lambdas * coef**2))
        assert c.k1 * semi <= energy * (1 + 1e-12)
        assert energy <= c.k2 * semi * (1 + 1e-2)


def test_zero_norms():
    z = GridFunction(Grid(20), np.zeros(21))
    assert all(norm(z, k) == 0 for k in ("L2", "H1_0", "Linf", "H1"))
