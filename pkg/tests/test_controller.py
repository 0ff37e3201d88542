import numpy as np
import pytest
import scipy.signal
from hypothesis import given, settings
from hypothesis import strategies as st

from parastab import UncontrollableError, build_reduced_system, kalman_controllability, modal_coefficients, place_poles
from parastab.controller import ackermann, scalar_gain, select_mode_count, vandermonde


@pytest.fixture(scope="module")
def modal15(basis400, unit_coeffs):
    return modal_coefficients(basis400, unit_coeffs, 15.0)


def test_first_modal_coefficients(modal15):
    # b_1 = -<1-x, sqrt2 sin(pi x)> = -sqrt2/pi; a_n = (q-1)(-b_n) for a = 1, b = -1
    assert modal15.b_coeffs[0] == pytest.approx(-np.sqrt(2) / np.pi, rel=1e-4)
    assert modal15.a_coeffs[0] == pytest.approx(14 * np.sqrt(2) / np.pi, rel=1e-4)


def test_trace_identity(modal15):
    assert modal15.identity_defect[:10].max() < 1e-2
    # positive sign under the phi_n'(0) > 0 orientation
    assert np.all(modal15.trace[:10] > 0)


def test_mode_count_selection(basis400):
    assert select_mode_count(basis400, 15.0, 1.0) == 2
    assert select_mode_count(basis400, 1.0, 1.0) == 2
    assert select_mode_count(basis400, 100.0, 1.0) == 3


def test_kalman_closed_form(modal15, basis400):
    rs = build_reduced_system(modal15, basis400, 15.0, 1.0, 3)
    rep = kalman_controllability(rs.A0, rs.B0, rs)
    assert rep.rank == 4
    assert rep.relative_gap < 1e-2
    assert vandermonde([1.0, 2.0, 4.0]) == pytest.approx(1 * 3 * 2)


def test_shifted_poles_against_scipy(modal15, basis400):
    rs = build_reduced_system(modal15, basis400, 15.0, 1.0, 2)
    d = place_poles(rs, "shifted")
    np.testing.assert_allclose(d.closed_loop_poles(), [-5.0, -4.0, -3.0], rtol=1e-8)
    oracle = scipy.signal.place_poles(rs.A0, rs.B0[:, None], [-3.0, -4.0, -5.0]).gain_matrix.ravel()
    np.testing.assert_allclose(d.K, -oracle, rtol=1e-6)


def test_preserve_keeps_fast_modes(modal15, basis400):
    rs = build_reduced_system(modal15, basis400, 15.0, 1.0, 2)
    d = place_poles(rs, "preserve")
    assert d.K[2] == 0.0
    poles = d.closed_loop_poles()
    assert np.any(np.isclose(poles, 15.0 - basis400.lambdas[1]))
    assert poles.max() < -2.0


def test_scalar_gain():
    assert scalar_gain([1.0, 2.0, 3.0], [0.5, -1.0]) == pytest.approx(1 + 1 - 3)


def test_ill_conditioned_placement_rejected(basis400, unit_coeffs):
    modal = modal_coefficients(basis400, unit_coeffs, 15.0)
    rs = build_reduced_system(modal, basis400, 15.0, 1.0, 20)
    with pytest.raises(UncontrollableError):
        place_poles(rs, "shifted")


@settings(max_examples=40, deadline=None)
@given(poles=st.lists(st.floats(-30.0, -0.5), min_size=3, max_size=3, unique=True).filter(
    lambda p: min(abs(x - y) for i, x in enumerate(p) for y in p[i + 1:]) > 0.3))
def test_ackermann_places_arbitrary_real_poles(poles, modal15, basis400):
    rs = build_reduced_system(modal15, basis400, 15.0, 1.0, 2)
    K = ackermann(rs.A0, rs.B0, poles)
    got = np.sort(np.linalg.eigvals(rs.A0 + np.outer(rs.B0, K)).real)
    np.testing.assert_allclose(got, np.sort(poles), rtol=1e-6, atol=1e-8)


def test_small_kalman_examples():
    rep = kalman_controllability(np.zeros((2, 2)), np.array([1.0, 0.0]))
    assert rep.rank == 1 and rep.det == 0
    assert kalman_controllability(np.array([[0.0]]), np.array([1.0])).det == 1.0


def test_hand_placements():
    np.testing.assert_allclose(ackermann(np.array([[2.0]]), np.array([1.0]), [-3.0]), [-5.0])
    A = np.array([[0.0, 0.0], [1.0, -1.0]])
    B = np.array([1.0, 0.0])
    K = ackermann(A, B, [-2.0, -3.0])
    np.testing.assert_allclose(np.sort(np.linalg.eigvals(A + np.outer(B, K)).real), [-3.0, -2.0], atol=1e-8)


def test_lifting_profile_norms():
    from parastab import Grid, norm
    from parastab.controller import lifting_profile
    from parastab.sturm_liouville import LIFT_NORM

    p = lifting_profile(Grid(400))
    assert p.values[0] == 1.0 and p.values[-1] == 0.0
    assert norm(p, "L2") == pytest.approx(1 / np.sqrt(3), rel=1e-5)
    assert norm(p, "H1") == pytest.approx(LIFT_NORM, rel=1e-5)


def test_b_parseval_monotone(basis400_full, unit_coeffs):
    modal = modal_coefficients(basis400_full, unit_coeffs, 1.0, check_count=10)
    partial = np.cumsum(modal.b_coeffs**2)
    assert np.all(np.diff(partial) > 0)
    assert partial[-1] <= 1 / 3 + 1e-12
    # the complete discrete basis recovers the interior-node norm exactly; the
    # trapezoid end weight at x = 0 accounts for the remaining h/2
    g = basis400_full.grid
    interior = g.h * np.sum((1 - g.interior) ** 2)
    assert partial[-1] == pytest.approx(interior, rel=1e-12)
    assert 1 / 3 - partial[-1] == pytest.approx(g.h / 2, rel=1e-2)


def test_gain_invariant_under_eigenfunction_sign_flip(modal15, basis400):
    rs = build_reduced_system(modal15, basis400, 15.0, 1.0, 2)
    D = np.diag([1.0, -1.0, -1.0])
    flipped = type(rs)(D @ rs.A0 @ D, D @ rs.B0, rs.N, rs.q, rs.delta, rs.lambdas, -rs.dphi0, rs.a0)
    a = place_poles(rs, "shifted").closed_loop_poles()
    b = place_poles(flipped, "shifted").closed_loop_poles()
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_pipeline_gain_reproducible(modal15, basis400):
    rs = build_reduced_system(modal15, basis400, 15.0, 1.0, 2)
    k1 = place_poles(rs).k_scalar
    assert np.isfinite(k1) and place_poles(rs).k_scalar == k1
    assert scalar_gain([0.0, 1.0, 0.0], [-0.45016, 0.1]) == pytest.approx(-0.45016)


def test_mode_count_needs_resolved_witness(unit_coeffs):
    from parastab import Grid, build_basis

    small = build_basis(unit_coeffs, Grid(40), 3)
    with pytest.raises(ValueError, match="basis too small"):
        select_mode_count(small, 200.0, 1.0)
    assert select_mode_count(small, -5.0, 1.0) == 2
