import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from gramint.bt import (ExactModel, ReducedModel, balanced_truncation, choose_order, error_bound,
                        hankel_svd, projection_matrices, reduce, svd_of_cross)
from gramint.exceptions import ConstructionError, DegenerateSystemError, IllConditionedError
from gramint.lyap import controllability_factor, observability_factor, solve_lyapunov_dense
from gramint.system import AssembledSystem, assemble

from oracles import hankel_values_dense, random_stable_system


def test_choose_order_examples():
    assert choose_order([1.0, 1e-3, 1e-9], 1e-8) == 2
    assert choose_order([1.0], 0.5) == 1
    assert choose_order([1.0, 0.5, 0.1], 1e-3) == 3
    with pytest.raises(ConstructionError):
        choose_order([], 0.1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(1e-12, 1.0), min_size=1, max_size=30),
       st.floats(1e-10, 0.9), st.floats(1e-10, 0.9))
def test_choose_order_monotone_in_tol(values, t1, t2):
    s = np.sort(np.asarray(values))[::-1]
    lo, hi = sorted((t1, t2))
    assert choose_order(s, hi) <= choose_order(s, lo)


def test_error_bound_examples():
    assert error_bound([3.0, 2.0, 1.0], 1) == 6.0
    assert error_bound([3.0, 2.0, 1.0], 3) == 0.0


def test_unit_vector_factors():
    e1 = np.zeros((5, 1))
    e1[0] = 1
    hd = hankel_svd(e1, np.eye(5), e1)
    assert hd.singular_values.tolist() == [1.0]
    assert hd.U1.tolist() == [[1.0]] and hd.V1.tolist() == [[1.0]]


def test_hankel_values_match_dense_eigs(rng):
    X = rng.standard_normal((30, 7))
    Y = rng.standard_normal((30, 6))
    hd = hankel_svd(Y, np.eye(30), X)
    ref = hankel_values_dense(X @ X.T, Y @ Y.T, np.eye(30))[:6]
    np.testing.assert_allclose(hd.singular_values, ref, rtol=1e-10)
    M = Y.T @ X
    np.testing.assert_allclose(hd.U * hd.singular_values @ hd.V.T, M, atol=1e-12 * hd.singular_values[0])
    r = 4
    hd = hankel_svd(Y, np.eye(30), X, order=r)
    np.testing.assert_allclose(hd.U1.T @ hd.U1, np.eye(r), atol=1e-12)
    np.testing.assert_allclose(hd.V1.T @ hd.V1, np.eye(r), atol=1e-12)
    assert np.all(np.diff(hd.singular_values) <= 0)


def test_sign_convention():
    rng = np.random.default_rng(5)
    hd = svd_of_cross(rng.standard_normal((6, 6)))
    for col in hd.U.T:
        assert col[np.nonzero(np.abs(col) > 1e-14)[0][0]] > 0


def test_degenerate_and_ill_conditioned():
    with pytest.raises(DegenerateSystemError):
        svd_of_cross(np.zeros((3, 3)))
    hd = svd_of_cross(np.diag([1.0, 1e-20]), order=2)
    with pytest.raises(IllConditionedError):
        projection_matrices(np.eye(2), np.eye(2), hd)


def test_exact_zero_trailing_value_dropped():
    hd = svd_of_cross(np.diag([2.0, 1.0, 0.0]), order=3)
    assert hd.r == 2


def test_scalar_system_biorthogonal():
    E, A, B, C = (np.array([[v]]) for v in (1.0, -1.0, 1.0, 1.0))
    asm = AssembledSystem(E, A, B, C, np.zeros(1))
    X = np.sqrt(solve_lyapunov_dense(E, A, B))
    Y = np.sqrt(solve_lyapunov_dense(E.T, A.T, C.T))
    hd = hankel_svd(Y, E, X)
    assert hd.singular_values[0] == pytest.approx(0.5)
    W, T = projection_matrices(Y, X, hd)
    assert (W.T @ E @ T)[0, 0] == pytest.approx(1.0, abs=1e-15)


def test_identity_projection_reproduces_fom(rng):
    E, A, B, C = random_stable_system(rng, 5)
    asm = AssembledSystem(E, A, B, C, np.zeros(1))
    rom = reduce(asm, np.eye(5), np.eye(5))
    for M, N in zip(rom.matrices(), (E, A, B, C)):
        assert np.array_equal(M, N)


def test_rom_dimensions_checked():
    with pytest.raises(ConstructionError):
        ReducedModel(np.eye(2), np.eye(3), np.ones((3, 1)), np.ones((1, 3)), np.ones(3))


@pytest.fixture(scope="module")
def heat_point(heat16):
    asm = assemble(heat16, (5.0, 7.0))
    return asm, controllability_factor(asm), observability_factor(asm)


def test_heat_biorthogonality_and_stability(heat_point):
    asm, X, Y = heat_point
    hd = hankel_svd(Y, asm.E, X, tol=1e-8)
    W, T = projection_matrices(Y, X, hd)
    assert np.abs(W.T @ (asm.E @ T) - np.eye(hd.r)).max() < 1e-8
    rom = balanced_truncation(asm, X, Y, tol=1e-8)
    assert rom.pencil_eigenvalues().real.max() < 0


def _rotated_pair(heat_point, tol):
    asm, X, Y = heat_point
    rng = np.random.default_rng(2)
    R = np.linalg.qr(rng.standard_normal((X.rank, X.rank)))[0]
    S = np.linalg.qr(rng.standard_normal((Y.rank, Y.rank)))[0]
    Xb, Yb = X.factor @ R, Y.factor @ S
    a = balanced_truncation(asm, X, Y, tol=tol)
    b = balanced_truncation(asm, Xb, Yb, tol=tol)
    # the sign convention acts in factor coordinates, so columns may flip
    Wa, _ = projection_matrices(Y, X, hankel_svd(Y, asm.E, X, tol=tol))
    Wb, _ = projection_matrices(Yb, Xb, hankel_svd(Yb, asm.E, Xb, tol=tol))
    D = np.diag(np.sign(np.sum(Wa * Wb, axis=0)))
    pairs = ((a.Er, D @ b.Er @ D), (a.Ar, D @ b.Ar @ D), (a.Br, D @ b.Br), (a.Cr, b.Cr @ D))
    return a, [np.abs(Ma - Mb).max() / np.abs(Ma).max() for Ma, Mb in pairs]


def test_rom_invariant_under_factor_rotation(heat_point):
    _, errs = _rotated_pair(heat_point, 1e-5)
    assert max(errs) <= 1e-10


def test_rotation_deviation_at_rounding_level(heat_point):
    # entries tied to sigma_r carry rounding of order eps * sigma_1 / sigma_r
    rom, errs = _rotated_pair(heat_point, 1e-8)
    s = rom.hankel_values
    floor = np.finfo(float).eps * s[0] / s[rom.order - 1]
    assert max(errs) <= 100 * floor


def test_balanced_realization(rng):
    E, A, B, C = random_stable_system(rng, 10, m=2, p=2)
    P = solve_lyapunov_dense(E, A, B)
    Q = solve_lyapunov_dense(E.T, A.T, C.T)
    X = scipy.linalg.cholesky(P, lower=True)
    Y = scipy.linalg.cholesky(Q, lower=True)
    asm = AssembledSystem(E, A, B, C, np.zeros(1))
    rom = balanced_truncation(asm, X, Y, order=6)
    s1 = rom.hankel_values[:6]
    Pr = solve_lyapunov_dense(rom.Er, rom.Ar, rom.Br)
    Qr = solve_lyapunov_dense(rom.Er.T, rom.Ar.T, rom.Cr.T)
    # Er = I, so the reduced Gramians are the plain ones
    np.testing.assert_allclose(rom.Er, np.eye(6), atol=1e-10)
    assert np.linalg.norm(Pr - np.diag(s1)) <= 1e-6 * s1[0]
    assert np.linalg.norm(Qr - np.diag(s1)) <= 1e-6 * s1[0]


def test_exact_model_timings(heat16):
    rom = ExactModel(heat16).reduce((2.0, 5.0))
    assert set(rom.timings) == {"lyapunov", "rom"}
    assert rom.method == "exact" and 1 <= rom.order < 30
