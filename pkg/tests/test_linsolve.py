import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from phasefrac.linsolve import ReusedFactorization, SolverError, check_spd_storage, pcg, solve_spd


def random_spd(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    return A.T @ A + np.eye(n)


def laplacian(n):
    return sp.diags([-np.ones(n - 1), 2.0 * np.ones(n) + 1e-3, -np.ones(n - 1)], [-1, 0, 1], format="csr")


def test_identity_one_iteration():
    b = np.arange(1.0, 6.0)
    x, rep = solve_spd(sp.eye(5, format="csr"), b)
    np.testing.assert_allclose(x, b, rtol=1e-14)
    assert rep.iterations <= 1


def test_diagonal_inverse():
    n = 30
    x, _ = solve_spd(sp.diags(np.arange(1.0, n + 1)), np.ones(n))
    np.testing.assert_allclose(x, 1.0 / np.arange(1, n + 1), rtol=1e-12)


@pytest.mark.parametrize("method", ["cg", "direct", "auto"])
def test_random_spd_against_cholesky(method):
    A = random_spd(50, 0)
    b = np.random.default_rng(1).normal(size=50)
    oracle = sla.cho_solve(sla.cho_factor(A), b)
    x, rep = solve_spd(sp.csr_matrix(A), b, tol=1e-12, method=method)
    np.testing.assert_allclose(x, oracle, rtol=1e-8, atol=1e-8 * np.abs(oracle).max())
    assert rep.converged


def test_zero_rhs_short_circuits():
    x, rep = solve_spd(laplacian(10), np.zeros(10))
    assert not x.any() and rep.iterations == 0


def test_cg_residual_history_monotone():
    A = laplacian(200)
    b = np.random.default_rng(2).normal(size=200)
    _, rep = pcg(A, b, tol=1e-10, keep_history=True)
    h = np.array(rep.history)
    # energy-norm minimization; the 2-norm may wobble slightly
    assert np.all(h[1:] <= 1.1 * np.maximum.accumulate(h)[:-1])
    assert h[-1] <= 1e-10 * np.linalg.norm(b)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    A = sp.csr_matrix(random_spd(20, seed))
    b = rng.normal(size=20)
    p = rng.permutation(20)
    x, _ = solve_spd(A, b, tol=1e-13)
    xp, _ = solve_spd(A[p][:, p], b[p], tol=1e-13)
    np.testing.assert_allclose(xp, x[p], rtol=1e-10, atol=1e-10 * np.abs(x).max())


def test_not_positive_definite_raises():
    A = sp.diags([1.0, -1.0, 1.0], format="csr")
    with pytest.raises(SolverError):
        pcg(A, np.ones(3))
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(SolverError) as info:
        pcg(A, np.array([1.0, -1.0]))
    assert info.value.report is not None


def test_iteration_cap_reports_failure():
    A = laplacian(400)
    with pytest.raises(SolverError, match="did not reach"):
        pcg(A, np.ones(400), tol=1e-14, max_iter=3)


def test_input_checks():
    with pytest.raises(ValueError):
        solve_spd(laplacian(3), np.array([1.0, np.nan, 0]))
    with pytest.raises(ValueError):
        solve_spd(laplacian(3), np.ones(4))
    with pytest.raises(ValueError):
        solve_spd(laplacian(3), np.ones(3), method="qr")
    with pytest.raises(ValueError):
        check_spd_storage(sp.csr_matrix(np.ones((2, 3))))


def test_storage_is_sorted_without_duplicates():
    A = sp.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    S = check_spd_storage(A)
    assert S.has_sorted_indices and S.nnz == 2 and S[0, 1] == 3.0


def test_reused_factorization_refactors_only_when_needed():
    A = laplacian(300)
    rng = np.random.default_rng(3)
    solver = ReusedFactorization(tol=1e-12)
    b = rng.normal(size=300)
    x, rep = solver.solve(A, b)
    assert solver.factorizations == 1 and rep.method == "direct"
    # a small change is handled by the stored factors
    A2 = A + sp.diags(1e-3 * rng.uniform(size=300))
    x2, rep2 = solver.solve(A2, b)
    assert solver.factorizations == 1 and rep2.method == "cg"
    np.testing.assert_allclose(A2 @ x2, b, atol=1e-10 * np.linalg.norm(b))
    # a large change triggers a new factorization
    A3 = A + sp.diags(rng.uniform(1, 100, size=300))
    x3, _ = solver.solve(A3, b)
    assert solver.factorizations == 2
    np.testing.assert_allclose(A3 @ x3, b, atol=1e-10 * np.linalg.norm(b))
