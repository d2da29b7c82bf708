"""Solvers for the symmetric positive definite systems of both fields."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

ABS_FLOOR = 1e-30
# systems up to this size go to the sparse direct solver under method="auto"
AUTO_DIRECT_LIMIT = 400_000


@dataclass
class SolveReport:
    iterations: int
    residual: float
    method: str
    converged: bool = True
    history: list | None = None


class SolverError(RuntimeError):
    """Linear solve failure; ``report`` holds the last iterate's data."""

    def __init__(self, message: str, report: SolveReport):
        super().__init__(message)
        self.report = report


def check_spd_storage(A) -> sp.csr_matrix:
    """CSR copy of ``A`` with sorted, duplicate-free column indices."""
    A = sp.csr_matrix(A, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    A.sum_duplicates()
    A.sort_indices()
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")
    return A


def pcg(A, b, tol: float = 1e-10, max_iter: int | None = None, x0=None, keep_history: bool = False,
        precond=None):
    """Preconditioned conjugate gradients, Jacobi unless ``precond`` is given.

    Stops when ``||b - A x|| <= max(tol * ||b||, 1e-30)``.

    Parameters
    ----------
    precond : callable, optional
        Applies an SPD approximation of ``A^-1`` to a vector.
    """
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    if precond is None:
        diag = A.diagonal()
        if np.any(diag <= 0):
            raise SolverError("Jacobi preconditioner needs a positive diagonal",
                              SolveReport(0, np.inf, "cg", False))
        inv_d = 1.0 / diag

        def precond(r):
            return inv_d * r
    bnorm = np.linalg.norm(b)
    stop = max(tol * bnorm, ABS_FLOOR)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    history = [rnorm] if keep_history else None
    z = precond(r)
    p = z.copy()
    rz = r @ z
    it = 0
    while rnorm > stop and it < max_iter:
        Ap = A @ p
        pAp = p @ Ap
        if not pAp > 0:
            rel = rnorm / bnorm if bnorm else rnorm
            raise SolverError("matrix is not positive definite along a search direction",
                              SolveReport(it, rel, "cg", False, history))
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        it += 1
        if keep_history:
            history.append(rnorm)
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rel = rnorm / bnorm if bnorm else rnorm
    report = SolveReport(it, rel, "cg", rnorm <= stop, history)
    if not report.converged:
        raise SolverError(f"CG did not reach tolerance {tol:g} in {max_iter} iterations", report)
    return x, report


def factorize(A):
    """Sparse LU with a symmetric fill-reducing ordering and diagonal pivots."""
    return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                     options=dict(SymmetricMode=True))


def direct(A, b, tol: float = 1e-10, refine: int = 3, lu=None):
    """Sparse LU solve with a few steps of iterative refinement.

    Returns ``(x, relative residual, refinements)``.
    """
    lu = factorize(A) if lu is None else lu
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    r = b - A @ x
    res = np.linalg.norm(r) / bnorm
    steps = 0
    while res > tol and steps < refine and np.isfinite(res):
        x += lu.solve(r)
        r = b - A @ x
        res = np.linalg.norm(r) / bnorm
        steps += 1
    return x, res, steps


def solve_spd(A, b, tol: float = 1e-10, max_iter: int | None = None, method: str = "cg", x0=None):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Parameters
    ----------
    method : {"cg", "direct", "auto"}
        Jacobi-preconditioned CG, sparse direct, or direct below
        ``AUTO_DIRECT_LIMIT`` unknowns and CG above.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side has non-finite entries")
    A = sp.csr_matrix(A)
    if A.shape != (b.size, b.size):
        raise ValueError(f"shape mismatch: {A.shape} vs {b.size}")
    if not np.any(b):
        return np.zeros(b.size), SolveReport(0, 0.0, method)
    if method == "auto":
        method = "direct" if b.size <= AUTO_DIRECT_LIMIT else "cg"
    if method == "cg":
        return pcg(A, b, tol, max_iter, x0)
    if method == "direct":
        try:
            x, res, steps = direct(A, b, tol)
        except RuntimeError as exc:
            raise SolverError(f"direct solve failed: {exc}", SolveReport(0, np.inf, "direct", False)) from exc
        report = SolveReport(1 + steps, res, "direct", bool(res <= tol))
        if not report.converged:
            raise SolverError(f"direct solve residual {res:.3e} above tolerance {tol:g}", report)
        return x, report
    raise ValueError(f"unknown method {method!r}")


class ReusedFactorization:
    """Direct solver that keeps its last factorization.

    Later systems with the same sparsity pattern are solved by CG
    preconditioned with the stored factors. When that takes more than
    ``max_cg`` iterations the new matrix is factorized instead. Sequences of
    slowly changing matrices, such as successive stagger passes, then cost
    little more than a few triangular solves each.
    """

    def __init__(self, tol: float = 1e-10, max_cg: int = 25):
        self.tol = tol
        self.max_cg = max_cg
        self.lu = None
        self.factorizations = 0

    def solve(self, A, b):
        b = np.asarray(b, dtype=float)
        if not np.all(np.isfinite(b)):
            raise ValueError("right-hand side has non-finite entries")
        A = sp.csr_matrix(A)
        if not np.any(b):
            return np.zeros(b.size), SolveReport(0, 0.0, "direct")
        if self.lu is not None and self.lu.shape == A.shape:
            try:
                return pcg(A, b, self.tol, self.max_cg, precond=self.lu.solve)
            except SolverError:
                pass
        try:
            self.lu = factorize(A)
            self.factorizations += 1
            x, res, steps = direct(A, b, self.tol, lu=self.lu)
        except RuntimeError as exc:
            self.lu = None
            raise SolverError(f"direct solve failed: {exc}", SolveReport(0, np.inf, "direct", False)) from exc
        report = SolveReport(1 + steps, res, "direct", bool(res <= self.tol))
        if not report.converged:
            raise SolverError(f"direct solve residual {res:.3e} above tolerance {self.tol:g}", report)
        return x, report
