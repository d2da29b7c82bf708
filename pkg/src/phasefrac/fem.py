"""Isoparametric Q4/HEX8 kinematics and global assembly for both fields.

Element matrices are computed in batches and scattered into a fixed CSR
pattern with ``np.bincount``, which sums in element order. Serial assembly is
therefore bitwise reproducible, and element batches can be computed in
parallel without changing a single bit of the result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import constitutive as cm
from .mesh import HEX8_CORNERS, Q4_CORNERS, Mesh


class ElementQualityError(ValueError):
    """Degenerate or inverted element."""


class AssemblyError(RuntimeError):
    """Non-finite contribution during assembly."""


class ConstraintConflictError(ValueError):
    """A degree of freedom was prescribed twice with different values."""


# ---------------------------------------------------------------------------
# Reference element
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss(cls, dimension: int, order: int = 2) -> "QuadratureRule":
        """Tensor-product Gauss-Legendre rule, x index running fastest."""
        x, w = np.polynomial.legendre.leggauss(order)
        grids = np.meshgrid(*([x] * dimension), indexing="ij")
        wgrids = np.meshgrid(*([w] * dimension), indexing="ij")
        pts = np.stack([g.ravel(order="F") for g in grids], axis=1)
        wts = np.prod(np.stack([g.ravel(order="F") for g in wgrids], axis=1), axis=1)
        return cls(pts, wts)


def _corners(kind):
    if kind in ("Q4", 2):
        return Q4_CORNERS
    if kind in ("HEX8", 3):
        return HEX8_CORNERS
    raise ValueError(f"unknown element kind {kind!r}")


def shape_functions(kind, xi):
    """Bilinear/trilinear shape values and reference gradients.

    Parameters
    ----------
    kind : {"Q4", "HEX8"}
    xi : array_like, shape (dim,) or (n, dim)
        Reference coordinates in [-1, 1]^dim.

    Returns
    -------
    N : ndarray, shape (..., nen)
    dN : ndarray, shape (..., nen, dim)
    """
    c = _corners(kind)
    xi = np.asarray(xi, dtype=float)
    dim = c.shape[1]
    if xi.shape[-1] != dim:
        raise ValueError(f"{kind} needs {dim} reference coordinates")
    factors = 0.5 * (1.0 + xi[..., None, :] * c)  # (..., nen, dim)
    N = np.prod(factors, axis=-1)
    dN = np.empty(factors.shape)
    for d in range(dim):
        others = np.prod(np.delete(factors, d, axis=-1), axis=-1)
        dN[..., d] = 0.5 * c[:, d] * others
    return N, dN


@dataclass
class ShapeEval:
    """Shape values, physical gradients and Jacobian determinant."""

    N: np.ndarray
    dNdx: np.ndarray
    detJ: np.ndarray


def evaluate_shape(kind, xi, coords) -> ShapeEval:
    """Shape functions of one element with node coordinates ``coords``."""
    N, dN = shape_functions(kind, xi)
    coords = np.asarray(coords, dtype=float)
    J = np.einsum("...aj,ai->...ij", dN, coords)
    detJ = np.linalg.det(J)
    if np.any(~(detJ > 0)):
        raise ElementQualityError("non-positive Jacobian determinant")
    dNdx = np.einsum("...aj,...ji->...ai", dN, np.linalg.inv(J))
    return ShapeEval(N, dNdx, detJ)


def b_matrices(shape: ShapeEval):
    """Kinematic matrices at the evaluated point(s).

    ``B_u`` maps element displacements ``[u1x, u1y, (u1z), u2x, ...]`` to the
    engineering-shear Voigt strain and ``B_phi`` maps nodal phase values to
    the gradient.
    """
    if np.any(~(np.asarray(shape.detJ) > 0)):
        raise ElementQualityError("non-positive Jacobian determinant")
    dNdx = np.asarray(shape.dNdx)
    return _b_u(dNdx), np.swapaxes(dNdx, -1, -2)


def _b_u(dNdx):
    nen, dim = dNdx.shape[-2:]
    pairs = cm.VOIGT_PAIRS[dim]
    B = np.zeros(dNdx.shape[:-2] + (len(pairs), nen * dim))
    for slot, (i, j) in enumerate(pairs):
        if i == j:
            B[..., slot, i::dim] = dNdx[..., :, i]
        else:
            B[..., slot, i::dim] = dNdx[..., :, j]
            B[..., slot, j::dim] = dNdx[..., :, i]
    return B


# ---------------------------------------------------------------------------
# Degrees of freedom and constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DofMap:
    """Displacement dofs are ``node * dim + component``; phase dofs are node
    ids."""

    n_nodes: int
    dimension: int

    @property
    def n_u(self) -> int:
        return self.n_nodes * self.dimension

    @property
    def n_phi(self) -> int:
        return self.n_nodes

    def u_dofs(self, nodes, component: int) -> np.ndarray:
        if not 0 <= component < self.dimension:
            raise ValueError(f"component {component} out of range")
        return np.asarray(nodes, dtype=np.int64) * self.dimension + component

    def element_dofs(self, elements) -> np.ndarray:
        e = np.asarray(elements, dtype=np.int64)
        d = self.dimension
        return (e[..., :, None] * d + np.arange(d)).reshape(e.shape[:-1] + (-1,))


class Constraints:
    """Registry of prescribed dof values.

    Prescribing a dof twice is accepted only when both values agree.
    """

    def __init__(self, n_dofs: int):
        self.n_dofs = n_dofs
        self._values: dict[int, float] = {}

    def add(self, dofs, values) -> "Constraints":
        dofs = np.atleast_1d(np.asarray(dofs, dtype=np.int64))
        values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
        if dofs.size and (dofs.min() < 0 or dofs.max() >= self.n_dofs):
            raise IndexError("constrained dof out of range")
        for d, v in zip(dofs.tolist(), values.tolist()):
            old = self._values.get(d)
            if old is not None and old != v:
                raise ConstraintConflictError(f"dof {d} prescribed as both {old!r} and {v!r}")
            self._values[d] = v
        return self

    @property
    def dofs(self) -> np.ndarray:
        return np.array(sorted(self._values), dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([self._values[d] for d in sorted(self._values)], dtype=float)

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dofs] = False
        return mask

    def __len__(self):
        return len(self._values)

    def full_vector(self, base=None) -> np.ndarray:
        """Vector with prescribed values on constrained dofs."""
        x = np.zeros(self.n_dofs) if base is None else np.array(base, dtype=float)
        x[self.dofs] = self.values
        return x


def apply_dirichlet(K, F, constraints: Constraints):
    """Symmetric elimination of prescribed dofs.

    Rows and columns of constrained dofs are zeroed, their diagonal set to
    one and the known column contributions moved to the right-hand side.
    ``K`` itself is left untouched for reaction recovery.
    """
    K = sp.csr_matrix(K)
    n = K.shape[0]
    F = np.asarray(F, dtype=float)
    dofs, values = constraints.dofs, constraints.values
    fixed = np.zeros(n, dtype=bool)
    fixed[dofs] = True
    g = np.zeros(n)
    g[dofs] = values
    rhs = F - K @ g
    rhs[dofs] = values
    rows = np.repeat(np.arange(n), np.diff(K.indptr))
    data = K.data.copy()
    data[fixed[rows] | fixed[K.indices]] = 0.0
    diag = (rows == K.indices) & fixed[rows]
    data[diag] = 1.0
    out = sp.csr_matrix((data, K.indices.copy(), K.indptr.copy()), shape=K.shape)
    missing = np.setdiff1d(dofs, rows[diag])
    if missing.size:
        out = out + sp.csr_matrix((np.ones(missing.size), (missing, missing)), shape=K.shape)
    return out, rhs


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

class _Scatter:
    """Fixed CSR pattern for element matrices with given dof connectivity."""

    def __init__(self, edofs: np.ndarray, n: int):
        ne, m = edofs.shape
        rows = np.repeat(edofs, m, axis=1).ravel()
        cols = np.tile(edofs, (1, m)).ravel()
        keys = rows * n + cols
        uniq, self.slot = np.unique(keys, return_inverse=True)
        self.slot = self.slot.ravel()
        self.indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.n = n
        self.nnz = uniq.size
        self.edofs = edofs

    def matrix(self, Ke: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.slot, weights=Ke.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def vector(self, fe: np.ndarray) -> np.ndarray:
        return np.bincount(self.edofs.ravel(), weights=fe.ravel(), minlength=self.n)


class Discretization:
    """Precomputed quadrature data of a mesh.

    Attributes
    ----------
    N : (nq, nen) shape values at the quadrature points
    dNdx : (ne, nq, nen, dim) physical gradients
    dV : (ne, nq) quadrature weight times Jacobian determinant
    B_u : (ne, nq, nv, nen*dim) displacement kinematic matrices
    qp_coords : (ne, nq, dim)
    """

    def __init__(self, mesh: Mesh, order: int = 2, threads: int = 1):
        self.mesh = mesh
        self.dim = mesh.dimension
        self.kind = mesh.kind
        self.rule = QuadratureRule.gauss(self.dim, order)
        self.dofmap = DofMap(mesh.n_nodes, self.dim)
        self.threads = max(1, int(threads))
        N, dN = shape_functions(self.kind, self.rule.points)
        self.N = N
        X = mesh.nodes[mesh.elements]
        J = np.einsum("qaj,eai->eqij", dN, X)
        detJ = np.linalg.det(J)
        bad = np.flatnonzero(np.any(~(detJ > 0), axis=1))
        if bad.size:
            raise ElementQualityError(f"element {int(bad[0])} has a non-positive Jacobian determinant")
        invJ = np.linalg.inv(J)
        self.dNdx = np.einsum("qaj,eqji->eqai", dN, invJ)
        self.dV = detJ * self.rule.weights
        self.B_u = _b_u(self.dNdx)
        self.qp_coords = np.einsum("qa,eai->eqi", N, X)
        self.ne, self.nq = self.dV.shape
        self.nen = mesh.elements.shape[1]
        self.nv = self.B_u.shape[2]
        self._setup_uniform(X)
        self.edofs_u = self.dofmap.element_dofs(mesh.elements)
        self.scatter_u = _Scatter(self.edofs_u, self.dofmap.n_u)
        self.scatter_phi = _Scatter(mesh.elements, self.dofmap.n_phi)
        # constant parts of the phase-field operator
        self._grad_phi = np.einsum("eqai,eqbi,eq->eab", self.dNdx, self.dNdx, self.dV)
        self._NN = N[:, :, None] * N[:, None, :]
        self._mass_scalar = np.einsum("qab,eq->eab", self._NN, self.dV)

    def _setup_uniform(self, X):
        """Detect grids whose elements are translates of one another and
        precompute the linear maps from per-qp tangent and stress to the
        element stiffness and force."""
        rel = X - X[:, :1, :]
        scale = np.abs(rel).max()
        self.uniform = bool(np.all(np.abs(rel - rel[0]) <= 1e-12 * scale))
        if not self.uniform:
            return
        B0 = self.B_u[0]
        dV0 = self.dV[0]
        nq, nv, nd = B0.shape
        T = np.einsum("q,qvi,qwj->qvwij", dV0, B0, B0)
        self._K_map = T.reshape(nq * nv * nv, nd * nd)
        self._F_map = (dV0[:, None, None] * B0).reshape(nq * nv, nd)

    @property
    def volume(self) -> float:
        return float(self.dV.sum())

    # -- field evaluation ----------------------------------------------------

    def strains(self, u) -> np.ndarray:
        """Voigt strains (ne, nq, nv) of a displacement vector."""
        ue = np.asarray(u)[self.edofs_u]
        return np.einsum("eqvi,ei->eqv", self.B_u, ue)

    def at_qp(self, nodal) -> np.ndarray:
        """Interpolate a nodal scalar to the quadrature points (ne, nq)."""
        return np.asarray(nodal)[self.mesh.elements] @ self.N.T

    def gradient(self, nodal) -> np.ndarray:
        """Gradient (ne, nq, dim) of a nodal scalar."""
        return np.einsum("eqai,ea->eqi", self.dNdx, np.asarray(nodal)[self.mesh.elements])

    def integrate(self, qp_values) -> float:
        return float(np.sum(qp_values * self.dV))

    # -- assembly ------------------------------------------------------------

    def _chunks(self):
        bounds = np.linspace(0, self.ne, min(self.threads, self.ne) + 1).astype(int)
        return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]

    def _map(self, fn, *arrays):
        """Apply ``fn`` to element batches, optionally on worker threads."""
        if self.threads == 1:
            return fn(*arrays)
        parts = self._chunks()
        with ThreadPoolExecutor(self.threads) as pool:
            res = list(pool.map(lambda s: fn(*(a[s] for a in arrays)), parts))
        if isinstance(res[0], tuple):
            return tuple(np.concatenate(r) for r in zip(*res))
        return np.concatenate(res)

    def stiffness_u(self, D: np.ndarray, stress: np.ndarray):
        """Element stiffness and internal force from per-qp tangent and
        stress, scattered to global ``(K, F_int)``."""

        if self.uniform:
            nd = self._F_map.shape[1]
            Ke = (D.reshape(self.ne, -1) @ self._K_map).reshape(self.ne, nd, nd)
            Ke = 0.5 * (Ke + np.swapaxes(Ke, 1, 2))
            fe = stress.reshape(self.ne, -1) @ self._F_map
            _check_finite(Ke, fe)
            return self.scatter_u.matrix(Ke), self.scatter_u.vector(fe)

        def element_terms(B, Dq, sq, dV):
            DB = np.matmul(Dq, B)
            Ke = np.einsum("eqvi,eqvj,eq->eij", B, DB, dV, optimize=True)
            Ke = 0.5 * (Ke + np.swapaxes(Ke, 1, 2))
            fe = np.einsum("eqvi,eqv,eq->ei", B, sq, dV)
            return Ke, fe

        Ke, fe = self._map(element_terms, self.B_u, D, stress, self.dV)
        _check_finite(Ke, fe)
        return self.scatter_u.matrix(Ke), self.scatter_u.vector(fe)

    def internal_force(self, stress: np.ndarray) -> np.ndarray:
        if self.uniform:
            fe = stress.reshape(self.ne, -1) @ self._F_map
        else:
            fe = np.einsum("eqvi,eqv,eq->ei", self.B_u, stress, self.dV)
        _check_finite(fe)
        return self.scatter_u.vector(fe)

    def mass_u(self, density: float, lumped: bool = False) -> sp.csr_matrix:
        """Consistent (default) or row-sum lumped mass matrix."""
        d = self.dim
        Ms = density * self._mass_scalar
        if lumped:
            rowsum = Ms.sum(axis=2)
            Ms = np.zeros_like(Ms)
            Ms[:, np.arange(self.nen), np.arange(self.nen)] = rowsum
        Me = np.zeros((self.ne, self.nen * d, self.nen * d))
        for c in range(d):
            Me[:, c::d, c::d] = Ms
        return self.scatter_u.matrix(Me)

    def system_phi(self, H: np.ndarray, params: cm.FractureParams, lumped: bool = True):
        """Phase-field operator and right-hand side for a history field.

        With ``lumped`` the reaction term is row-sum lumped. On grids whose
        Laplacian is an M-matrix this keeps the solution inside [0, 1],
        whereas the consistent form can overshoot 1 where ``H`` is large.
        """
        H = np.asarray(H, dtype=float)
        if H.shape != (self.ne, self.nq):
            raise ValueError(f"history must have shape {(self.ne, self.nq)}")
        if np.any(H < 0):
            e = int(np.flatnonzero(np.any(H < 0, axis=1))[0])
            raise ValueError(f"negative history value in element {e}")
        drive = 2.0 * (1.0 - params.k) * H
        coef = (params.G_c / params.l0 + drive) * self.dV
        if lumped:
            Ke = params.G_c * params.l0 * self._grad_phi
            idx = np.arange(self.nen)
            Ke[:, idx, idx] += coef @ self.N
        else:
            Ke = params.G_c * params.l0 * self._grad_phi + np.einsum("eq,qab->eab", coef, self._NN)
        fe = (drive * self.dV) @ self.N
        _check_finite(Ke, fe)
        return self.scatter_phi.matrix(Ke), self.scatter_phi.vector(fe)


def _check_finite(*arrays):
    for a in arrays:
        bad = ~np.isfinite(a.reshape(a.shape[0], -1)).all(axis=1)
        if bad.any():
            raise AssemblyError(f"non-finite contribution from element {int(np.flatnonzero(bad)[0])}")


@dataclass
class SystemU:
    K: sp.csr_matrix
    F_int: np.ndarray
    M: sp.csr_matrix | None
    split: cm.SpectralSplit
    stress: np.ndarray
    phi_qp: np.ndarray


def material_response(disc: Discretization, u, phi, consts, params, split=None):
    """Per-qp split, degraded stress and tangent for nodal ``u`` and ``phi``.

    Arrays come back with shape (ne, nq, ...).
    """
    shape = (disc.ne, disc.nq)
    if split is None:
        split = cm.spectral_split(disc.strains(u).reshape(-1, disc.nv))
    phi_qp = disc.at_qp(phi).ravel()
    sig = cm.stress(split, phi_qp, consts, params).reshape(shape + (disc.nv,))
    D = cm.tangent(split, phi_qp, consts, params).reshape(shape + (disc.nv, disc.nv))
    return split, sig, D, phi_qp.reshape(shape)


def assemble_system_u(disc: Discretization, u, phi, consts: cm.ElasticConstants, params: cm.FractureParams,
                      split=None, with_mass: bool = False, lumped: bool = False) -> SystemU:
    """Tangent stiffness, internal force and optionally the mass matrix."""
    split, sig, D, phi_qp = material_response(disc, u, phi, consts, params, split)
    K, F = disc.stiffness_u(D, sig)
    M = disc.mass_u(consts.density, lumped) if with_mass else None
    return SystemU(K, F, M, split, sig, phi_qp)


def assemble_system_phi(disc: Discretization, H, params: cm.FractureParams, lumped: bool = True):
    """Phase-field matrix and right-hand side ``(K_phi, F_phi)``."""
    return disc.system_phi(H, params, lumped)
