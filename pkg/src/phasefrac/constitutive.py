"""Pointwise material law: spectral strain split, energies, degraded stress
and the consistent tangent.

Strain vectors use Voigt order ``[xx, yy, xy]`` (2D plane strain) or
``[xx, yy, zz, xy, yz, xz]`` (3D) with engineering shear. Stress vectors use
the same order with tensor components, so ``D @ strain == stress`` holds
without extra factors. Every function accepts either a single Voigt vector or
a stack of them along the leading axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_PERTURBATION = 1.0e-9
DEFAULT_RESIDUAL_STIFFNESS = 1.0e-9

# Voigt slot -> tensor index pair
VOIGT_PAIRS = {
    2: ((0, 0), (1, 1), (0, 1)),
    3: ((0, 0), (1, 1), (2, 2), (0, 1), (1, 2), (0, 2)),
}
_NV_TO_DIM = {3: 2, 6: 3}
_EIG_TOL = 1.0e-12
_JACOBI_TOL = 1.0e-14
_JACOBI_MAX_SWEEPS = 60


@dataclass(frozen=True)
class ElasticConstants:
    """Isotropic linear elastic constants in SI units.

    ``density`` may be zero for quasi-static use.
    """

    youngs_modulus: float
    poisson_ratio: float
    density: float = 0.0

    def __post_init__(self):
        if not self.youngs_modulus > 0:
            raise ValueError("youngs_modulus must be positive")
        if not -1.0 < self.poisson_ratio < 0.5:
            raise ValueError("poisson_ratio must lie in (-1, 0.5)")
        if self.density < 0:
            raise ValueError("density must be non-negative")

    @classmethod
    def from_lame(cls, lame_lambda: float, lame_mu: float, density: float = 0.0):
        E = lame_mu * (3 * lame_lambda + 2 * lame_mu) / (lame_lambda + lame_mu)
        nu = lame_lambda / (2 * (lame_lambda + lame_mu))
        return cls(E, nu, density)

    @property
    def lame_lambda(self) -> float:
        return derive_lame(self.youngs_modulus, self.poisson_ratio)[0]

    @property
    def lame_mu(self) -> float:
        return derive_lame(self.youngs_modulus, self.poisson_ratio)[1]


@dataclass(frozen=True)
class FractureParams:
    """Griffith energy release rate, regularization length and residual
    stiffness of the degradation function."""

    G_c: float
    l0: float
    k: float = DEFAULT_RESIDUAL_STIFFNESS

    def __post_init__(self):
        if not self.G_c > 0:
            raise ValueError("G_c must be positive")
        if not self.l0 > 0:
            raise ValueError("l0 must be positive")
        if not 0 <= self.k < 1:
            raise ValueError("k must lie in [0, 1)")


@dataclass
class EnergyPair:
    psi_plus: np.ndarray
    psi_minus: np.ndarray


@dataclass
class SpectralSplit:
    """Principal decomposition of a (stack of) strain states.

    ``values`` holds the principal strains sorted descending and
    ``directions[..., :, a]`` the unit eigenvector of ``values[..., a]``.
    ``perturbed`` are the principal strains after the coincidence
    perturbation; they only feed the tangent, so ``tensile + compressive``
    reconstructs the input exactly.
    """

    dimension: int
    values: np.ndarray
    directions: np.ndarray
    tensile: np.ndarray
    compressive: np.ndarray
    perturbed: np.ndarray
    perturbation_applied: np.ndarray
    trace: np.ndarray
    single: bool = False

    def __len__(self):
        return self.values.shape[0]

    def _out(self, arr):
        return arr[0] if self.single else arr


def derive_lame(E: float, nu: float) -> tuple[float, float]:
    """Lame constants ``(lambda, mu)`` from Young's modulus and Poisson ratio."""
    if not E > 0:
        raise ValueError("Young's modulus must be positive")
    if not -1.0 < nu < 0.5:
        raise ValueError(f"Poisson ratio {nu} outside (-1, 0.5)")
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    return lam, mu


# ---------------------------------------------------------------------------
# Voigt helpers
# ---------------------------------------------------------------------------

def _as_stack(voigt):
    v = np.asarray(voigt, dtype=float)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    if v.shape[-1] not in _NV_TO_DIM:
        raise ValueError(f"Voigt vectors must have 3 or 6 components, got {v.shape[-1]}")
    return v, single


def strain_to_tensor(voigt) -> np.ndarray:
    """Engineering-shear Voigt strain(s) to symmetric tensor(s)."""
    v = np.asarray(voigt, dtype=float)
    dim = _NV_TO_DIM[v.shape[-1]]
    t = np.zeros(v.shape[:-1] + (dim, dim))
    for slot, (i, j) in enumerate(VOIGT_PAIRS[dim]):
        val = v[..., slot] if i == j else 0.5 * v[..., slot]
        t[..., i, j] = val
        t[..., j, i] = val
    return t


def tensor_to_strain(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    dim = t.shape[-1]
    out = np.empty(t.shape[:-2] + (len(VOIGT_PAIRS[dim]),))
    for slot, (i, j) in enumerate(VOIGT_PAIRS[dim]):
        out[..., slot] = t[..., i, j] if i == j else 2.0 * t[..., i, j]
    return out


def tensor_to_stress(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    dim = t.shape[-1]
    out = np.empty(t.shape[:-2] + (len(VOIGT_PAIRS[dim]),))
    for slot, (i, j) in enumerate(VOIGT_PAIRS[dim]):
        out[..., slot] = t[..., i, j]
    return out


def _voigt_dyad(a, b, dim):
    """Tensor-component Voigt vector of sym(a (x) b) for stacks of vectors."""
    out = np.empty(a.shape[:-1] + (len(VOIGT_PAIRS[dim]),))
    for slot, (i, j) in enumerate(VOIGT_PAIRS[dim]):
        out[..., slot] = 0.5 * (a[..., i] * b[..., j] + a[..., j] * b[..., i])
    return out


# ---------------------------------------------------------------------------
# Eigen-solvers
# ---------------------------------------------------------------------------

def _eig_sym2(t):
    a, b, c = t[:, 0, 0], t[:, 1, 1], t[:, 0, 1]
    mean = 0.5 * (a + b)
    rad = np.hypot(0.5 * (a - b), c)
    vals = np.stack([mean + rad, mean - rad], axis=1)
    theta = 0.5 * np.arctan2(2.0 * c, a - b)
    cs, sn = np.cos(theta), np.sin(theta)
    vecs = np.empty((t.shape[0], 2, 2))
    vecs[:, 0, 0], vecs[:, 1, 0] = cs, sn
    vecs[:, 0, 1], vecs[:, 1, 1] = -sn, cs
    return vals, vecs


def jacobi_eigh3(t, tol: float = _JACOBI_TOL, max_sweeps: int = _JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi eigen-decomposition of a stack of symmetric 3x3 matrices.

    Sweeps the pairs (0,1), (0,2), (1,2) in fixed order until the
    off-diagonal Frobenius norm drops below ``tol`` times the matrix norm.
    Returns eigenvalues sorted descending and the matching column
    eigenvectors.
    """
    A = np.array(t, dtype=float, copy=True)
    n = A.shape[0]
    V = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    scale = np.sqrt(np.einsum("nij,nij->n", A, A))
    thresh = tol * np.where(scale > 0, scale, 1.0)
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * (A[:, 0, 1] ** 2 + A[:, 0, 2] ** 2 + A[:, 1, 2] ** 2))
        active = off > thresh
        if not active.any():
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = A[:, p, q]
            rot = active & (apq != 0.0)
            if not rot.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                theta = (A[:, q, q] - A[:, p, p]) / (2.0 * apq)
                t_ = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t_ = np.where(theta == 0.0, 1.0, t_)
            t_ = np.where(rot & np.isfinite(t_), t_, 0.0)
            c = 1.0 / np.sqrt(t_ * t_ + 1.0)
            s = t_ * c
            J = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
            J[:, p, p] = c
            J[:, q, q] = c
            J[:, p, q] = s
            J[:, q, p] = -s
            A = np.matmul(np.swapaxes(J, 1, 2), np.matmul(A, J))
            V = np.matmul(V, J)
    else:
        raise RuntimeError("Jacobi eigen-solver did not converge")
    vals = np.stack([A[:, 0, 0], A[:, 1, 1], A[:, 2, 2]], axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=1)
    V = np.take_along_axis(V, order[:, None, :], axis=2)
    return vals, V


def _coincident(a, b):
    return np.abs(a - b) <= _EIG_TOL * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def _perturb(vals, norm, delta):
    """Separate coincident principal strains for the tangent evaluation."""
    p = vals.copy()
    applied = np.zeros(vals.shape[0], dtype=bool)
    shift = delta * np.maximum(1.0, norm)

    def bump(col, mask, sign):
        old = p[:, col]
        new = np.where(old == 0.0, old + sign * shift, old * (1.0 + sign * delta))
        p[:, col] = np.where(mask, new, old)

    c12 = _coincident(vals[:, 0], vals[:, 1])
    bump(0, c12, +1.0)
    applied |= c12
    if vals.shape[1] == 3:
        c23 = _coincident(vals[:, 1], vals[:, 2])
        bump(2, c23, -1.0)
        applied |= c23
    # multiplicative perturbation may still leave an exact tie in rare cases
    d = vals.shape[1]
    for a in range(d):
        for b in range(a + 1, d):
            tie = p[:, a] == p[:, b]
            if tie.any():
                p[:, a] = np.where(tie, p[:, a] + shift, p[:, a])
                applied |= tie
    return p, applied


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def spectral_split(strain, delta: float = DEFAULT_PERTURBATION) -> SpectralSplit:
    """Split strain(s) into tensile and compressive parts.

    Parameters
    ----------
    strain : array_like, shape (3,) | (6,) | (n, 3) | (n, 6)
        Voigt strain with engineering shear. 2D input is plane strain.
    delta : float
        Relative perturbation applied to coincident principal strains.
    """
    if not delta > 0:
        raise ValueError("perturbation delta must be positive")
    v, single = _as_stack(strain)
    if not np.all(np.isfinite(v)):
        raise ValueError("strain contains non-finite values")
    dim = _NV_TO_DIM[v.shape[-1]]
    t = strain_to_tensor(v)
    if dim == 2:
        vals, vecs = _eig_sym2(t)
    else:
        vals, vecs = jacobi_eigh3(t)
    norm = np.sqrt(np.einsum("nij,nij->n", t, t))
    pert, applied = _perturb(vals, norm, delta)

    pos = np.maximum(vals, 0.0)
    neg = np.minimum(vals, 0.0)
    vt = np.swapaxes(vecs, 1, 2)
    eps_plus = tensor_to_strain((vecs * pos[:, None, :]) @ vt)
    eps_minus = tensor_to_strain((vecs * neg[:, None, :]) @ vt)

    trace = np.trace(t, axis1=1, axis2=2)
    return SpectralSplit(dim, vals, vecs, eps_plus, eps_minus, pert, applied, trace, single)


def split_energies(split: SpectralSplit, lam: float, mu: float) -> EnergyPair:
    """Tensile and compressive elastic energy densities."""
    tr = split.trace
    vals = split.values
    psi_p = 0.5 * lam * np.maximum(tr, 0.0) ** 2 + mu * np.sum(np.maximum(vals, 0.0) ** 2, axis=1)
    psi_m = 0.5 * lam * np.minimum(tr, 0.0) ** 2 + mu * np.sum(np.minimum(vals, 0.0) ** 2, axis=1)
    return EnergyPair(split._out(psi_p), split._out(psi_m))


def degradation(phi, k: float = DEFAULT_RESIDUAL_STIFFNESS):
    """Stiffness degradation ``(1-k)(1-phi)^2 + k``."""
    phi = np.asarray(phi, dtype=float)
    g = (1.0 - k) * (1.0 - phi) ** 2 + k
    return g if g.ndim else float(g)


def _lame_of(consts):
    return consts.lame_lambda, consts.lame_mu


def _phi_column(phi, n):
    g = np.broadcast_to(np.asarray(phi, dtype=float), (n,))
    return g


def stress(split: SpectralSplit, phi, consts: ElasticConstants, params: FractureParams):
    """Degraded Cauchy stress in Voigt form (tensor components).

    For 2D the out-of-plane stress is not returned.
    """
    lam, mu = _lame_of(consts)
    n = len(split)
    g = degradation(_phi_column(phi, n), params.k)
    dim = split.dimension
    nv = len(VOIGT_PAIRS[dim])
    tr = split.trace
    tp, tm = np.maximum(tr, 0.0), np.minimum(tr, 0.0)
    sig = np.empty((n, nv))
    for slot, (i, j) in enumerate(VOIGT_PAIRS[dim]):
        if i == j:
            sig[:, slot] = g * (lam * tp + 2 * mu * split.tensile[:, slot]) + lam * tm + 2 * mu * split.compressive[:, slot]
        else:
            sig[:, slot] = g * mu * split.tensile[:, slot] + mu * split.compressive[:, slot]
    return split._out(sig)


def energy_density(split: SpectralSplit, phi, consts: ElasticConstants, params: FractureParams):
    """Degraded elastic energy density ``g psi+ + psi-``."""
    e = split_energies(split, consts.lame_lambda, consts.lame_mu)
    g = degradation(phi, params.k)
    return g * e.psi_plus + e.psi_minus


def projection_tangents(split: SpectralSplit):
    """Voigt matrices of d(eps+)/d(eps) and d(eps-)/d(eps).

    The tensile branch counts a zero principal strain as tensile so that
    the two projections always sum to the symmetric identity.
    """
    dim = split.dimension
    vecs = split.directions
    p = split.perturbed
    # P = sum_k c_k m_k m_k^T over the dyads of the principal frame
    cols, c_plus, c_minus = [], [], []
    for a in range(dim):
        cols.append(_voigt_dyad(vecs[:, :, a], vecs[:, :, a], dim))
        hp = (p[:, a] >= 0.0).astype(float)
        c_plus.append(hp)
        c_minus.append(1.0 - hp)
    for a in range(dim):
        for b in range(a + 1, dim):
            diff = p[:, a] - p[:, b]
            if np.any(diff == 0.0):
                raise RuntimeError("degenerate principal strains reached the tangent")
            cols.append(_voigt_dyad(vecs[:, :, a], vecs[:, :, b], dim))
            c_plus.append(2.0 * (np.maximum(p[:, a], 0) - np.maximum(p[:, b], 0)) / diff)
            c_minus.append(2.0 * (np.minimum(p[:, a], 0) - np.minimum(p[:, b], 0)) / diff)
    nv = len(VOIGT_PAIRS[dim])
    n = len(split)
    P_plus = np.zeros((n, nv, nv))
    P_minus = np.zeros((n, nv, nv))
    # entry loops over contiguous columns beat batched 3x3 matmuls here
    for m, cp, cn in zip(cols, c_plus, c_minus):
        mt = np.ascontiguousarray(m.T)
        for i in range(nv):
            wp, wn = cp * mt[i], cn * mt[i]
            for j in range(i, nv):
                P_plus[:, i, j] += wp * mt[j]
                P_minus[:, i, j] += wn * mt[j]
    iu, ju = np.triu_indices(nv, 1)
    P_plus[:, ju, iu] = P_plus[:, iu, ju]
    P_minus[:, ju, iu] = P_minus[:, iu, ju]
    return P_plus, P_minus


def tangent(split: SpectralSplit, phi, consts: ElasticConstants, params: FractureParams):
    """Consistent Voigt tangent ``d(stress)/d(strain)`` of the degraded law."""
    lam, mu = _lame_of(consts)
    n = len(split)
    g = degradation(_phi_column(phi, n), params.k)
    dim = split.dimension
    nv = len(VOIGT_PAIRS[dim])
    P_plus, P_minus = projection_tangents(split)
    # Heaviside of the trace: zero counts as tensile (isotropic limit at eps=0)
    h_t = (split.trace >= 0.0).astype(float)
    vol = lam * (g * h_t + (1.0 - h_t))
    J = np.zeros((nv, nv))
    J[:dim, :dim] = 1.0
    D = vol[:, None, None] * J + 2.0 * mu * (g[:, None, None] * P_plus + P_minus)
    return split._out(D)


def isotropic_matrix(consts: ElasticConstants, dimension: int) -> np.ndarray:
    """Undamaged Voigt elasticity matrix (plane strain in 2D)."""
    lam, mu = _lame_of(consts)
    nv = len(VOIGT_PAIRS[dimension])
    D = np.zeros((nv, nv))
    D[:dimension, :dimension] = lam
    D[np.arange(dimension), np.arange(dimension)] += 2 * mu
    D[np.arange(dimension, nv), np.arange(dimension, nv)] = mu
    return D


# ---------------------------------------------------------------------------
# 1D calibration and crack density
# ---------------------------------------------------------------------------

def critical_stress_1d(E: float, G_c: float, l0: float) -> float:
    """Peak stress of the homogeneous 1D bar, ``(9/16) sqrt(E G_c / (3 l0))``."""
    if min(E, G_c, l0) <= 0:
        raise ValueError("E, G_c and l0 must be positive")
    return 9.0 / 16.0 * np.sqrt(E * G_c / (3.0 * l0))


def length_scale_from_strength(E: float, G_c: float, sigma_cr: float) -> float:
    """Length scale giving a prescribed 1D strength, ``27 E G_c / (256 sigma^2)``."""
    if min(E, G_c, sigma_cr) <= 0:
        raise ValueError("E, G_c and sigma_cr must be positive")
    return 27.0 * E * G_c / (256.0 * sigma_cr**2)


def homogeneous_stress_1d(strain, E: float, G_c: float, l0: float, k: float = 0.0):
    """Stress of a homogeneous bar under monotonic strain with the phase
    field in equilibrium with the tensile history ``E eps^2 / 2``."""
    eps = np.asarray(strain, dtype=float)
    H = 0.5 * E * np.maximum(eps, 0.0) ** 2
    drive = 2.0 * l0 * (1.0 - k) * H
    phi = drive / (G_c + drive)
    return degradation(phi, k) * E * eps


def crack_density(phi, grad_phi, l0: float):
    """Crack surface density per unit volume ``phi^2/(2 l0) + l0/2 |grad phi|^2``."""
    if not l0 > 0:
        raise ValueError("l0 must be positive")
    phi = np.asarray(phi, dtype=float)
    grad = np.asarray(grad_phi, dtype=float)
    gsq = np.sum(grad * grad, axis=-1) if grad.ndim else grad * grad
    return phi**2 / (2.0 * l0) + 0.5 * l0 * gsq
