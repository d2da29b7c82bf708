import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasefrac import constitutive as cm
from phasefrac.constitutive import ElasticConstants, FractureParams


STEEL = ElasticConstants(210e9, 0.3)
CONCRETE = ElasticConstants(32e9, 0.2, 2450.0)
PARAMS = FractureParams(2700.0, 1.5e-5, 1e-9)


def rotation2(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def random_rotation3(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def stress_tensor(v):
    return np.array([[v[0], v[3], v[5]], [v[3], v[1], v[4]], [v[5], v[4], v[2]]])


def fd_energy_gradient(strain, phi, consts, params, step):
    """Central differences of g psi+ + psi- w.r.t. the Voigt strain."""
    grad = np.zeros_like(strain)
    for i in range(strain.size):
        e = np.zeros_like(strain)
        e[i] = step
        wp = cm.energy_density(cm.spectral_split(strain + e), phi, consts, params)
        wm = cm.energy_density(cm.spectral_split(strain - e), phi, consts, params)
        grad[i] = (wp - wm) / (2 * step)
    return grad


def fd_stress_jacobian(strain, phi, consts, params, step):
    nv = strain.size
    jac = np.zeros((nv, nv))
    for j in range(nv):
        e = np.zeros(nv)
        e[j] = step
        sp = cm.stress(cm.spectral_split(strain + e), phi, consts, params)
        sm = cm.stress(cm.spectral_split(strain - e), phi, consts, params)
        jac[:, j] = (sp - sm) / (2 * step)
    return jac


# -- Lame constants ----------------------------------------------------------

@pytest.mark.parametrize(
    "E, nu, lam, mu",
    [
        (210e9, 0.3, 63e9 / 0.52, 210e9 / 2.6),
        (1.0, 0.0, 0.0, 0.5),
        (32e9, 0.2, 6.4e9 / 0.72, 32e9 / 2.4),
    ],
)
def test_derive_lame(E, nu, lam, mu):
    got = cm.derive_lame(E, nu)
    assert got[0] == pytest.approx(lam, rel=1e-14, abs=1e-300)
    assert got[1] == pytest.approx(mu, rel=1e-14)


def test_derive_lame_reported_digits():
    lam, mu = cm.derive_lame(210e9, 0.3)
    assert lam == pytest.approx(1.211538e11, rel=1e-6)
    assert mu == pytest.approx(8.076923e10, rel=1e-6)
    lam, mu = cm.derive_lame(32e9, 0.2)
    assert lam == pytest.approx(8.888889e9, rel=1e-6)
    assert mu == pytest.approx(1.333333e10, rel=1e-6)


@pytest.mark.parametrize("nu", [0.5, 0.7, -1.0])
def test_derive_lame_domain(nu):
    with pytest.raises(ValueError):
        cm.derive_lame(1.0, nu)


def test_from_lame_roundtrip():
    c = ElasticConstants.from_lame(12e9, 8e9)
    assert c.lame_lambda == pytest.approx(12e9, rel=1e-12)
    assert c.lame_mu == pytest.approx(8e9, rel=1e-12)


# -- spectral split -----------------------------------------------------------

def test_split_diagonal():
    s = cm.spectral_split([0.002, -0.001, 0.0])
    np.testing.assert_allclose(s.tensile[0], [0.002, 0, 0], atol=1e-18)
    np.testing.assert_allclose(s.compressive[0], [0, -0.001, 0], atol=1e-18)
    np.testing.assert_allclose(s.values[0], [0.002, -0.001])


def test_split_zero():
    s = cm.spectral_split(np.zeros(3))
    assert np.all(s.tensile == 0) and np.all(s.compressive == 0)
    assert np.all(s.values == 0)
    assert s.perturbation_applied[0]
    s3 = cm.spectral_split(np.zeros(6))
    assert np.all(s3.values == 0)


def test_split_rotation_invariance_2d():
    lam, mu = STEEL.lame_lambda, STEEL.lame_mu
    base = cm.split_energies(cm.spectral_split([0.002, -0.001, 0.0]), lam, mu)
    R = rotation2(30.0)
    t = R @ np.diag([0.002, -0.001]) @ R.T
    rot = cm.split_energies(cm.spectral_split(cm.tensor_to_strain(t)), lam, mu)
    assert rot.psi_plus == pytest.approx(base.psi_plus, rel=1e-10)
    assert rot.psi_minus == pytest.approx(base.psi_minus, rel=1e-10)


def test_split_non_finite():
    with pytest.raises(ValueError):
        cm.spectral_split([np.nan, 0, 0])


@pytest.mark.parametrize("nv", [3, 6])
def test_split_invariants_random(nv):
    rng = np.random.default_rng(7)
    eps = rng.uniform(-0.05, 0.05, size=(2000, nv))
    s = cm.spectral_split(eps)
    dim = s.dimension
    scale = np.linalg.norm(eps, axis=1)[:, None]
    assert np.all(np.abs(s.tensile + s.compressive - eps) <= 1e-12 * scale)
    V = s.directions
    gram = np.einsum("nia,nib->nab", V, V)
    assert np.allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-12, rtol=0)
    assert np.allclose(gram, np.eye(dim), atol=1e-10)
    ev_p = np.linalg.eigvalsh(cm.strain_to_tensor(s.tensile))
    ev_m = np.linalg.eigvalsh(cm.strain_to_tensor(s.compressive))
    assert ev_p.min() >= -1e-12
    assert ev_m.max() <= 1e-12
    assert np.all(np.diff(s.values, axis=1) <= 0)


def test_jacobi_matches_dense_eigh():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(500, 3, 3))
    A = A + np.swapaxes(A, 1, 2)
    vals, vecs = cm.jacobi_eigh3(A)
    ref = np.linalg.eigvalsh(A)[:, ::-1]
    np.testing.assert_allclose(vals, ref, rtol=0, atol=1e-12 * np.abs(ref).max())
    recon = np.einsum("nia,na,nja->nij", vecs, vals, vecs)
    np.testing.assert_allclose(recon, A, atol=1e-12)


def test_perturbation_on_coincident_eigenvalues():
    s = cm.spectral_split([0.001, 0.001, 0.001, 0, 0, 0])
    assert s.perturbation_applied[0]
    p = s.perturbed[0]
    assert p[0] == pytest.approx(0.001 * (1 + 1e-9), rel=1e-15)
    assert p[2] == pytest.approx(0.001 * (1 - 1e-9), rel=1e-15)
    assert p[1] == 0.001
    # true values stay untouched for the split itself
    np.testing.assert_array_equal(s.values[0], [0.001, 0.001, 0.001])
    d = cm.spectral_split([0.002, 0.001, 0.0])
    assert not d.perturbation_applied[0]


# -- energies ---------------------------------------------------------------

def test_energy_single_tensile_principal():
    lam, mu = CONCRETE.lame_lambda, CONCRETE.lame_mu
    a = 1e-3
    e = cm.split_energies(cm.spectral_split([a, 0, 0, 0, 0, 0]), lam, mu)
    assert e.psi_plus == pytest.approx(0.5 * lam * a * a + mu * a * a, rel=1e-14)
    assert e.psi_minus == 0.0
    e = cm.split_energies(cm.spectral_split([-a, 0, 0, 0, 0, 0]), lam, mu)
    assert e.psi_plus == 0.0
    assert e.psi_minus == pytest.approx(0.5 * lam * a * a + mu * a * a, rel=1e-14)


@pytest.mark.parametrize("nv", [3, 6])
def test_energy_sum_identity_principal_frame(nv):
    """psi+ + psi- against brute force in the principal frame of a dense
    eigen-solver."""
    lam, mu = STEEL.lame_lambda, STEEL.lame_mu
    rng = np.random.default_rng(11)
    eps = rng.uniform(-0.05, 0.05, size=(300, nv))
    e = cm.split_energies(cm.spectral_split(eps), lam, mu)
    ev = np.linalg.eigvalsh(cm.strain_to_tensor(eps))
    tr = ev.sum(axis=1)
    expect = 0.5 * lam * (np.maximum(tr, 0) ** 2 + np.minimum(tr, 0) ** 2) + mu * np.sum(ev**2, axis=1)
    np.testing.assert_allclose(e.psi_plus + e.psi_minus, expect, rtol=1e-10)
    # the sum is the undamaged isotropic energy
    t = cm.strain_to_tensor(eps)
    iso = 0.5 * lam * np.einsum("nii->n", t) ** 2 + mu * np.einsum("nij,nij->n", t, t)
    np.testing.assert_allclose(e.psi_plus + e.psi_minus, iso, rtol=1e-10)
    assert np.all(e.psi_plus >= 0) and np.all(e.psi_minus >= 0)


# -- degradation ------------------------------------------------------------

def test_degradation_values():
    assert cm.degradation(0.0, 1e-9) == 1.0
    assert cm.degradation(1.0, 1e-9) == 1e-9
    assert cm.degradation(0.5, 0.0) == 0.25
    g = cm.degradation(np.linspace(0, 1, 101), 1e-9)
    assert np.all(np.diff(g) < 0)


# -- stress -----------------------------------------------------------------

@pytest.mark.parametrize("nv", [3, 6])
def test_stress_undamaged_is_linear_elastic(nv):
    rng = np.random.default_rng(5)
    eps = rng.uniform(-0.01, 0.01, size=(50, nv))
    sig = cm.stress(cm.spectral_split(eps), 0.0, STEEL, PARAMS)
    D = cm.isotropic_matrix(STEEL, 2 if nv == 3 else 3)
    np.testing.assert_allclose(sig, eps @ D.T, rtol=1e-10, atol=1e-6)


def test_stress_fully_degraded_tension():
    p = FractureParams(1.0, 1.0, 0.0)
    sig = cm.stress(cm.spectral_split([1e-3, 0, 0, 0, 0, 0]), 1.0, STEEL, p)
    np.testing.assert_array_equal(sig, np.zeros(6))


def test_stress_frame_indifference():
    rng = np.random.default_rng(2)
    for _ in range(50):
        R = random_rotation3(rng)
        t = cm.strain_to_tensor(rng.uniform(-0.02, 0.02, 6))
        tr = R @ t @ R.T
        phi = rng.uniform(0, 1)
        s1 = cm.stress(cm.spectral_split(cm.tensor_to_strain(t)), phi, STEEL, PARAMS)
        s2 = cm.stress(cm.spectral_split(cm.tensor_to_strain(tr)), phi, STEEL, PARAMS)
        e1 = np.linalg.eigvalsh(stress_tensor(s1))
        e2 = np.linalg.eigvalsh(stress_tensor(s2))
        np.testing.assert_allclose(e1, e2, rtol=1e-10, atol=1e-10 * np.abs(e1).max())


# -- tangent ----------------------------------------------------------------

def test_tangent_isotropic_all_tensile():
    D = cm.tangent(cm.spectral_split([0.003, 0.001, 0.0005, 0, 0, 0]), 0.0, STEEL, PARAMS)
    np.testing.assert_allclose(D, cm.isotropic_matrix(STEEL, 3), rtol=1e-12, atol=1e-3)


def test_tangent_isotropic_all_compressive():
    D = cm.tangent(cm.spectral_split([-0.003, -0.001, -0.0005, 1e-4, 0, 2e-4]), 0.0, STEEL, PARAMS)
    np.testing.assert_allclose(D, cm.isotropic_matrix(STEEL, 3), rtol=1e-10, atol=1e-2)


@pytest.mark.parametrize("nv", [3, 6])
def test_tangent_at_zero_strain_is_isotropic(nv):
    dim = 2 if nv == 3 else 3
    D = cm.tangent(cm.spectral_split(np.zeros(nv)), 0.0, STEEL, PARAMS)
    np.testing.assert_allclose(D, cm.isotropic_matrix(STEEL, dim), rtol=1e-12, atol=1e-3)


def test_tangent_reproduces_stress_on_proportional_path():
    rng = np.random.default_rng(9)
    eps = rng.uniform(-0.01, 0.01, size=(200, 6))
    phi = rng.uniform(0, 1, size=200)
    s = cm.spectral_split(eps)
    D = cm.tangent(s, phi, STEEL, PARAMS)
    sig = cm.stress(s, phi, STEEL, PARAMS)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", D, eps), sig, rtol=1e-8, atol=1e-8 * np.abs(sig).max())


@pytest.mark.parametrize("nv", [3, 6])
def test_tangent_symmetric_psd(nv):
    rng = np.random.default_rng(4)
    eps = rng.uniform(-0.05, 0.05, size=(500, nv))
    phi = rng.uniform(0, 1, size=500)
    D = cm.tangent(cm.spectral_split(eps), phi, STEEL, PARAMS)
    nrm = np.linalg.norm(D, axis=(1, 2))
    asym = np.linalg.norm(D - np.swapaxes(D, 1, 2), axis=(1, 2))
    assert np.all(asym <= 1e-8 * nrm)
    assert np.all(np.linalg.eigvalsh(D).min(axis=1) >= -1e-6 * nrm)


def test_tangent_finite_differences_small_sample():
    rng = np.random.default_rng(21)
    for nv in (3, 6):
        for _ in range(40):
            eps = rng.uniform(-0.05, 0.05, nv)
            ev = np.linalg.eigvalsh(cm.strain_to_tensor(eps))
            if np.min(np.diff(ev)) < 1e-6 or np.min(np.abs(ev)) < 1e-6 or abs(ev.sum()) < 1e-6:
                continue
            phi = rng.choice([0.0, 0.3, 0.7, 1.0])
            h = 1e-7 * max(1.0, np.linalg.norm(eps))
            D = cm.tangent(cm.spectral_split(eps), phi, STEEL, PARAMS)
            J = fd_stress_jacobian(eps, phi, STEEL, PARAMS, h)
            assert np.linalg.norm(D - J) <= 1e-4 * np.linalg.norm(D)
            sig = cm.stress(cm.spectral_split(eps), phi, STEEL, PARAMS)
            g = fd_energy_gradient(eps, phi, STEEL, PARAMS, h)
            assert np.linalg.norm(sig - g) <= 1e-5 * np.linalg.norm(sig)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-0.05, 0.05), min_size=6, max_size=6),
    st.floats(0.0, 1.0),
)
def test_tangent_psd_property(comps, phi):
    D = cm.tangent(cm.spectral_split(np.array(comps)), phi, STEEL, PARAMS)
    nrm = np.linalg.norm(D)
    assert np.linalg.norm(D - D.T) <= 1e-8 * nrm
    assert np.linalg.eigvalsh(D).min() >= -1e-6 * nrm


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-0.05, 0.05, allow_subnormal=False), min_size=3, max_size=3))
def test_split_reconstruction_property(comps):
    eps = np.array(comps)
    s = cm.spectral_split(eps)
    assert np.all(np.abs(s.tensile[0] + s.compressive[0] - eps) <= 1e-12 * np.abs(eps).max())


# -- calibration ------------------------------------------------------------

def test_critical_stress_concrete():
    assert cm.critical_stress_1d(32e9, 3.0, 5e-4) == pytest.approx(4.5e6, rel=1e-12)
    assert cm.length_scale_from_strength(32e9, 3.0, 4.5e6) == pytest.approx(5e-4, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e6, 1e12), st.floats(1e-2, 1e5), st.floats(1e-6, 1e-1))
def test_critical_stress_roundtrip(E, G_c, l0):
    s = cm.critical_stress_1d(E, G_c, l0)
    assert cm.length_scale_from_strength(E, G_c, s) == pytest.approx(l0, rel=1e-12)


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0)])
def test_critical_stress_domain(args):
    with pytest.raises(ValueError):
        cm.critical_stress_1d(*args)
    with pytest.raises(ValueError):
        cm.length_scale_from_strength(*args)


def test_homogeneous_response_closed_form():
    E, G_c, l0 = 32e9, 3.0, 5e-4
    eps = np.linspace(0, 1e-3, 11)
    expect = E * eps * G_c**2 / (G_c + l0 * E * eps**2) ** 2
    np.testing.assert_allclose(cm.homogeneous_stress_1d(eps, E, G_c, l0), expect, rtol=1e-13)


# -- crack density ----------------------------------------------------------

def test_crack_density_values():
    assert cm.crack_density(0.0, np.zeros(2), 0.5) == 0.0
    assert cm.crack_density(1.0, np.zeros(2), 0.5) == 1.0


def test_crack_density_exponential_profile_integrates_to_one():
    l0 = 0.01
    x = np.linspace(-40 * l0, 40 * l0, 400001)
    phi = np.exp(-np.abs(x) / l0)
    grad = -np.sign(x) * phi / l0
    gamma = cm.crack_density(phi, grad[:, None], l0)
    assert np.trapezoid(gamma, x) == pytest.approx(1.0, rel=1e-6)
