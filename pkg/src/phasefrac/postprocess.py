"""Observables of a simulation state: reactions, energies and crack tips.

Crack tips are read off the ``phi = iso`` level set of the nodal phase field
on the structured grid. Cracked nodes (``phi >= iso``) connected to the
pre-crack form a graph; the geodesic distance along it, measured from the
pre-crack tip, ranks the marching-squares crossings on the level set. Each
sufficiently long branch of that distance field contributes one tip.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from . import constitutive as cm
from .mesh import Mesh, Segment, distance_to_segment

log = logging.getLogger(__name__)

DEFAULT_ISO = 0.75


# ---------------------------------------------------------------------------
# Scalars
# ---------------------------------------------------------------------------

def reaction_force(F_int, dofmap, nodes, component: int, constrained=None) -> float:
    """Sum of internal nodal forces of ``nodes`` in one direction.

    In 2D the result is a force per unit thickness. ``constrained`` (a
    boolean mask over dofs) enables a warning for sets that are not held.
    """
    dofs = dofmap.u_dofs(nodes, component)
    if constrained is not None and not np.all(np.asarray(constrained)[dofs]):
        warnings.warn("reaction requested on dofs that are not all constrained", RuntimeWarning, stacklevel=2)
    return float(np.sum(np.asarray(F_int)[dofs]))


def elastic_energy(disc, u, phi, consts: cm.ElasticConstants, params: cm.FractureParams, split=None) -> float:
    """Degraded elastic strain energy ``int g psi+ + psi- dV``."""
    if split is None:
        split = cm.spectral_split(disc.strains(u).reshape(-1, disc.nv))
    phi_qp = disc.at_qp(phi).ravel()
    w = cm.energy_density(split, phi_qp, consts, params)
    return float(np.sum(w.reshape(disc.ne, disc.nq) * disc.dV))


def dissipated_energy(disc, phi, params: cm.FractureParams) -> float:
    """Fracture energy ``G_c int gamma(phi, grad phi) dV``."""
    gamma = cm.crack_density(disc.at_qp(phi), disc.gradient(phi), params.l0)
    return float(params.G_c * np.sum(gamma * disc.dV))


def kinetic_energy(M, v) -> float:
    v = np.asarray(v)
    return float(0.5 * v @ (M @ v))


def rayleigh_speed(E: float, nu: float, rho: float) -> float:
    """Viktorov approximation ``c_s (0.862 + 1.14 nu) / (1 + nu)``."""
    if min(E, rho) <= 0 or not -1.0 < nu < 0.5:
        raise ValueError("rayleigh_speed needs E > 0, rho > 0 and -1 < nu < 0.5")
    c_s = np.sqrt(E / (2.0 * (1.0 + nu)) / rho)
    return float(c_s * (0.862 + 1.14 * nu) / (1.0 + nu))


def moving_average(values, width: int = 5) -> np.ndarray:
    """Centered moving average; edges use the available samples and NaNs
    are skipped."""
    x = np.asarray(values, dtype=float)
    half = width // 2
    out = np.full(x.shape, np.nan)
    for i in range(x.size):
        w = x[max(0, i - half): i + half + 1]
        w = w[np.isfinite(w)]
        if w.size:
            out[i] = w.mean()
    return out


def crack_angle(points, window: int | None = None) -> float:
    """Direction of the total-least-squares line through tip positions, in
    degrees from +x, oriented from the first towards the last sample.

    ``window`` keeps only the last ``window`` samples.
    """
    p = np.asarray(points, dtype=float)
    p = p[np.all(np.isfinite(p), axis=1)]
    if window is not None:
        p = p[-window:]
    if p.shape[0] < 2:
        raise ValueError("crack_angle needs at least two tip positions")
    c = p - p.mean(axis=0)
    _, _, vt = np.linalg.svd(c, full_matrices=False)
    d = vt[0]
    if np.dot(p[-1] - p[0], d) < 0:
        d = -d
    return float(np.degrees(np.arctan2(d[1], d[0])))


# ---------------------------------------------------------------------------
# Crack tips
# ---------------------------------------------------------------------------

@dataclass
class CrackTip:
    position: np.ndarray
    extension: float  # geodesic distance from the pre-crack tip
    ident: int = -1
    speed: float = float("nan")


@dataclass
class CrackTipSample:
    time: float
    tips: list = field(default_factory=list)
    v_R: float = float("nan")

    @property
    def cracked(self) -> bool:
        return bool(self.tips)

    @property
    def count(self) -> int:
        return len(self.tips)


def grid_field(mesh: Mesh, nodal) -> np.ndarray:
    """Nodal values on the structured grid, shape (ny+1, nx+1).

    Copies made by a slit fold onto their grid node by maximum; 3D fields are
    reduced by maximum over z.
    """
    vals = np.full(mesh.n_grid_nodes, -np.inf)
    np.maximum.at(vals, mesh.copy_of, np.asarray(nodal, dtype=float))
    shape = mesh.grid_shape
    if mesh.dimension == 3:
        return vals.reshape(shape[2], shape[1], shape[0]).max(axis=0)
    return vals.reshape(shape[1], shape[0])


def _grid_graph(mask, hx, hy):
    """8-connected graph over the True cells of ``mask`` with Euclidean
    weights. Returns the sparse graph and the flat ids of the mask cells."""
    ny, nx = mask.shape
    ids = np.flatnonzero(mask.ravel())
    rows, cols, w = [], [], []
    jj, ii = np.divmod(ids, nx)
    for dj, di in ((0, 1), (1, 0), (1, 1), (1, -1)):
        j2, i2 = jj + dj, ii + di
        ok = (j2 < ny) & (i2 >= 0) & (i2 < nx)
        ok[ok] = mask[j2[ok], i2[ok]]
        rows.append(ids[ok])
        cols.append(j2[ok] * nx + i2[ok])
        w.append(np.full(ok.sum(), np.hypot(di * hx, dj * hy)))
    rows, cols, w = (np.concatenate(a) for a in (rows, cols, w))
    return rows, cols, w


def _crossings(G, iso, x, y):
    """Marching-squares crossing points of ``G = iso`` on grid edges, each
    paired with the flat id of its cracked endpoint."""
    ny, nx = G.shape
    pts, owners = [], []
    for axis in (0, 1):
        if axis == 1:
            a, b = G[:, :-1], G[:, 1:]
        else:
            a, b = G[:-1, :], G[1:, :]
        cross = (a >= iso) != (b >= iso)
        jj, ii = np.nonzero(cross)
        va, vb = a[jj, ii], b[jj, ii]
        t = (iso - va) / (vb - va)
        if axis == 1:
            px = x[ii] + t * (x[ii + 1] - x[ii])
            py = y[jj]
            own = np.where(va >= iso, jj * nx + ii, jj * nx + ii + 1)
        else:
            px = x[ii]
            py = y[jj] + t * (y[jj + 1] - y[jj])
            own = np.where(va >= iso, jj * nx + ii, (jj + 1) * nx + ii)
        pts.append(np.stack([px, py], axis=1))
        owners.append(own)
    return np.concatenate(pts), np.concatenate(owners)


def crack_tips(mesh: Mesh, phi, precrack: Segment, iso: float = DEFAULT_ISO, l0: float | None = None,
               persistence: float | None = None, source_radius: float | None = None) -> list:
    """Tips of the crack grown from ``precrack``.

    ``precrack.b`` is the pre-crack tip, ``precrack.a`` its boundary end.
    Returns a list of ``CrackTip`` sorted by decreasing extension; empty when
    no cracked node is connected to the pre-crack.
    """
    hx, hy = mesh.spacing[0], mesh.spacing[1]
    h = max(hx, hy)
    l0 = h if l0 is None else l0
    persistence = 2.0 * l0 if persistence is None else persistence
    radius = max(l0, 2.0 * h) if source_radius is None else source_radius
    G = grid_field(mesh, phi)
    ny, nx = G.shape
    x = mesh.origin[0] + hx * np.arange(nx)
    y = mesh.origin[1] + hy * np.arange(ny)
    cracked = G >= iso
    if not cracked.any():
        return []
    X, Y = np.meshgrid(x, y)
    pos = np.stack([X.ravel(), Y.ravel()], axis=1)
    seg2 = Segment(precrack.a[:2], precrack.b[:2])
    near = cracked.ravel() & (distance_to_segment(pos, seg2) <= radius)
    tip0 = np.asarray(seg2.b)
    t_hat = (tip0 - np.asarray(seg2.a)) / seg2.length
    offset = np.maximum(0.0, (pos - tip0) @ t_hat)

    rows, cols, w = _grid_graph(cracked, hx, hy)
    n = nx * ny
    # only the component(s) reaching the pre-crack tip grow from it; damage
    # elsewhere along the pre-crack (e.g. at its mouth) is not a tip
    _, comp = connected_components(sp.csr_matrix((w, (rows, cols)), shape=(n, n)), directed=False)
    at_tip = cracked.ravel() & (np.linalg.norm(pos - tip0, axis=1) <= radius)
    src = np.flatnonzero(near & np.isin(comp, comp[at_tip]))
    if src.size == 0:
        return []
    # a virtual root feeds every source with its offset beyond the tip
    shift = h
    rows = np.concatenate([rows, np.full(src.size, n)])
    cols = np.concatenate([cols, src])
    w = np.concatenate([w, offset[src] + shift])
    graph = sp.csr_matrix((w, (rows, cols)), shape=(n + 1, n + 1))
    dist = dijkstra(graph, directed=False, indices=n)[:n] - shift

    pts, owners = _crossings(G, iso, x, y)
    ok = np.isfinite(dist[owners])
    pts, owners = pts[ok], owners[ok]
    if owners.size == 0:
        return []
    score = dist[owners] + np.linalg.norm(pts - pos[owners], axis=1)

    labels = _branch_labels(dist, cracked, nx, ny, persistence)
    tips = []
    for peak in np.unique(labels[owners]):
        sel = labels[owners] == peak
        k = np.argmax(np.where(sel, score, -np.inf))
        tips.append(CrackTip(pts[k].copy(), float(score[k])))
    tips.sort(key=lambda t: -t.extension)
    return tips


def _branch_labels(dist, mask, nx, ny, persistence):
    """Label every reachable cracked node by the branch it belongs to.

    Superlevel-set filtration of the distance field with union-find; a branch
    survives when its peak rises at least ``persistence`` above the node
    where it merges into a longer branch.
    """
    n = nx * ny
    finite = np.isfinite(dist) & mask.ravel()
    order = np.flatnonzero(finite)
    order = order[np.argsort(-dist[order], kind="stable")]
    parent = np.arange(n)
    peak = np.full(n, -1)
    label = np.full(n, -1)

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    done = np.zeros(n, dtype=bool)
    merged_into = {}
    for node in order:
        j, i = divmod(int(node), nx)
        roots = set()
        for dj in (-1, 0, 1):
            for di in (-1, 0, 1):
                if dj == 0 and di == 0:
                    continue
                j2, i2 = j + dj, i + di
                if 0 <= j2 < ny and 0 <= i2 < nx:
                    nb = j2 * nx + i2
                    if done[nb]:
                        roots.add(find(nb))
        done[node] = True
        if not roots:
            peak[node] = node
            label[node] = node
            continue
        roots = sorted(roots, key=lambda r: -dist[peak[r]])
        main = roots[0]
        for r in roots[1:]:
            if dist[peak[r]] - dist[node] < persistence:
                merged_into[peak[r]] = peak[main]
            parent[r] = main
        parent[node] = main
        label[node] = peak[main]

    def resolve(p):
        while p in merged_into:
            p = merged_into[p]
        return p

    out = label.copy()
    valid = label >= 0
    uniq = np.unique(label[valid])
    remap = {int(p): resolve(int(p)) for p in uniq}
    out[valid] = [remap[int(p)] for p in label[valid]]
    return out


class CrackTracker:
    """Follows crack tips over time and assigns persistent identities.

    New tips are matched one-to-one to the previous sample by increasing
    distance; a tip without a partner is new and gets ``speed = nan``.
    """

    def __init__(self, mesh: Mesh, precrack: Segment, iso: float = DEFAULT_ISO, l0: float | None = None,
                 v_R: float = float("nan"), persistence: float | None = None):
        self.mesh = mesh
        self.precrack = precrack
        self.iso = iso
        self.l0 = l0
        self.v_R = v_R
        self.persistence = persistence
        self.samples: list[CrackTipSample] = []
        self._next_id = 0

    def update(self, phi, time: float) -> CrackTipSample:
        tips = crack_tips(self.mesh, phi, self.precrack, self.iso, self.l0, self.persistence)
        prev = self.samples[-1] if self.samples else None
        if prev is not None and prev.tips and tips:
            dt = time - prev.time
            pairs = sorted(
                (float(np.linalg.norm(a.position - b.position)), ia, ib)
                for ia, a in enumerate(tips)
                for ib, b in enumerate(prev.tips)
            )
            used_new, used_old = set(), set()
            for d, ia, ib in pairs:
                if ia in used_new or ib in used_old:
                    continue
                used_new.add(ia)
                used_old.add(ib)
                tips[ia].ident = prev.tips[ib].ident
                tips[ia].speed = d / dt if dt > 0 else float("nan")
        for t in tips:
            if t.ident < 0:
                t.ident = self._next_id
                self._next_id += 1
        sample = CrackTipSample(time, tips, self.v_R)
        self.samples.append(sample)
        return sample

    def track(self, ident: int = 0) -> np.ndarray:
        """Positions (k, 2) of one tip identity over the samples."""
        pts = [t.position for s in self.samples for t in s.tips if t.ident == ident]
        return np.array(pts).reshape(-1, 2)

    def initiation_time(self, threshold: float | None = None) -> float:
        """First sample time with a tip extension of at least ``threshold``
        (default ``l0``); ``nan`` when the crack never grew that far."""
        thr = (self.l0 if self.l0 is not None else self.mesh.h) if threshold is None else threshold
        for s in self.samples:
            if any(t.extension >= thr for t in s.tips):
                return s.time
        return float("nan")

    def max_speed(self) -> float:
        speeds = [t.speed for s in self.samples for t in s.tips if np.isfinite(t.speed)]
        return max(speeds) if speeds else float("nan")
