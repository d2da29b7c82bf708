"""Structured Q4/HEX8 grids, boundary node sets and edge-aligned slits.

Grid nodes are numbered ``i + (nx+1)*(j + (ny+1)*k)``; nodes duplicated by a
slit are appended after the grid nodes and remember their origin in
``Mesh.copy_of``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_MAX_NODES = 20_000_000

# reference corner signs, counter-clockwise (Q4) and bottom face then top (HEX8)
Q4_CORNERS = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
HEX8_CORNERS = np.array(
    [[-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
     [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1]],
    dtype=float,
)


class MeshError(ValueError):
    """Invalid mesh request."""


class UnsupportedGeometryError(MeshError):
    """Geometry that the structured mesher cannot represent."""


class MeshResourceError(MemoryError):
    """Requested grid exceeds the configured node limit."""


@dataclass(frozen=True)
class Segment:
    """Straight line segment from ``a`` to ``b``."""

    a: tuple
    b: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        b = tuple(float(v) for v in self.b)
        if len(a) != len(b) or len(a) not in (2, 3):
            raise ValueError("segment endpoints must both be 2D or 3D points")
        if a == b:
            raise ValueError("segment endpoints must differ")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.subtract(self.b, self.a)))


@dataclass(frozen=True)
class Box:
    """Axis-aligned selection box; bounds may be infinite."""

    lo: tuple
    hi: tuple
    tol: float = 1e-9


@dataclass(frozen=True, eq=False)
class Mesh:
    dimension: int
    nodes: np.ndarray
    elements: np.ndarray
    node_sets: dict
    h: float
    extents: tuple
    divisions: tuple
    origin: tuple
    copy_of: np.ndarray = field(repr=False)

    @property
    def kind(self) -> str:
        return "Q4" if self.dimension == 2 else "HEX8"

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    @property
    def grid_shape(self) -> tuple:
        """Number of grid nodes per axis."""
        return tuple(d + 1 for d in self.divisions)

    @property
    def spacing(self) -> tuple:
        return tuple(e / d for e, d in zip(self.extents, self.divisions))

    @property
    def n_grid_nodes(self) -> int:
        return int(np.prod(self.grid_shape))


def generate_structured(dimension, extents, divisions, origin=None, max_nodes=DEFAULT_MAX_NODES) -> Mesh:
    """Tensor-product Q4 (2D) or HEX8 (3D) grid of a box.

    Parameters
    ----------
    dimension : int
        2 or 3.
    extents : sequence of float
        Box edge lengths in metres.
    divisions : sequence of int
        Elements per axis.
    origin : sequence of float, optional
        Lower corner, zeros by default.
    max_nodes : int
        Guard against accidental huge grids.
    """
    if dimension not in (2, 3):
        raise MeshError("dimension must be 2 or 3")
    extents = tuple(float(e) for e in extents)
    divisions = tuple(int(d) for d in divisions)
    if len(extents) != dimension or len(divisions) != dimension:
        raise MeshError("extents and divisions need one entry per axis")
    if min(extents) <= 0 or not all(np.isfinite(extents)):
        raise MeshError("extents must be positive")
    if min(divisions) < 1:
        raise MeshError("divisions must be at least 1")
    origin = tuple(float(o) for o in (origin if origin is not None else (0.0,) * dimension))
    n_nodes = int(np.prod([d + 1 for d in divisions]))
    if n_nodes > max_nodes:
        raise MeshResourceError(f"grid of {n_nodes} nodes exceeds the limit of {max_nodes}")

    axes = [o + e * np.arange(d + 1) / d for o, e, d in zip(origin, extents, divisions)]
    # node id runs fastest in x
    grids = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel(order="F") for g in grids], axis=1)

    if dimension == 2:
        nx, ny = divisions
        i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
        i, j = i.ravel(order="F"), j.ravel(order="F")
        base = i + (nx + 1) * j
        elements = np.stack([base, base + 1, base + nx + 2, base + nx + 1], axis=1)
    else:
        nx, ny, nz = divisions
        i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        i, j, k = (a.ravel(order="F") for a in (i, j, k))
        sx, sy = 1, nx + 1
        sz = (nx + 1) * (ny + 1)
        base = i * sx + j * sy + k * sz
        bottom = [base, base + sx, base + sx + sy, base + sy]
        elements = np.stack(bottom + [b + sz for b in bottom], axis=1)

    sets = _boundary_sets(nodes, origin, extents)
    spacing = [e / d for e, d in zip(extents, divisions)]
    return Mesh(
        dimension=dimension,
        nodes=nodes,
        elements=elements.astype(np.int64),
        node_sets=sets,
        h=float(max(spacing)),
        extents=extents,
        divisions=divisions,
        origin=origin,
        copy_of=np.arange(n_nodes, dtype=np.int64),
    )


def _boundary_sets(nodes, origin, extents):
    names = (("left", "right"), ("bottom", "top"), ("back", "front"))
    sets = {}
    for axis in range(nodes.shape[1]):
        lo, hi = origin[axis], origin[axis] + extents[axis]
        tol = 1e-9 * extents[axis]
        x = nodes[:, axis]
        sets[names[axis][0]] = np.flatnonzero(np.abs(x - lo) <= tol)
        sets[names[axis][1]] = np.flatnonzero(np.abs(x - hi) <= tol)
    return sets


def _grid_index(value, origin, spacing, tol=1e-6):
    g = (value - origin) / spacing
    r = round(g)
    return int(r), abs(g - r) <= tol


def insert_slit(mesh: Mesh, segment: Segment, copies_to: str = "negative") -> Mesh:
    """Cut the mesh along an axis-aligned segment that starts on the boundary.

    Nodes on fully covered grid edges are duplicated, except the interior
    end node which keeps the material connected at the slit tip. Elements on
    the ``copies_to`` side ("negative": below a horizontal or left of a
    vertical slit; "positive": the other side) reference the copies. In 3D the
    cut is the segment extruded through the full z range.
    """
    if copies_to not in ("negative", "positive"):
        raise ValueError("copies_to must be 'negative' or 'positive'")
    a = np.asarray(segment.a[:2])
    b = np.asarray(segment.b[:2])
    if len(segment.a) == 3 and mesh.dimension == 3:
        if segment.a[2] != segment.b[2]:
            raise UnsupportedGeometryError("3D slits are extruded in z; give an in-plane segment")
    if a[0] != b[0] and a[1] != b[1]:
        raise UnsupportedGeometryError(f"slit {segment} is not axis-aligned")
    along = 0 if a[1] == b[1] else 1
    across = 1 - along
    spacing = mesh.spacing
    origin = mesh.origin
    line, on_line = _grid_index(a[across], origin[across], spacing[across])
    if not on_line:
        raise UnsupportedGeometryError(f"slit {segment} does not lie on a grid line")
    n_across = mesh.divisions[across]
    if not 0 < line < n_across:
        raise UnsupportedGeometryError("slit must lie on an interior grid line")

    n_along = mesh.divisions[along]
    lo = (min(a[along], b[along]) - origin[along]) / spacing[along]
    hi = (max(a[along], b[along]) - origin[along]) / spacing[along]
    tol = 1e-6
    lo_i = int(np.ceil(lo - tol))
    hi_i = int(np.floor(hi + tol))
    starts_lo = abs(lo) <= tol
    starts_hi = abs(hi - n_along) <= tol
    if not (starts_lo or starts_hi):
        raise UnsupportedGeometryError("slit must start on the domain boundary")
    if hi_i - lo_i < 1:
        return mesh

    idx = np.arange(lo_i, hi_i + 1)
    full_cut = starts_lo and starts_hi
    if not full_cut:
        idx = idx[:-1] if starts_lo else idx[1:]

    shape = mesh.grid_shape
    strides = (1, shape[0], shape[0] * shape[1])
    nz_nodes = shape[2] if mesh.dimension == 3 else 1
    originals = []
    for kz in range(nz_nodes):
        ids = idx * strides[along] + line * strides[across] + kz * (strides[2] if mesh.dimension == 3 else 0)
        originals.append(ids)
    originals = np.concatenate(originals).astype(np.int64)

    n0 = mesh.n_nodes
    new_ids = n0 + np.arange(originals.size, dtype=np.int64)
    lut = np.arange(n0, dtype=np.int64)
    lut[originals] = new_ids

    line_coord = origin[across] + line * spacing[across]
    centroid = mesh.nodes[mesh.elements].mean(axis=1)[:, across]
    side = centroid < line_coord if copies_to == "negative" else centroid > line_coord
    elements = mesh.elements.copy()
    elements[side] = lut[elements[side]]

    nodes = np.vstack([mesh.nodes, mesh.nodes[originals]])
    copy_of = np.concatenate([mesh.copy_of, mesh.copy_of[originals]])
    sets = {}
    for name, ids in mesh.node_sets.items():
        extra = new_ids[np.isin(originals, ids)]
        sets[name] = np.sort(np.concatenate([ids, extra]))
    return replace(mesh, nodes=nodes, elements=elements, node_sets=sets, copy_of=copy_of)


def distance_to_segment(x, segment: Segment) -> np.ndarray:
    """Euclidean distance from point(s) ``x`` to a segment.

    A 2D segment measured against 3D points uses the in-plane coordinates,
    i.e. the segment is treated as extruded along z.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(segment.a)
    b = np.asarray(segment.b)
    dim = a.size
    p = x[..., :dim]
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    foot = a + t[..., None] * ab
    return np.linalg.norm(p - foot, axis=-1)


def select_nodes(mesh: Mesh, selector) -> np.ndarray:
    """Sorted node ids of a named set or of the nodes inside a ``Box``."""
    if isinstance(selector, str):
        try:
            return np.sort(np.asarray(mesh.node_sets[selector], dtype=np.int64))
        except KeyError:
            raise KeyError(f"unknown node set {selector!r}; available: {sorted(mesh.node_sets)}") from None
    if isinstance(selector, Box):
        lo = np.array([-np.inf if v is None else v for v in selector.lo], dtype=float)
        hi = np.array([np.inf if v is None else v for v in selector.hi], dtype=float)
        x = mesh.nodes[:, : lo.size]
        inside = np.all((x >= lo - selector.tol) & (x <= hi + selector.tol), axis=1)
        return np.flatnonzero(inside).astype(np.int64)
    raise TypeError("selector must be a set name or a Box")
