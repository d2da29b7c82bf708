"""File output: legacy ASCII VTK snapshots, CSV series and the run manifest.

All floating point values are written with 17 significant digits so that
reading a file back reproduces the arrays bit for bit.
"""

from __future__ import annotations

import json
import os
import uuid
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import constitutive as cm
from .fem import material_response

VTK_HEADER = "# vtk DataFile Version 3.0"
VTK_CELL_TYPES = {2: 9, 3: 12}  # VTK_QUAD, VTK_HEXAHEDRON
SERIES_HEADERS = {
    "load-displacement": ("step", "time", "displacement", "reaction"),
    "energies": ("step", "time", "elastic_energy", "dissipated_energy"),
    "crack-tip": ("step", "time", "tip_x", "tip_y", "tip_speed"),
}
SERIES_FILES = {
    "load-displacement": "load_displacement.csv",
    "energies": "energies.csv",
    "crack-tip": "crack_tip.csv",
}


class OutputError(OSError):
    """Failure writing or reading an output file; names the path."""


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


# ---------------------------------------------------------------------------
# Snapshots
# ---------------------------------------------------------------------------

@dataclass
class Snapshot:
    """Fields of one state on its mesh, ready for writing."""

    step: int
    time: float
    points: np.ndarray      # (n, dim)
    cells: np.ndarray       # (ne, nen)
    u: np.ndarray           # (n, dim)
    phi: np.ndarray         # (n,)
    H_max: np.ndarray       # (ne,)
    max_principal_stress: np.ndarray  # (ne,)


def max_principal_stress(stress: np.ndarray, dim: int) -> np.ndarray:
    """Largest in-plane (2D) or spatial (3D) principal value of Voigt
    stresses with tensor components, shape (..., nv) -> (...)."""
    s = np.asarray(stress)
    if dim == 2:
        mean = 0.5 * (s[..., 0] + s[..., 1])
        return mean + np.hypot(0.5 * (s[..., 0] - s[..., 1]), s[..., 2])
    t = np.empty(s.shape[:-1] + (3, 3))
    for slot, (i, j) in enumerate(cm.VOIGT_PAIRS[3]):
        t[..., i, j] = t[..., j, i] = s[..., slot]
    return np.linalg.eigvalsh(t)[..., -1]


def make_snapshot(state, problem) -> Snapshot:
    """Collect the written fields of a simulation state."""
    disc = problem.disc
    mesh = problem.mesh
    _, sig, _, _ = material_response(disc, state.u, state.phi, problem.consts, problem.params, state.split)
    return Snapshot(
        step=state.step, time=state.t, points=mesh.nodes, cells=mesh.elements,
        u=state.u.reshape(-1, mesh.dimension), phi=state.phi,
        H_max=state.H.max(axis=1), max_principal_stress=max_principal_stress(sig, mesh.dimension).max(axis=1),
    )


def _block(a: np.ndarray) -> str:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    return "\n".join(" ".join("%.17g" % v for v in row) for row in a.tolist())


def write_vtk(snapshot: Snapshot, path) -> Path:
    """Write a legacy ASCII VTK unstructured grid.

    2D data is padded to three components (z = 0) as the format requires.
    """
    path = Path(path)
    pts = np.asarray(snapshot.points, dtype=float)
    n, dim = pts.shape
    cells = np.asarray(snapshot.cells, dtype=np.int64)
    ne, nen = cells.shape

    def pad(a):
        out = np.zeros((a.shape[0], 3))
        out[:, : a.shape[1]] = a
        return out

    lines = [
        VTK_HEADER,
        f"phasefrac step {snapshot.step} time {_fmt(snapshot.time)}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n} double",
        _block(pad(pts)),
        f"CELLS {ne} {ne * (nen + 1)}",
        "\n".join(f"{nen} " + " ".join(map(str, c)) for c in cells.tolist()),
        f"CELL_TYPES {ne}",
        "\n".join([str(VTK_CELL_TYPES[dim])] * ne),
        f"POINT_DATA {n}",
        "VECTORS u double",
        _block(pad(np.asarray(snapshot.u, dtype=float).reshape(n, -1))),
        "SCALARS phi double 1",
        "LOOKUP_TABLE default",
        _block(snapshot.phi),
        f"CELL_DATA {ne}",
        "SCALARS H_max double 1",
        "LOOKUP_TABLE default",
        _block(snapshot.H_max),
        "SCALARS max_principal_stress double 1",
        "LOOKUP_TABLE default",
        _block(snapshot.max_principal_stress),
    ]
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_vtk(path) -> dict:
    """Parse a file written by ``write_vtk``.

    Returns a dict with ``points`` (n, 3), ``cells``, ``cell_types``,
    ``point_data`` and ``cell_data`` (name -> array).
    """
    path = Path(path)
    try:
        tokens = path.read_text().split("\n")
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if tokens[0] != VTK_HEADER:
        raise ValueError(f"{path}: not a legacy VTK file")
    out = {"title": tokens[1], "point_data": {}, "cell_data": {}}
    words = " ".join(tokens[2:]).split()
    pos = 0

    def take(k):
        nonlocal pos
        chunk = words[pos:pos + k]
        pos += k
        return chunk

    section = None
    while pos < len(words):
        key = take(1)[0]
        if key in ("ASCII", "DATASET", "UNSTRUCTURED_GRID", "LOOKUP_TABLE", "default"):
            continue
        if key == "POINTS":
            n, _ = take(2)
            out["points"] = np.array(take(3 * int(n)), dtype=float).reshape(-1, 3)
        elif key == "CELLS":
            ne, size = map(int, take(2))
            flat = np.array(take(size), dtype=np.int64)
            nen = int(flat[0])
            out["cells"] = flat.reshape(ne, nen + 1)[:, 1:]
        elif key == "CELL_TYPES":
            ne = int(take(1)[0])
            out["cell_types"] = np.array(take(ne), dtype=int)
        elif key in ("POINT_DATA", "CELL_DATA"):
            section = ("point_data" if key == "POINT_DATA" else "cell_data", int(take(1)[0]))
        elif key == "SCALARS":
            name, _, _ = take(3)
            if words[pos] == "LOOKUP_TABLE":
                take(2)
            out[section[0]][name] = np.array(take(section[1]), dtype=float)
        elif key == "VECTORS":
            name, _ = take(2)
            out[section[0]][name] = np.array(take(3 * section[1]), dtype=float).reshape(-1, 3)
        else:
            raise ValueError(f"{path}: unexpected token {key!r}")
    return out


# ---------------------------------------------------------------------------
# Series and manifest
# ---------------------------------------------------------------------------

def series_rows(kind: str, result) -> list:
    """Rows of a series kind from a ``RunResult``."""
    if kind == "load-displacement":
        return list(result.load_displacement)
    if kind == "energies":
        return list(result.energies)
    if kind == "crack-tip":
        return [r[:5] for r in result.tips]
    raise ValueError(f"unknown series kind {kind!r}")


def write_series(kind: str, rows, path) -> Path:
    """Write a CSV series with the fixed header of ``kind``.

    Rows must be time-ordered; each row holds the header's columns in order.
    """
    if kind not in SERIES_HEADERS:
        raise ValueError(f"unknown series kind {kind!r}; use one of {sorted(SERIES_HEADERS)}")
    header = SERIES_HEADERS[kind]
    path = Path(path)
    last = -np.inf
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"{kind} rows need {len(header)} columns, got {len(row)}")
        if row[1] < last:
            raise ValueError(f"{kind} rows are not time-ordered")
        last = row[1]
        lines.append(",".join(_fmt(v) for v in row))
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def read_series(path) -> tuple[tuple, np.ndarray]:
    """Header and float array of a CSV series (empty array when header-only)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    header = tuple(lines[0].split(","))
    if len(lines) == 1:
        return header, np.zeros((0, len(header)))
    return header, np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])


class RunWriter:
    """Output directory of one run; usable as the ``sink`` of ``stepper.run``.

    Records every file it writes so the manifest can list them.
    """

    def __init__(self, directory, series=("load-displacement", "energies", "crack-tip"), snapshots: bool = True):
        self.dir = Path(directory)
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OutputError(f"cannot create output directory {self.dir}: {exc.strerror or exc}") from exc
        self.series = tuple(series)
        self.snapshots = snapshots
        self.files = []

    def snapshot(self, state, problem):
        if not self.snapshots:
            return
        name = f"snap_{state.step:06d}.vtk"
        write_vtk(make_snapshot(state, problem), self.dir / name)
        self.files.append({"path": name, "kind": "snapshot", "step": int(state.step)})

    def write_series(self, result):
        for kind in self.series:
            name = SERIES_FILES[kind]
            rows = series_rows(kind, result)
            write_series(kind, rows, self.dir / name)
            steps = sorted({int(r[0]) for r in rows})
            self.files.append({"path": name, "kind": kind, "steps": steps[:1] + steps[-1:]})

    def write_manifest(self, config_hash: str, timings: dict, extra: dict | None = None) -> Path:
        """Write ``manifest.json``; every listed file must exist."""
        missing = [f["path"] for f in self.files if not (self.dir / f["path"]).is_file()]
        if missing:
            raise OutputError(f"manifest lists missing files: {missing}")
        doc = {
            "run_id": uuid.uuid4().hex,
            "config_hash": config_hash,
            "files": self.files,
            "timings": timings,
        }
        if extra:
            doc.update(extra)
        path = self.dir / "manifest.json"
        tmp = path.with_suffix(".json.tmp")
        try:
            with open(tmp, "w", newline="\n") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            os.replace(tmp, path)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
        return path
