"""Declarative scenario documents, the built-in benchmark registry and the
translation of a validated document into a runnable ``Problem``.

Documents are JSON with SI units throughout. Every field has a fixed
location, so validation errors name a dotted path such as
``material.poisson_ratio``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import constitutive as cm
from .fem import Discretization
from .mesh import Box, Segment, generate_structured, insert_slit, select_nodes
from .stepper import (
    DirichletBC, Drive, NeumannBC, OutputOptions, Phase, Problem, StaggeredControls, TimeIntegrator,
    init_history_crack, tributary_weights,
)

SPEC_VERSION = 1
COMPONENTS = {"x": 0, "y": 1, "z": 2}


class ConfigError(ValueError):
    """Invalid scenario document.

    ``path`` is the dotted location of the first problem, ``errors`` the
    full list of ``(path, message)`` pairs.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        self.path = self.errors[0][0] if self.errors else ""
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in self.errors))


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# ---------------------------------------------------------------------------
# Document model
# ---------------------------------------------------------------------------

class SegmentSpec(_Model):
    start: tuple[float, ...]
    end: tuple[float, ...]

    @model_validator(mode="after")
    def _endpoints(self):
        if len(self.start) != len(self.end) or len(self.start) not in (2, 3):
            raise ValueError("start and end must both have 2 or 3 coordinates")
        if tuple(self.start) == tuple(self.end):
            raise ValueError("start and end must differ")
        return self

    def segment(self) -> Segment:
        return Segment(self.start, self.end)


class InducedCrackSpec(SegmentSpec):
    B: float = Field(1e6, gt=0)


class PrecrackSpec(_Model):
    """One pre-crack: a geometric slit, an induced crack, or neither."""

    slit: SegmentSpec | None = None
    induced_crack: InducedCrackSpec | None = None

    @model_validator(mode="after")
    def _exclusive(self):
        if self.slit is not None and self.induced_crack is not None:
            raise ValueError("a pre-crack is either a slit or an induced crack, not both")
        return self


class GeometrySpec(_Model):
    dimension: Literal[2, 3] = 2
    extents: tuple[float, ...]
    divisions: tuple[int, ...]
    origin: tuple[float, ...] | None = None
    precracks: tuple[PrecrackSpec, ...] = ()

    @field_validator("extents")
    @classmethod
    def _positive_extents(cls, v):
        if any(not (e > 0 and np.isfinite(e)) for e in v):
            raise ValueError("extents must be positive and finite")
        return v

    @field_validator("divisions")
    @classmethod
    def _positive_divisions(cls, v):
        if any(d < 1 for d in v):
            raise ValueError("divisions must be at least 1")
        return v

    @model_validator(mode="after")
    def _lengths(self):
        for name in ("extents", "divisions", "origin"):
            v = getattr(self, name)
            if v is not None and len(v) != self.dimension:
                raise ValueError(f"{name} needs {self.dimension} entries")
        return self


class MaterialSpec(_Model):
    youngs_modulus: float = Field(gt=0)
    poisson_ratio: float = Field(gt=-1.0, lt=0.5)
    density: float = Field(0.0, ge=0)


class FractureSpec(_Model):
    G_c: float = Field(gt=0)
    l0: float = Field(gt=0)
    k: float = Field(1e-9, ge=0, lt=1)


class IntegratorSpec(_Model):
    rho_inf: float = Field(0.9, ge=0, le=1)


class ControlsSpec(_Model):
    tolerance: float = Field(1e-6, gt=0)
    max_iterations: int = Field(200, ge=1)
    anderson: bool = False
    anderson_depth: int = Field(50, ge=1)
    equilibrium_tolerance: float = Field(1e-6, gt=0)
    u_solver: Literal["auto", "direct", "cg"] = "auto"
    phi_solver: Literal["auto", "direct", "cg"] = "cg"


class BoxSpec(_Model):
    lo: tuple[float | None, ...]
    hi: tuple[float | None, ...]


class BoundarySpec(_Model):
    """Named node set with either prescribed components or applied loads.

    ``nodes`` is a boundary set name (left, right, bottom, top, back, front)
    or a box; ``components`` lists constrained directions for a Dirichlet
    condition and is omitted for a load.
    """

    name: str
    nodes: str | BoxSpec
    kind: Literal["dirichlet", "load"] = "dirichlet"
    components: tuple[Literal["x", "y", "z"], ...] = ()
    value: float = 0.0
    from_phase: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _components(self):
        if self.kind == "dirichlet" and not self.components:
            raise ValueError("a dirichlet condition needs at least one component")
        if self.kind == "load" and self.components:
            raise ValueError("load conditions take no components; drives choose the direction")
        if len(set(self.components)) != len(self.components):
            raise ValueError("components repeat")
        return self


class DriveSpec(_Model):
    bc: str
    component: Literal["x", "y", "z"]
    kind: Literal["displacement", "velocity", "force", "traction"]
    value: float
    t0: float = Field(0.0, ge=0)
    ramp_steps: int | None = Field(None, ge=0)


class PhaseSpec(_Model):
    steps: int = Field(ge=0)
    dt: float = Field(gt=0)
    drives: tuple[DriveSpec, ...] = ()


class ReactionSpec(_Model):
    bc: str
    component: Literal["x", "y", "z"]


class SeriesSpec(_Model):
    load_displacement: bool = True
    energies: bool = True
    crack_tip: bool = True


class OutputsSpec(_Model):
    snapshot_every: int = Field(0, ge=0)
    reaction: ReactionSpec | None = None
    tip_every: int = Field(0, ge=0)
    tip_iso: float = Field(0.75, gt=0, lt=1)
    series: SeriesSpec = SeriesSpec()


class ScenarioConfig(_Model):
    spec_version: Literal[1]
    name: str = "custom"
    description: str = ""
    geometry: GeometrySpec
    material: MaterialSpec
    fracture: FractureSpec
    analysis: Literal["quasi-static", "dynamic"] = "quasi-static"
    integrator: IntegratorSpec = IntegratorSpec()
    controls: ControlsSpec = ControlsSpec()
    lumped_mass: bool = False
    boundary_conditions: tuple[BoundarySpec, ...] = ()
    schedule: tuple[PhaseSpec, ...]
    outputs: OutputsSpec = OutputsSpec()

    @field_validator("schedule")
    @classmethod
    def _non_empty(cls, v):
        if not v:
            raise ValueError("schedule needs at least one phase")
        return v

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.analysis == "dynamic" and not self.material.density > 0:
            raise _PathError("material.density", "dynamic analysis needs a positive density")
        dim = self.geometry.dimension
        names = [b.name for b in self.boundary_conditions]
        if len(set(names)) != len(names):
            raise _PathError("boundary_conditions", "condition names must be unique")
        by_name = {b.name: b for b in self.boundary_conditions}
        for i, b in enumerate(self.boundary_conditions):
            if any(COMPONENTS[c] >= dim for c in b.components):
                raise _PathError(f"boundary_conditions.{i}.components", f"component out of range in {dim}D")
            if b.from_phase >= len(self.schedule):
                raise _PathError(f"boundary_conditions.{i}.from_phase", "phase index beyond the schedule")
        for p, ph in enumerate(self.schedule):
            for j, d in enumerate(ph.drives):
                where = f"schedule.{p}.drives.{j}"
                b = by_name.get(d.bc)
                if b is None:
                    raise _PathError(f"{where}.bc", f"unknown boundary condition {d.bc!r}")
                if COMPONENTS[d.component] >= dim:
                    raise _PathError(f"{where}.component", f"component out of range in {dim}D")
                if b.kind == "load" and d.kind not in ("force", "traction"):
                    raise _PathError(f"{where}.kind", "load conditions take force or traction drives")
                if b.kind == "dirichlet":
                    if d.kind not in ("displacement", "velocity"):
                        raise _PathError(f"{where}.kind", "dirichlet conditions take displacement or velocity drives")
                    if d.component not in b.components:
                        raise _PathError(f"{where}.component", f"{d.bc!r} does not constrain {d.component}")
        if self.outputs.reaction is not None:
            r = self.outputs.reaction
            b = by_name.get(r.bc)
            if b is None or b.kind != "dirichlet":
                raise _PathError("outputs.reaction.bc", f"{r.bc!r} is not a dirichlet condition")
        for i, pc in enumerate(self.geometry.precracks):
            seg = pc.slit or pc.induced_crack
            if seg is not None and len(seg.start) not in (2, dim):
                raise _PathError(f"geometry.precracks.{i}", "segment dimension does not match the geometry")
        return self


class _PathError(ValueError):
    """Cross-field violation raised with an explicit document path."""

    def __init__(self, path, message):
        super().__init__(f"@{path}@ {message}")


# ---------------------------------------------------------------------------
# Parsing, serialization and hashing
# ---------------------------------------------------------------------------

def _errors_from(exc: ValidationError):
    out = []
    for e in exc.errors():
        path = ".".join(str(p) for p in e["loc"])
        msg = e["msg"]
        if "@" in msg:
            # model validators carry their own path
            head, _, rest = msg.partition("@")
            inner, _, text = rest.partition("@")
            path = ".".join(p for p in (path, inner) if p)
            msg = text.strip()
        elif msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        if e["type"] == "extra_forbidden":
            msg = f"unknown key {str(e['loc'][-1])!r}"
        out.append((path, msg))
    return out


def validate_document(doc) -> ScenarioConfig:
    """Validate a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError([("", "document must be a JSON object")])
    try:
        return ScenarioConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_errors_from(exc)) from None


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a JSON scenario document.

    Raises
    ------
    ConfigError
        Malformed JSON (path empty, message with line and column) or a
        schema or physical violation (path of the offending field).
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")]) from None
    return validate_document(doc)


def to_document(config: ScenarioConfig) -> dict:
    """Plain JSON-compatible dict with every default filled in."""
    return config.model_dump(mode="json")


def serialize(config: ScenarioConfig, indent: int | None = 2) -> str:
    """JSON text with sorted keys; ``parse_config`` inverts it exactly."""
    return json.dumps(to_document(config), indent=indent, sort_keys=True)


def config_hash(config: ScenarioConfig) -> str:
    """SHA-256 of the canonical JSON form.

    Independent of key order and of defaults being spelled out or omitted.
    """
    canon = json.dumps(to_document(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: ScenarioConfig, overrides) -> ScenarioConfig:
    """Apply dotted ``key=value`` overrides and revalidate.

    Values are decoded as JSON when possible (numbers, booleans, lists) and
    kept as strings otherwise. List entries are addressed by index, e.g.
    ``schedule.1.steps=20``.
    """
    doc = to_document(config)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError([("", f"override {item!r} is not key=value")])
        parts = key.split(".")
        node = doc
        for i, p in enumerate(parts[:-1]):
            node = _descend(node, p, ".".join(parts[: i + 1]))
        last = parts[-1]
        if isinstance(node, list):
            idx = _index(node, last, key)
            node[idx] = _coerce(raw)
        elif isinstance(node, dict):
            node[last] = _coerce(raw)
        else:
            raise ConfigError([(key, "cannot set a field inside a scalar")])
    return validate_document(doc)


def _index(node, part, path):
    try:
        idx = int(part)
        node[idx]
    except (ValueError, IndexError):
        raise ConfigError([(path, "list index out of range")]) from None
    return idx


def _descend(node, part, path):
    if isinstance(node, list):
        return node[_index(node, part, path)]
    if isinstance(node, dict):
        if node.get(part) is None:
            node[part] = {}
        return node[part]
    raise ConfigError([(path, "cannot descend into a scalar")])


def json_schema() -> dict:
    """JSON schema of the scenario document."""
    schema = ScenarioConfig.model_json_schema()
    schema["$schema"] = "https://json-schema.org/draft/2020-12/schema"
    schema["title"] = "phasefrac scenario"
    return schema


# ---------------------------------------------------------------------------
# Built-in benchmarks
# ---------------------------------------------------------------------------

PROFILES = ("desk", "paper")


def _lame_to_engineering(lam, mu):
    return mu * (3 * lam + 2 * mu) / (lam + mu), lam / (2 * (lam + mu))


def _sen(mode, profile):
    # 1 x 1 mm plate, notch from the left edge to the centre.
    # E = 210 GPa, nu = 0.3, G_c = 2700 J/m^2 (often quoted in N/mm and mm).
    if profile == "desk":
        n, l0 = 66, 3e-5
    else:
        n, l0 = 254, 1.5e-5  # h = 3.94e-3 mm, 64516 elements
    if mode == "tension":
        if profile == "desk":
            schedule = [_ph(40, 1.0, "top", "y", 1e-7), _ph(560, 0.1, "top", "y", 1e-8)]
        else:
            schedule = [_ph(450, 1.0, "top", "y", 1e-8), _ph(2000, 0.1, "top", "y", 1e-9)]
        top = dict(name="top", nodes="top", components=["x", "y"])
        sides = []
        reaction = dict(bc="top", component="y")
    else:
        # first 80 increments of 1e-4 mm, then 1e-5 mm
        schedule = [_ph(80, 1.0, "top", "x", 1e-7), _ph(700 if profile == "desk" else 1000, 0.1, "top", "x", 1e-8)]
        top = dict(name="top", nodes="top", components=["x", "y"])
        sides = [dict(name="left", nodes="left", components=["y"]),
                 dict(name="right", nodes="right", components=["y"])]
        reaction = dict(bc="top", component="x")
    return dict(
        description=f"single-edge-notched plate under {mode}",
        geometry=dict(extents=[1e-3, 1e-3], divisions=[n, n],
                      precracks=[dict(slit=dict(start=[0.0, 5e-4], end=[5e-4, 5e-4]))]),
        material=dict(youngs_modulus=210e9, poisson_ratio=0.3),
        fracture=dict(G_c=2700.0, l0=l0),
        controls=dict(anderson=True, max_iterations=2000),
        boundary_conditions=[dict(name="bottom", nodes="bottom", components=["x", "y"]), top] + sides,
        schedule=schedule,
        outputs=dict(reaction=reaction, tip_every=1, snapshot_every=0),
    )


def _ph(steps, dt, bc, comp, value, kind="displacement", **kw):
    return dict(steps=steps, dt=dt, drives=[dict(bc=bc, component=comp, kind=kind, value=value, **kw)])


def _mixed(profile):
    # 200 x 200 mm plate with 25 mm notches at mid-height on both sides.
    # E = 32.8 GPa, nu = 0.2, l0 = 2.5 mm; G_c in {25, 50, 75, 100} J/m^2.
    # Shear force ramped to 5 kN on a 50 mm thick plate, then vertical
    # displacement increments.
    if profile == "desk":
        n, l0, du, steps = 40, 1e-2, 5e-7, 60
    else:
        n, l0, du, steps = 160, 2.5e-3, 5e-9, 5200
    L = 0.2
    return dict(
        description="double-edge-notched plate, shear force then tension",
        geometry=dict(extents=[L, L], divisions=[n, n], precracks=[
            dict(slit=dict(start=[0.0, 0.1], end=[0.025, 0.1])),
            dict(slit=dict(start=[L, 0.1], end=[L - 0.025, 0.1])),
        ]),
        material=dict(youngs_modulus=32.8e9, poisson_ratio=0.2),
        fracture=dict(G_c=75.0, l0=l0),
        controls=dict(anderson=True, max_iterations=2000),
        boundary_conditions=[
            dict(name="bottom", nodes="bottom", components=["x", "y"]),
            dict(name="shear", nodes=dict(lo=[None, 0.1], hi=[0.0, None]), kind="load"),
            dict(name="right_lower", nodes=dict(lo=[L, None], hi=[None, 0.1]), components=["x"]),
            dict(name="top", nodes="top", components=["y"], from_phase=1),
        ],
        schedule=[
            dict(steps=100, dt=1.0, drives=[dict(bc="shear", component="x", kind="force",
                                                 value=5e3 / 0.05, ramp_steps=100)]),
            _ph(steps, 1.0, "top", "y", du),
        ],
        outputs=dict(reaction=dict(bc="top", component="y"), tip_every=0),
    )


def _three_point(profile):
    # 8 x 2 mm beam, 0.4 mm thick, 0.4 mm notch at mid-span.
    # lambda = 12 kN/mm^2, mu = 8 kN/mm^2, G_c = 0.5 N/mm.
    E, nu = _lame_to_engineering(12e9, 8e9)
    if profile == "desk":
        div, l0, du, steps = [80, 20, 2], 6e-5, 5e-7, 160
    else:
        div, l0, du, steps = [532, 134, 27], 3e-5, 5e-8, 1600
    L, H, T = 8e-3, 2e-3, 4e-4
    return dict(
        description="notched beam in three-point bending (3D)",
        geometry=dict(dimension=3, extents=[L, H, T], divisions=div,
                      precracks=[dict(slit=dict(start=[L / 2, 0.0], end=[L / 2, 4e-4]))]),
        material=dict(youngs_modulus=E, poisson_ratio=nu),
        fracture=dict(G_c=500.0, l0=l0),
        controls=dict(anderson=True, max_iterations=2000),
        boundary_conditions=[
            dict(name="support_left", nodes=dict(lo=[None, None, None], hi=[0.0, 0.0, None]), components=["x", "y", "z"]),
            dict(name="support_right", nodes=dict(lo=[L, None, None], hi=[None, 0.0, None]), components=["y", "z"]),
            dict(name="load", nodes=dict(lo=[L / 2, H, None], hi=[L / 2, None, None]), components=["y"]),
        ],
        schedule=[_ph(steps, 1.0, "load", "y", -du)],
        outputs=dict(reaction=dict(bc="load", component="y"), tip_every=0),
    )


# Tip speeds are differences of successive tip samples; sampling every
# step would measure sub-element jitter of the contour, so tips are sampled
# every 2 us (several elements of travel at the observed speeds).
TIP_SAMPLE_INTERVAL = 2e-6


def _tip_cadence(dt):
    return max(1, round(TIP_SAMPLE_INTERVAL / dt))


def _kalthoff(profile):
    # Half plate 100 x 100 mm, notch 50 mm long at 25 mm from the lower
    # (symmetry) edge; impact on the left edge below the notch.
    # rho = 8000 kg/m^3, E = 190 GPa, nu = 0.3, G_c = 2.213e4 J/m^2,
    # v0 = 16.5 m/s reached after t0 = 1 us.
    if profile == "desk":
        n, l0, dt, steps = 104, 1.95e-3, 1e-7, 900
    else:
        n, l0, dt, steps = 512, 3.9e-4, 4e-8, 2250
    return dict(
        description="edge-cracked plate under impact (dynamic shear)",
        geometry=dict(extents=[0.1, 0.1], divisions=[n, n],
                      precracks=[dict(slit=dict(start=[0.0, 0.025], end=[0.05, 0.025]))]),
        material=dict(youngs_modulus=190e9, poisson_ratio=0.3, density=8000.0),
        fracture=dict(G_c=2.213e4, l0=l0),
        analysis="dynamic",
        controls=dict(max_iterations=500),
        boundary_conditions=[
            dict(name="impact", nodes=dict(lo=[None, None], hi=[0.0, 0.025]), components=["x"]),
            dict(name="symmetry", nodes="bottom", components=["y"]),
        ],
        schedule=[_ph(steps, dt, "impact", "x", 16.5, kind="velocity", t0=1e-6)],
        outputs=dict(tip_every=_tip_cadence(dt)),
    )


def _branching(profile):
    # 100 x 40 mm plate, induced crack from the left edge to the centre,
    # traction of 1 MPa on the top and bottom edges from t = 0.
    # rho = 2450 kg/m^3, E = 32 GPa, nu = 0.2, G_c = 3 J/m^2.
    if profile == "desk":
        nx, ny, l0 = 200, 80, 1e-3
    else:
        nx, ny, l0 = 400, 160, 5e-4
    return dict(
        description="pre-notched plate under sudden tension (dynamic branching)",
        geometry=dict(extents=[0.1, 0.04], divisions=[nx, ny],
                      precracks=[dict(induced_crack=dict(start=[0.0, 0.02], end=[0.05, 0.02], B=1e6))]),
        material=dict(youngs_modulus=32e9, poisson_ratio=0.2, density=2450.0),
        fracture=dict(G_c=3.0, l0=l0),
        analysis="dynamic",
        controls=dict(max_iterations=500),
        boundary_conditions=[
            dict(name="top", nodes="top", kind="load"),
            dict(name="bottom", nodes="bottom", kind="load"),
        ],
        schedule=[dict(steps=800, dt=1e-7, drives=[
            dict(bc="top", component="y", kind="traction", value=1e6, ramp_steps=0),
            dict(bc="bottom", component="y", kind="traction", value=-1e6, ramp_steps=0),
        ])],
        outputs=dict(tip_every=_tip_cadence(1e-7)),
    )


BUILTINS = {
    "sen-tension": ("single-edge-notched plate pulled in tension (quasi-static)", lambda p: _sen("tension", p)),
    "sen-shear": ("single-edge-notched plate sheared along its top edge (quasi-static)", lambda p: _sen("shear", p)),
    "mixed-tension-shear": ("double-edge-notched plate, shear force then tension (quasi-static)", _mixed),
    "three-point-bending": ("notched 3D beam in three-point bending (quasi-static)", _three_point),
    "kalthoff": ("edge-cracked plate hit by an impactor (dynamic)", _kalthoff),
    "branching": ("pre-cracked plate under sudden tension, crack branching (dynamic)", _branching),
}


def builtin_names():
    return list(BUILTINS)


def builtin_scenario(name: str, profile: str = "paper") -> ScenarioConfig:
    """Configuration of a built-in benchmark.

    Parameters
    ----------
    name : str
        One of ``builtin_names()``.
    profile : {"paper", "desk"}
        "paper" carries the fine reference resolutions and runs for hours; "desk"
        coarsens mesh, length scale or time step so a run fits on a laptop.
    """
    if name not in BUILTINS:
        raise KeyError(f"unknown scenario {name!r}; valid names: {', '.join(BUILTINS)}")
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; use one of {PROFILES}")
    doc = BUILTINS[name][1](profile)
    doc = dict(spec_version=SPEC_VERSION, name=f"{name}/{profile}", **copy.deepcopy(doc))
    return validate_document(doc)


# ---------------------------------------------------------------------------
# Problem construction
# ---------------------------------------------------------------------------

def _nodes(mesh, spec):
    if isinstance(spec, str):
        return select_nodes(mesh, spec)
    tol = 1e-9 * max(mesh.extents)
    return select_nodes(mesh, Box(tuple(spec.lo), tuple(spec.hi), tol=tol))


def build_problem(config: ScenarioConfig, threads: int = 1):
    """Mesh, discretization and boundary data of a validated config.

    Returns
    -------
    problem : Problem
    controls : StaggeredControls
    outputs : OutputOptions
    """
    g = config.geometry
    mesh = generate_structured(g.dimension, g.extents, g.divisions, g.origin)
    slits, induced = [], []
    for pc in g.precracks:
        if pc.slit is not None:
            seg = pc.slit.segment()
            copies = "negative"
            mesh = insert_slit(mesh, seg, copies)
            slits.append(seg)
        elif pc.induced_crack is not None:
            induced.append((pc.induced_crack.segment(), pc.induced_crack.B))
    disc = Discretization(mesh, threads=threads)
    m = config.material
    consts = cm.ElasticConstants(m.youngs_modulus, m.poisson_ratio, m.density)
    f = config.fracture
    params = cm.FractureParams(f.G_c, f.l0, f.k)

    H0 = None
    for seg, B in induced:
        h = init_history_crack(disc.qp_coords, seg, B, params)
        H0 = h if H0 is None else np.maximum(H0, h)

    dirichlet, neumann = [], []
    for b in config.boundary_conditions:
        nodes = _nodes(mesh, b.nodes)
        if nodes.size == 0:
            raise ConfigError([(f"boundary_conditions.{b.name}", "selects no nodes")])
        if b.kind == "dirichlet":
            comps = tuple(COMPONENTS[c] for c in b.components)
            dirichlet.append(DirichletBC(b.name, nodes, comps, b.value, b.from_phase))
        else:
            neumann.append(NeumannBC(b.name, nodes, tributary_weights(mesh, nodes)))

    schedule = [
        Phase(ph.steps, ph.dt, [Drive(d.bc, COMPONENTS[d.component], d.kind, d.value, d.t0, d.ramp_steps)
                                for d in ph.drives])
        for ph in config.schedule
    ]
    problem = Problem(
        mesh=mesh, disc=disc, consts=consts, params=params, analysis=config.analysis,
        integrator=TimeIntegrator.from_rho_inf(config.integrator.rho_inf),
        dirichlet=dirichlet, neumann=neumann, schedule=schedule, H0=H0,
        lumped_mass=config.lumped_mass,
        precracks=slits + [seg for seg, _ in induced],
    )
    c = config.controls
    controls = StaggeredControls(
        tolerance=c.tolerance, max_iterations=c.max_iterations, anderson=c.anderson,
        anderson_depth=c.anderson_depth, equilibrium_tolerance=c.equilibrium_tolerance,
        u_solver=c.u_solver, phi_solver=c.phi_solver,
    )
    o = config.outputs
    reaction = (o.reaction.bc, COMPONENTS[o.reaction.component]) if o.reaction else None
    outputs = OutputOptions(reaction=reaction, tip_every=o.tip_every, tip_iso=o.tip_iso,
                            snapshot_every=o.snapshot_every)
    return problem, controls, outputs
