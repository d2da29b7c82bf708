import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phasefrac import scenario as sc
from phasefrac.scenario import ConfigError


def minimal_doc():
    return {
        "spec_version": 1,
        "geometry": {"extents": [1e-3, 1e-3], "divisions": [4, 4]},
        "material": {"youngs_modulus": 210e9, "poisson_ratio": 0.3},
        "fracture": {"G_c": 2700.0, "l0": 1.5e-5},
        "schedule": [{"steps": 2, "dt": 1.0}],
    }


def error_paths(doc):
    with pytest.raises(ConfigError) as info:
        sc.validate_document(doc)
    return [p for p, _ in info.value.errors]


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------

def test_minimal_document_defaults():
    cfg = sc.validate_document(minimal_doc())
    assert cfg.fracture.k == 1e-9
    assert cfg.controls.tolerance == 1e-6
    assert cfg.integrator.rho_inf == 0.9
    assert cfg.analysis == "quasi-static"
    assert cfg.geometry.dimension == 2 and cfg.geometry.precracks == ()
    doc = minimal_doc()
    doc["geometry"]["precracks"] = [{"induced_crack": {"start": [0, 0], "end": [1e-4, 0]}}]
    assert sc.validate_document(doc).geometry.precracks[0].induced_crack.B == 1e6


@pytest.mark.parametrize("nu", [0.5, 0.7, -1.0])
def test_poisson_ratio_bound(nu):
    doc = minimal_doc()
    doc["material"]["poisson_ratio"] = nu
    assert error_paths(doc) == ["material.poisson_ratio"]


def test_slit_and_induced_crack_are_exclusive():
    doc = minimal_doc()
    seg = {"start": [0, 5e-4], "end": [5e-4, 5e-4]}
    doc["geometry"]["precracks"] = [{"slit": seg, "induced_crack": seg}]
    assert error_paths(doc) == ["geometry.precracks.0"]


def test_unknown_key_is_named():
    doc = minimal_doc()
    doc["material"]["colour"] = "grey"
    with pytest.raises(ConfigError, match="colour") as info:
        sc.validate_document(doc)
    assert info.value.path == "material.colour"


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d.update(schedule=[]), "schedule"),
    (lambda d: d.update(analysis="dynamic"), "material.density"),
    (lambda d: d.pop("fracture"), "fracture"),
    (lambda d: d.update(spec_version=2), "spec_version"),
    (lambda d: d["geometry"].update(divisions=[4, 0]), "geometry.divisions"),
    (lambda d: d["geometry"].update(extents=[1.0]), "geometry"),
    (lambda d: d["fracture"].update(l0=0.0), "fracture.l0"),
    (lambda d: d["schedule"][0].update(drives=[{"bc": "top", "component": "y", "kind": "displacement",
                                                 "value": 1.0}]), "schedule.0.drives.0.bc"),
])
def test_error_paths(mutate, path):
    doc = minimal_doc()
    mutate(doc)
    assert path in error_paths(doc)


def test_drive_kind_must_match_condition():
    doc = minimal_doc()
    doc["boundary_conditions"] = [{"name": "top", "nodes": "top", "components": ["y"]},
                                  {"name": "push", "nodes": "left", "kind": "load"}]
    doc["schedule"][0]["drives"] = [{"bc": "top", "component": "y", "kind": "force", "value": 1.0}]
    assert error_paths(doc) == ["schedule.0.drives.0.kind"]
    doc["schedule"][0]["drives"] = [{"bc": "top", "component": "x", "kind": "displacement", "value": 1.0}]
    assert error_paths(doc) == ["schedule.0.drives.0.component"]
    doc["schedule"][0]["drives"] = [{"bc": "push", "component": "x", "kind": "velocity", "value": 1.0}]
    assert error_paths(doc) == ["schedule.0.drives.0.kind"]


def test_reaction_needs_dirichlet_condition():
    doc = minimal_doc()
    doc["outputs"] = {"reaction": {"bc": "nowhere", "component": "y"}}
    assert error_paths(doc) == ["outputs.reaction.bc"]


def test_malformed_json_reports_location():
    text = json.dumps(minimal_doc())[:-5]
    with pytest.raises(ConfigError, match="line 1 column") as info:
        sc.parse_config(text)
    assert info.value.path == ""
    with pytest.raises(ConfigError, match="JSON object"):
        sc.parse_config("[1, 2]")


# ---------------------------------------------------------------------------
# Serialization, hashing and overrides
# ---------------------------------------------------------------------------

def test_round_trip_all_builtins():
    for name in sc.builtin_names():
        for profile in sc.PROFILES:
            cfg = sc.builtin_scenario(name, profile)
            assert sc.parse_config(sc.serialize(cfg)) == cfg
            assert sc.parse_config(sc.serialize(cfg, indent=None)) == cfg


def test_hash_ignores_key_order_and_spelled_out_defaults():
    doc = minimal_doc()
    reordered = dict(reversed(list(doc.items())))
    explicit = json.loads(json.dumps(doc))
    explicit["fracture"]["k"] = 1e-9
    h = sc.config_hash(sc.validate_document(doc))
    assert sc.config_hash(sc.validate_document(reordered)) == h
    assert sc.config_hash(sc.validate_document(explicit)) == h


OVERRIDES = st.sampled_from([
    ("fracture.G_c", st.floats(1.0, 1e5)),
    ("fracture.l0", st.floats(1e-6, 1e-3)),
    ("material.poisson_ratio", st.floats(-0.9, 0.49)),
    ("controls.max_iterations", st.integers(1, 1000)),
    ("schedule.0.steps", st.integers(0, 1000)),
    ("controls.anderson", st.booleans()),
]).flatmap(lambda kv: st.tuples(st.just(kv[0]), kv[1]))


@settings(max_examples=60, deadline=None)
@given(OVERRIDES)
def test_hash_changes_iff_a_field_changes(kv):
    key, value = kv
    base = sc.validate_document(minimal_doc())
    cfg = sc.apply_overrides(base, [f"{key}={json.dumps(value)}"])
    assert sc.parse_config(sc.serialize(cfg)) == cfg
    changed = sc.to_document(cfg) != sc.to_document(base)
    assert (sc.config_hash(cfg) != sc.config_hash(base)) == changed


def test_overrides():
    cfg = sc.builtin_scenario("kalthoff", "desk")
    out = sc.apply_overrides(cfg, ["fracture.G_c=1e4", "controls.anderson=true", "name=sweep"])
    assert out.fracture.G_c == 1e4 and out.controls.anderson is True and out.name == "sweep"
    assert cfg.fracture.G_c == 2.213e4
    with pytest.raises(ConfigError) as info:
        sc.apply_overrides(cfg, ["material.poisson_ratio=0.7"])
    assert info.value.path == "material.poisson_ratio"
    with pytest.raises(ConfigError):
        sc.apply_overrides(cfg, ["schedule.9.steps=1"])
    with pytest.raises(ConfigError):
        sc.apply_overrides(cfg, ["fracture.G_c"])
    with pytest.raises(ConfigError):
        sc.apply_overrides(cfg, ["fracture.G_c.x=1"])


def test_json_schema_matches_shipped_copy():
    from importlib import resources
    from pathlib import Path

    schema = sc.json_schema()
    assert "material" in schema["properties"] and "schedule" in schema["required"]
    shipped = json.loads(resources.files("phasefrac").joinpath("schema.json").read_text())
    assert shipped == schema
    docs = Path(__file__).resolve().parents[1] / "docs" / "schema.json"
    if docs.is_file():
        assert json.loads(docs.read_text()) == schema


# ---------------------------------------------------------------------------
# Built-ins
# ---------------------------------------------------------------------------

def test_builtin_names_and_lookup_errors():
    assert sc.builtin_names() == ["sen-tension", "sen-shear", "mixed-tension-shear", "three-point-bending",
                                  "kalthoff", "branching"]
    with pytest.raises(KeyError, match="sen-tension"):
        sc.builtin_scenario("sen-compression")
    with pytest.raises(ValueError, match="profile"):
        sc.builtin_scenario("kalthoff", "huge")


def test_builtin_reference_values():
    assert sc.builtin_scenario("sen-tension").fracture.G_c == 2700.0
    k = sc.builtin_scenario("kalthoff")
    drive = k.schedule[0].drives[0]
    assert (drive.kind, drive.value, drive.t0) == ("velocity", 16.5, 1e-6)
    assert sc.builtin_scenario("branching").fracture.l0 == 5.0e-4


def test_builtin_materials():
    sen = sc.builtin_scenario("sen-shear", "desk")
    assert (sen.material.youngs_modulus, sen.material.poisson_ratio) == (210e9, 0.3)
    k = sc.builtin_scenario("kalthoff", "desk")
    assert (k.material.youngs_modulus, k.material.density, k.fracture.G_c) == (190e9, 8000.0, 2.213e4)
    b = sc.builtin_scenario("branching", "desk")
    assert (b.material.youngs_modulus, b.material.poisson_ratio, b.material.density, b.fracture.G_c) == \
        (32e9, 0.2, 2450.0, 3.0)
    assert b.geometry.precracks[0].induced_crack.B == 1e6
    t = sc.builtin_scenario("three-point-bending", "desk")
    E, nu = t.material.youngs_modulus, t.material.poisson_ratio
    assert E * nu / ((1 + nu) * (1 - 2 * nu)) == pytest.approx(12e9, rel=1e-12)
    assert E / (2 * (1 + nu)) == pytest.approx(8e9, rel=1e-12)
    assert t.fracture.G_c == 500.0 and t.geometry.dimension == 3
    m = sc.builtin_scenario("mixed-tension-shear", "desk")
    assert (m.material.youngs_modulus, m.material.poisson_ratio) == (32.8e9, 0.2)


def schedule_end(cfg):
    return sum(p.steps for p in cfg.schedule), sum(p.steps * p.dt for p in cfg.schedule)


def test_desk_schedule_arithmetic():
    steps, _ = schedule_end(sc.builtin_scenario("sen-tension", "desk"))
    assert steps == 600
    steps, t = schedule_end(sc.builtin_scenario("branching", "desk"))
    assert steps == 800 and t == pytest.approx(80e-6)
    steps, t = schedule_end(sc.builtin_scenario("kalthoff", "desk"))
    assert t == pytest.approx(90e-6) and sc.builtin_scenario("kalthoff", "desk").schedule[0].dt == 1e-7


def test_desk_resolutions():
    sen = sc.builtin_scenario("sen-tension", "desk")
    assert sen.fracture.l0 == 3e-5
    h = sen.geometry.extents[0] / sen.geometry.divisions[0]
    assert h == pytest.approx(1.5e-5, rel=0.02)
    k = sc.builtin_scenario("kalthoff", "desk")
    assert k.fracture.l0 == 1.95e-3
    assert k.geometry.extents[0] / k.geometry.divisions[0] == pytest.approx(9.75e-4, rel=0.02)
    b = sc.builtin_scenario("branching", "desk")
    assert b.fracture.l0 == 1e-3
    assert b.geometry.extents[0] / b.geometry.divisions[0] == pytest.approx(5e-4, rel=1e-12)


@pytest.mark.parametrize("name", sc.builtin_names())
def test_build_desk_problems(name):
    cfg = sc.builtin_scenario(name, "desk")
    problem, controls, outputs = sc.build_problem(cfg)
    assert problem.mesh.n_elements == int(np.prod(cfg.geometry.divisions))
    assert problem.dynamic == (cfg.analysis == "dynamic")
    assert len(problem.schedule) == len(cfg.schedule)
    for bc in problem.dirichlet + problem.neumann:
        assert len(bc.nodes) > 0, bc.name
    assert controls.tolerance == cfg.controls.tolerance
    if cfg.outputs.reaction is not None:
        assert outputs.reaction[0] == cfg.outputs.reaction.bc


def test_build_induced_crack_history():
    cfg = sc.builtin_scenario("branching", "desk")
    problem, _, _ = sc.build_problem(cfg)
    l0, G_c = cfg.fracture.l0, cfg.fracture.G_c
    assert problem.H0.max() <= 1e6 * G_c / (2 * l0)
    assert problem.H0.max() > 0.5 * 1e6 * G_c / (2 * l0)
    assert np.count_nonzero(problem.H0) < 0.05 * problem.H0.size


def test_build_slit_duplicates_nodes():
    cfg = sc.builtin_scenario("sen-tension", "desk")
    problem, _, _ = sc.build_problem(cfg)
    n = cfg.geometry.divisions[0]
    assert problem.mesh.n_nodes == (n + 1) ** 2 + n // 2
