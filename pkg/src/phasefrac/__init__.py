"""Phase-field brittle fracture on structured finite-element grids.

Typical use goes through a scenario::

    from phasefrac import builtin_scenario, build_problem, run

    cfg = builtin_scenario("sen-tension", "desk")
    problem, controls, outputs = build_problem(cfg)
    result = run(problem, controls, outputs)
"""

from .constitutive import ElasticConstants, FractureParams, critical_stress_1d, spectral_split
from .mesh import Mesh, Segment, generate_structured
from .postprocess import CrackTracker, crack_tips, rayleigh_speed
from .scenario import (
    ConfigError,
    ScenarioConfig,
    apply_overrides,
    build_problem,
    builtin_names,
    builtin_scenario,
    parse_config,
    serialize,
)
from .stepper import Problem, RunResult, StaggeredControls, StepFailure, run

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CrackTracker",
    "ElasticConstants",
    "FractureParams",
    "Mesh",
    "Problem",
    "RunResult",
    "ScenarioConfig",
    "Segment",
    "StaggeredControls",
    "StepFailure",
    "apply_overrides",
    "build_problem",
    "builtin_names",
    "builtin_scenario",
    "critical_stress_1d",
    "crack_tips",
    "generate_structured",
    "parse_config",
    "rayleigh_speed",
    "run",
    "serialize",
    "spectral_split",
]
