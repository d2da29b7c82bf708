"""Staggered solution of the coupled displacement / phase-field problem.

Every stagger pass performs one Newton update of the displacement with the
degraded tangent, refreshes the history field ``H = max(H_n, psi+)`` at the
quadrature points and solves the (linear) phase-field equation. Passes repeat
until the relative change of ``u``, ``H`` and ``phi`` drops below the
tolerance and the displacement residual is in equilibrium.

The dynamic variant replaces the static balance by the generalized-alpha
form of ``M a + F_int = F_ext``.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field, replace

import numpy as np

from . import constitutive as cm
from . import postprocess as pp
from .fem import Constraints, Discretization, apply_dirichlet, assemble_system_phi, material_response
from .linsolve import ReusedFactorization, SolverError, solve_spd
from .mesh import Mesh, Segment, distance_to_segment

log = logging.getLogger(__name__)

PHI_LOWER_SLACK = -0.05
PHI_UPPER_SLACK = 1.0 + 1e-3


class StepFailure(RuntimeError):
    """A load step could not be completed."""

    def __init__(self, message, step=None, time=None, report=None):
        super().__init__(message)
        self.step = step
        self.time = time
        self.report = report


class InvariantViolation(AssertionError):
    """A run invariant failed beyond its allowed slack."""


# ---------------------------------------------------------------------------
# Controls and integrator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StaggeredControls:
    tolerance: float = 1e-6
    max_iterations: int = 200
    anderson: bool = False
    anderson_depth: int = 50
    equilibrium_tolerance: float = 1e-6
    u_solver: str = "auto"
    phi_solver: str = "cg"

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("stagger tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.anderson and self.anderson_depth < 1:
            raise ValueError("anderson_depth must be at least 1")


@dataclass(frozen=True)
class TimeIntegrator:
    """Generalized-alpha parameters (Chung-Hulbert)."""

    rho_inf: float
    alpha_m: float
    alpha_f: float
    beta: float
    gamma: float

    @classmethod
    def from_rho_inf(cls, rho_inf: float = 0.9) -> "TimeIntegrator":
        if not 0.0 <= rho_inf <= 1.0:
            raise ValueError("spectral radius must lie in [0, 1]")
        am = (2.0 * rho_inf - 1.0) / (rho_inf + 1.0)
        af = rho_inf / (rho_inf + 1.0)
        gamma = 0.5 - am + af
        beta = 0.25 * (1.0 - am + af) ** 2
        return cls(rho_inf, am, af, beta, gamma)


# ---------------------------------------------------------------------------
# Boundary conditions and schedule
# ---------------------------------------------------------------------------

@dataclass
class DirichletBC:
    """Prescribed displacement components on a node set.

    The prescribed value is ``base + offset`` where ``base`` is ``value``, or
    the current displacement when the condition switches on at a later phase
    (``from_phase > 0``), and ``offset`` accumulates the drives.
    """

    name: str
    nodes: np.ndarray
    components: tuple
    value: float = 0.0
    from_phase: int = 0


@dataclass
class NeumannBC:
    """Nodal loads on a node set, distributed by tributary boundary measure."""

    name: str
    nodes: np.ndarray
    weights: np.ndarray  # tributary measure per node, sums to the face measure


@dataclass
class Drive:
    """Time-varying load on a boundary condition.

    kind : "displacement" adds ``value`` per step, "velocity" integrates
    ``v0 = value`` with a linear ramp over ``t0``, "force" ramps the total
    force to ``value`` and "traction" ramps the traction (Pa) to ``value``,
    both over ``ramp_steps`` steps (0 applies the load at once).
    """

    target: str
    component: int
    kind: str
    value: float
    t0: float = 0.0
    ramp_steps: int | None = None


@dataclass
class Phase:
    steps: int
    dt: float
    drives: list = field(default_factory=list)


@dataclass
class Problem:
    mesh: Mesh
    disc: Discretization
    consts: cm.ElasticConstants
    params: cm.FractureParams
    analysis: str = "quasi-static"
    integrator: TimeIntegrator = field(default_factory=TimeIntegrator.from_rho_inf)
    dirichlet: list = field(default_factory=list)
    neumann: list = field(default_factory=list)
    schedule: list = field(default_factory=list)
    H0: np.ndarray | None = None
    lumped_mass: bool = False
    precracks: list = field(default_factory=list)
    M: object = None
    factor_cache: ReusedFactorization = field(default_factory=ReusedFactorization, repr=False)

    def __post_init__(self):
        if self.analysis not in ("quasi-static", "dynamic"):
            raise ValueError(f"unknown analysis {self.analysis!r}")
        if self.analysis == "dynamic":
            if not self.consts.density > 0:
                raise ValueError("dynamic analysis needs a positive density")
            if self.M is None:
                self.M = self.disc.mass_u(self.consts.density, self.lumped_mass)
        names = [b.name for b in self.dirichlet] + [b.name for b in self.neumann]
        if len(set(names)) != len(names):
            raise ValueError("boundary condition names must be unique")
        for ph in self.schedule:
            if ph.steps < 0:
                raise ValueError("phase step counts must be non-negative")
            if not ph.dt > 0:
                raise ValueError("phase time steps must be positive")

    @property
    def dynamic(self) -> bool:
        return self.analysis == "dynamic"

    def bc(self, name):
        for b in self.dirichlet + self.neumann:
            if b.name == name:
                return b
        raise KeyError(f"unknown boundary condition {name!r}")


def tributary_weights(mesh: Mesh, nodes) -> np.ndarray:
    """Consistent nodal weights of a unit traction on the element faces
    whose nodes all belong to ``nodes``."""
    member = np.zeros(mesh.n_nodes, dtype=bool)
    member[np.asarray(nodes)] = True
    if mesh.dimension == 2:
        faces = ((0, 1), (1, 2), (2, 3), (3, 0))
    else:
        faces = ((0, 1, 2, 3), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7))
    w = np.zeros(mesh.n_nodes)
    for f in faces:
        conn = mesh.elements[:, f]
        on = member[conn].all(axis=1)
        if not on.any():
            continue
        X = mesh.nodes[conn[on]]
        if mesh.dimension == 2:
            meas = np.linalg.norm(X[:, 1] - X[:, 0], axis=1)
        else:
            # planar quadrilateral face area from its diagonals
            meas = 0.5 * np.linalg.norm(np.cross(X[:, 2] - X[:, 0], X[:, 3] - X[:, 1]), axis=1)
        np.add.at(w, conn[on].ravel(), np.repeat(meas / len(f), len(f)))
    return w[np.asarray(nodes)]


def init_history_crack(qp_coords, segment: Segment, B: float, params: cm.FractureParams) -> np.ndarray:
    """Initial history that represents a crack along ``segment``.

    ``H0 = B G_c / (2 l0) (1 - 2 d / l0)`` for distances ``d <= l0/2`` from
    the segment, zero beyond.
    """
    if not B > 0:
        raise ValueError("B must be positive")
    d = distance_to_segment(qp_coords, segment)
    l0 = params.l0
    return np.where(d <= 0.5 * l0, B * params.G_c / (2.0 * l0) * (1.0 - 2.0 * d / l0), 0.0)


def update_history(H, psi_plus):
    """Pointwise ``max(H, psi+)``."""
    return np.maximum(H, psi_plus)


def velocity_ramp_displacement(tau, v0, t0):
    """Displacement of a point moving with ``v = v0 min(t/t0, 1)``."""
    tau = np.asarray(tau, dtype=float)
    if t0 <= 0:
        return v0 * tau
    return np.where(tau <= t0, 0.5 * v0 * tau**2 / t0, v0 * (tau - 0.5 * t0))


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------

@dataclass
class SimState:
    t: float
    step: int
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray
    phi: np.ndarray
    H: np.ndarray
    split: cm.SpectralSplit | None = None
    F_int: np.ndarray | None = None
    F_ext: np.ndarray | None = None
    u_old: np.ndarray | None = None
    phi_old: np.ndarray | None = None
    dt_last: float | None = None

    def copy(self) -> "SimState":
        c = replace(self)
        for name in ("u", "v", "a", "phi", "H", "F_int", "F_ext", "u_old", "phi_old"):
            val = getattr(c, name)
            if val is not None:
                setattr(c, name, val.copy())
        return c


@dataclass
class StepTarget:
    """Prescribed data of one step: time, displacement constraints and
    external nodal forces at the end of the step."""

    t: float
    dt: float
    constraints: Constraints
    F_ext: np.ndarray


@dataclass
class StepReport:
    iterations: int
    converged: bool
    errors: list
    residual: float
    residual_tolerance: float


class Loading:
    """Evaluates the schedule step by step."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.dofmap = problem.disc.dofmap
        n_u = self.dofmap.n_u
        self.offset = {}  # (bc name, component) -> prescribed offset
        self.base = {}    # (bc name, component) -> per-node base values
        self.active = set()
        self.force = {}   # (bc name, component) -> total force
        self._n_u = n_u
        self.phase = -1
        self.phase_start_t = 0.0
        self.phase_start_offset = {}
        self.phase_start_force = {}
        for bc in problem.dirichlet:
            for c in bc.components:
                self.offset[(bc.name, c)] = 0.0
                self.base[(bc.name, c)] = np.full(len(bc.nodes), float(bc.value))
        for bc in problem.neumann:
            for c in range(problem.mesh.dimension):
                self.force[(bc.name, c)] = 0.0

    def start_phase(self, index: int, state: SimState):
        """Switch on conditions that start with this phase."""
        self.phase = index
        self.phase_start_t = state.t
        self.phase_start_offset = dict(self.offset)
        self.phase_start_force = dict(self.force)
        for bc in self.problem.dirichlet:
            if bc.from_phase == index and bc.name not in self.active:
                for c in bc.components:
                    dofs = self.dofmap.u_dofs(bc.nodes, c)
                    self.base[(bc.name, c)] = state.u[dofs].copy() if index > 0 else np.full(len(bc.nodes), float(bc.value))
                self.active.add(bc.name)
        # a "traction" or "force" with ramp 0 acts from the phase start
        for d in self._drives(index):
            if d.kind in ("force", "traction") and (d.ramp_steps == 0):
                self.force[(d.target, d.component)] = self._total(d)

    def _drives(self, index):
        if 0 <= index < len(self.problem.schedule):
            return self.problem.schedule[index].drives
        return []

    def _total(self, d):
        if d.kind == "traction":
            return d.value * float(np.sum(self.problem.bc(d.target).weights))
        return d.value

    def advance(self, step_in_phase: int, dt: float, t_new: float) -> None:
        """Update drives to the end of step ``step_in_phase`` (1-based)."""
        phase = self.problem.schedule[self.phase]
        for d in phase.drives:
            key = (d.target, d.component)
            if d.kind == "displacement":
                self.offset[key] = self.phase_start_offset[key] + step_in_phase * d.value
            elif d.kind == "velocity":
                tau = t_new - self.phase_start_t
                self.offset[key] = self.phase_start_offset[key] + float(velocity_ramp_displacement(tau, d.value, d.t0))
            elif d.kind in ("force", "traction"):
                ramp = phase.steps if d.ramp_steps is None else d.ramp_steps
                total = self._total(d)
                start = self.phase_start_force[key]
                frac = 1.0 if ramp == 0 else min(step_in_phase / ramp, 1.0)
                self.force[key] = start + frac * (total - start)
            else:
                raise ValueError(f"unknown drive kind {d.kind!r}")

    def constraints(self) -> Constraints:
        cons = Constraints(self._n_u)
        for bc in self.problem.dirichlet:
            if bc.name not in self.active:
                continue
            for c in bc.components:
                key = (bc.name, c)
                cons.add(self.dofmap.u_dofs(bc.nodes, c), self.base[key] + self.offset[key])
        return cons

    def external_force(self) -> np.ndarray:
        F = np.zeros(self._n_u)
        for bc in self.problem.neumann:
            w = bc.weights / np.sum(bc.weights)
            for c in range(self.problem.mesh.dimension):
                total = self.force[(bc.name, c)]
                if total:
                    np.add.at(F, self.dofmap.u_dofs(bc.nodes, c), total * w)
        return F

    def target(self, t, dt) -> StepTarget:
        return StepTarget(t, dt, self.constraints(), self.external_force())


# ---------------------------------------------------------------------------
# Sub-problems
# ---------------------------------------------------------------------------

def _solve(A, b, method, what):
    try:
        if isinstance(method, ReusedFactorization):
            x, _ = method.solve(A, b)
        else:
            x, _ = solve_spd(A, b, method=method)
    except SolverError as exc:
        raise StepFailure(f"{what} solve failed: {exc}", report=exc.report) from exc
    return x


def solve_phi(problem: Problem, H, method: str = "cg") -> np.ndarray:
    """Phase field for a frozen history."""
    K, F = assemble_system_phi(problem.disc, H, problem.params)
    return _solve(K, F, method, "phase-field")


def _assemble(problem, u, phi, split):
    disc = problem.disc
    _, sig, D, _ = _material(disc, u, phi, problem, split)
    return disc.stiffness_u(D, sig)


def _material(disc, u, phi, problem, split):
    return material_response(disc, u, phi, problem.consts, problem.params, split)


def _split_at(problem, u):
    return cm.spectral_split(problem.disc.strains(u).reshape(-1, problem.disc.nv))


def _psi_plus(problem, split):
    e = cm.split_energies(split, problem.consts.lame_lambda, problem.consts.lame_mu)
    return e.psi_plus.reshape(problem.disc.ne, problem.disc.nq)


class _Dynamics:
    """Generalized-alpha residual and effective operator for one step."""

    def __init__(self, problem: Problem, state: SimState, target: StepTarget):
        ig = problem.integrator
        dt = target.dt
        self.M = problem.M
        self.ig = ig
        self.c0 = 1.0 / (ig.beta * dt * dt)
        self.c1 = 1.0 / (ig.beta * dt)
        self.c2 = (1.0 - 2.0 * ig.beta) / (2.0 * ig.beta)
        self.dt = dt
        self.state = state
        F_ext_n = state.F_ext if state.F_ext is not None else np.zeros_like(state.u)
        self.F_ext_a = (1.0 - ig.alpha_f) * target.F_ext + ig.alpha_f * F_ext_n
        self.F_int_n = state.F_int if state.F_int is not None else np.zeros_like(state.u)

    def accel(self, u):
        s = self.state
        return self.c0 * (u - s.u) - self.c1 * s.v - self.c2 * s.a

    def velocity(self, a_new):
        s, ig = self.state, self.ig
        return s.v + self.dt * ((1.0 - ig.gamma) * s.a + ig.gamma * a_new)

    def residual(self, u, F_int):
        ig = self.ig
        inertia = self.M @ ((1.0 - ig.alpha_m) * self.accel(u) + ig.alpha_m * self.state.a)
        R = self.F_ext_a - inertia - (1.0 - ig.alpha_f) * F_int - ig.alpha_f * self.F_int_n
        scale = max(np.linalg.norm(inertia), np.linalg.norm(F_int), np.linalg.norm(self.F_ext_a))
        return R, scale

    def operator(self, K):
        ig = self.ig
        return ((1.0 - ig.alpha_m) * self.c0) * self.M + (1.0 - ig.alpha_f) * K


def solve_u_quasistatic(problem: Problem, u, phi, constraints: Constraints, F_ext=None, split=None,
                        method: str = "direct"):
    """One Newton update of the static balance for frozen ``phi``."""
    if split is None:
        split = _split_at(problem, u)
    K, F_int = _assemble(problem, u, phi, split)
    F_ext = np.zeros_like(u) if F_ext is None else F_ext
    du_c = Constraints(constraints.n_dofs).add(constraints.dofs, constraints.values - u[constraints.dofs])
    A, b = apply_dirichlet(K, F_ext - F_int, du_c)
    return u + _solve(A, b, method, "displacement")


def solve_u_dynamic(problem: Problem, state: SimState, target: StepTarget, u=None, phi=None, split=None,
                    method: str = "cg"):
    """One Newton update of the generalized-alpha balance.

    Returns ``(u, v, a)`` at the end of the step.
    """
    u = state.u.copy() if u is None else u
    phi = state.phi if phi is None else phi
    if split is None:
        split = _split_at(problem, u)
    dyn = _Dynamics(problem, state, target)
    K, F_int = _assemble(problem, u, phi, split)
    R, _ = dyn.residual(u, F_int)
    cons = target.constraints
    du_c = Constraints(cons.n_dofs).add(cons.dofs, cons.values - u[cons.dofs])
    A, b = apply_dirichlet(dyn.operator(K), R, du_c)
    u_new = u + _solve(A, b, method, "displacement")
    a_new = dyn.accel(u_new)
    return u_new, dyn.velocity(a_new), a_new


class _Anderson:
    """Type-II Anderson mixing of a fixed-point sequence."""

    def __init__(self, depth):
        self.depth = depth
        self.x = []
        self.g = []

    def __call__(self, x, g):
        self.x.append(x.copy())
        self.g.append(g.copy())
        if len(self.x) > self.depth + 1:
            self.x.pop(0)
            self.g.pop(0)
        if len(self.x) < 2:
            return g
        f = [gi - xi for gi, xi in zip(self.g, self.x)]
        dF = np.stack([f[i + 1] - f[i] for i in range(len(f) - 1)], axis=1)
        dG = np.stack([self.g[i + 1] - self.g[i] for i in range(len(f) - 1)], axis=1)
        gamma, *_ = np.linalg.lstsq(dF, f[-1], rcond=None)
        return g - dG @ gamma


def _rel_change(new, old):
    return float(np.linalg.norm(new - old) / max(1.0, np.linalg.norm(new)))


def staggered_step(problem: Problem, state: SimState, target: StepTarget, controls: StaggeredControls = None):
    """Advance ``state`` to ``target`` with the staggered scheme.

    Returns the new state and a ``StepReport``. Raises ``StepFailure`` when
    the passes do not converge within ``controls.max_iterations``.
    """
    controls = controls or StaggeredControls()
    dynamic = problem.dynamic
    u_method = controls.u_solver
    if u_method == "auto":
        # mass-dominated dynamic operators are well conditioned for CG
        u_method = "cg" if dynamic else "direct"
    if u_method == "direct":
        u_method = problem.factor_cache
    cons = target.constraints
    free = cons.free

    # linear extrapolation from the last two accepted steps
    if state.u_old is not None and state.dt_last:
        r = target.dt / state.dt_last
        u = state.u + r * (state.u - state.u_old)
        phi = state.phi + r * (state.phi - state.phi_old)
    else:
        u = state.u.copy()
        phi = state.phi.copy()
    H_n = state.H
    H = H_n.copy()
    split = _split_at(problem, u)
    dyn = _Dynamics(problem, state, target) if dynamic else None
    anderson = _Anderson(controls.anderson_depth) if controls.anderson else None

    errors = []
    best, best_at = np.inf, 0
    it = 0
    while True:
        K, F_int = _assemble(problem, u, phi, split)
        if dynamic:
            R, scale = dyn.residual(u, F_int)
        else:
            R = target.F_ext - F_int
            scale = max(np.linalg.norm(F_int), np.linalg.norm(target.F_ext))
        rnorm = float(np.linalg.norm(R[free]))
        rtol = controls.equilibrium_tolerance * max(1.0, scale)
        if it > 0 and errors[-1] <= controls.tolerance and rnorm <= rtol:
            break
        if it >= controls.max_iterations:
            raise StepFailure(
                f"staggered scheme did not converge in {it} passes (last change {errors[-1]:.3e}, "
                f"residual {rnorm:.3e} > {rtol:.3e})" if errors else "no stagger pass allowed",
                step=state.step + 1, time=target.t,
                report=StepReport(it, False, errors, rnorm, rtol),
            )
        du_c = Constraints(cons.n_dofs).add(cons.dofs, cons.values - u[cons.dofs])
        A = dyn.operator(K) if dynamic else K
        A, b = apply_dirichlet(A, R, du_c)
        try:
            u_new = u + _solve(A, b, u_method, "displacement")
        except StepFailure as exc:
            exc.step, exc.time = state.step + 1, target.t
            raise
        split = _split_at(problem, u_new)
        H_new = update_history(H_n, _psi_plus(problem, split))
        phi_new = solve_phi(problem, H_new, controls.phi_solver)
        if anderson is not None:
            phi_new = anderson(phi, phi_new)
        errors.append(max(_rel_change(u_new, u), _rel_change(H_new, H), _rel_change(phi_new, phi)))
        if anderson is not None:
            # mixing can stall in unstable propagation; plain passes always
            # contract there, so fall back once progress stops
            if errors[-1] < best:
                best, best_at = errors[-1], it
            elif it - best_at >= controls.anderson_depth:
                anderson = None
        u, H, phi = u_new, H_new, phi_new
        it += 1

    new = SimState(
        t=target.t, step=state.step + 1, u=u, v=state.v, a=state.a, phi=phi, H=H, split=split,
        F_int=F_int, F_ext=target.F_ext, u_old=state.u, phi_old=state.phi, dt_last=target.dt,
    )
    if dynamic:
        new.a = dyn.accel(u)
        new.v = dyn.velocity(new.a)
    return new, StepReport(it, True, errors, rnorm, rtol)


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

@dataclass
class OutputOptions:
    reaction: tuple | None = None  # (bc name, component)
    tip_every: int = 0
    tip_iso: float = pp.DEFAULT_ISO
    snapshot_every: int = 0


@dataclass
class RunResult:
    state: SimState
    load_displacement: list = field(default_factory=list)  # (step, t, displacement, reaction)
    energies: list = field(default_factory=list)           # (step, t, E_el, E_d)
    tips: list = field(default_factory=list)               # (step, t, x, y, speed, ident)
    iterations: list = field(default_factory=list)
    tracker: pp.CrackTracker | None = None
    warnings: list = field(default_factory=list)
    history_monotone: bool = True
    dissipation_monotone: bool = True
    phi_range: tuple = (0.0, 0.0)
    converged: bool = True
    wall_time: float = 0.0
    steps: int = 0

    @property
    def peak_reaction(self) -> float:
        if not self.load_displacement:
            return float("nan")
        return float(np.max([r[3] for r in self.load_displacement]))


def initial_state(problem: Problem, controls: StaggeredControls | None = None) -> SimState:
    controls = controls or StaggeredControls()
    disc = problem.disc
    n_u = disc.dofmap.n_u
    H = np.zeros((disc.ne, disc.nq)) if problem.H0 is None else np.array(problem.H0, dtype=float)
    phi = solve_phi(problem, H, controls.phi_solver) if np.any(H) else np.zeros(disc.dofmap.n_phi)
    u = np.zeros(n_u)
    split = _split_at(problem, u)
    return SimState(0.0, 0, u, np.zeros(n_u), np.zeros(n_u), phi, H, split, np.zeros(n_u), np.zeros(n_u))


def _initial_acceleration(problem, state, loading, controls):
    """Solve ``M a0 = F_ext(0) - F_int(u0)`` with zero acceleration on
    constrained dofs."""
    F = loading.external_force()
    state.F_ext = F
    rhs = F - state.F_int
    if not np.any(rhs):
        return
    cons = loading.constraints()
    zero = Constraints(cons.n_dofs).add(cons.dofs, 0.0)
    A, b = apply_dirichlet(problem.M, rhs, zero)
    state.a = _solve(A, b, "cg", "initial acceleration")


def run(problem, controls: StaggeredControls | None = None, outputs: OutputOptions | None = None,
        sink=None, progress=None, max_steps: int | None = None, stop=None) -> RunResult:
    """Execute the whole load schedule.

    Parameters
    ----------
    problem : Problem
    sink : object, optional
        Receives ``snapshot(state, problem)`` calls at the snapshot cadence
        and at step 0.
    progress : callable, optional
        Called as ``progress(state, report, info)`` after each step, where
        ``info`` holds the step's energies and, when recorded, the
        displacement, reaction, tip count and largest tip speed.
    max_steps : int, optional
        Stop early after this many steps (the schedule prefix).
    stop : callable, optional
        ``stop(state, info)`` returning true ends the run after that step.
    """
    controls = controls or StaggeredControls()
    outputs = outputs or OutputOptions()
    t_start = _time.perf_counter()
    state = initial_state(problem, controls)
    loading = Loading(problem)
    res = RunResult(state)
    if outputs.tip_every and problem.precracks:
        v_R = pp.rayleigh_speed(problem.consts.youngs_modulus, problem.consts.poisson_ratio,
                                problem.consts.density) if problem.consts.density > 0 else float("nan")
        res.tracker = pp.CrackTracker(problem.mesh, problem.precracks[0], outputs.tip_iso, problem.params.l0, v_R)
        _record_tips(res, state)
    e_d_max = pp.dissipated_energy(problem.disc, state.phi, problem.params)
    phi_lo, phi_hi = float(state.phi.min()), float(state.phi.max())
    if sink is not None:
        sink.snapshot(state, problem)

    total = 0
    halt = False
    for p_idx, phase in enumerate(problem.schedule):
        loading.start_phase(p_idx, state)
        if p_idx == 0 and problem.dynamic:
            _initial_acceleration(problem, state, loading, controls)
        elif p_idx == 0:
            state.F_ext = loading.external_force()
        for k in range(1, phase.steps + 1):
            if max_steps is not None and total >= max_steps:
                halt = True
                break
            t_new = state.t + phase.dt
            loading.advance(k, phase.dt, t_new)
            target = loading.target(t_new, phase.dt)
            H_prev = state.H
            try:
                state, report = staggered_step(problem, state, target, controls)
            except StepFailure as exc:
                res.converged = False
                res.state = state
                res.wall_time = _time.perf_counter() - t_start
                if exc.step is None:
                    exc.step, exc.time = state.step + 1, t_new
                raise
            total += 1
            res.iterations.append(report.iterations)
            if not np.all(state.H >= H_prev):
                res.history_monotone = False
                raise InvariantViolation(f"history decreased at step {state.step}")
            lo, hi = float(state.phi.min()), float(state.phi.max())
            phi_lo, phi_hi = min(phi_lo, lo), max(phi_hi, hi)
            if lo < PHI_LOWER_SLACK or hi > PHI_UPPER_SLACK:
                raise InvariantViolation(f"phase field left [{PHI_LOWER_SLACK}, {PHI_UPPER_SLACK}] at step "
                                         f"{state.step}: min {lo:.4g}, max {hi:.4g}")
            if lo < 0.0 or hi > 1.0:
                msg = f"step {state.step}: phase field outside [0, 1] (min {lo:.3g}, max {hi:.3g})"
                log.warning(msg)
                res.warnings.append(msg)

            row = None
            if outputs.reaction is not None:
                name, comp = outputs.reaction
                bc = problem.bc(name)
                reac = pp.reaction_force(state.F_int, problem.disc.dofmap, bc.nodes, comp)
                row = (state.step, state.t, loading.offset.get((name, comp), 0.0), reac)
                res.load_displacement.append(row)
            e_el = pp.elastic_energy(problem.disc, state.u, state.phi, problem.consts, problem.params, state.split)
            e_d = pp.dissipated_energy(problem.disc, state.phi, problem.params)
            if e_d < e_d_max - 1e-9 * abs(e_d_max):
                res.dissipation_monotone = False
            e_d_max = max(e_d_max, e_d)
            res.energies.append((state.step, state.t, e_el, e_d))
            info = {"elastic_energy": e_el, "dissipated_energy": e_d}
            if row is not None:
                info["displacement"], info["reaction"] = row[2], row[3]
            if res.tracker is not None and state.step % outputs.tip_every == 0:
                sample = _record_tips(res, state)
                speeds = [t.speed for t in sample.tips if np.isfinite(t.speed)]
                info["tips"] = len(sample.tips)
                info["tip_speed"] = max(speeds) if speeds else float("nan")
            if sink is not None and outputs.snapshot_every and state.step % outputs.snapshot_every == 0:
                sink.snapshot(state, problem)
            if progress is not None:
                progress(state, report, info)
            if stop is not None and stop(state, info):
                halt = True
                break
        if halt:
            break
    res.state = state
    res.steps = total
    res.phi_range = (phi_lo, phi_hi)
    res.wall_time = _time.perf_counter() - t_start
    return res


def _record_tips(res: RunResult, state: SimState):
    sample = res.tracker.update(state.phi, state.t)
    for tip in sample.tips:
        res.tips.append((state.step, state.t, float(tip.position[0]), float(tip.position[1]), tip.speed, tip.ident))
    return sample
