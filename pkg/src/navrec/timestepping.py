"""Linearized Crank-Nicolson and BDF2 time stepping with the four
convective forms, plus the companion scalar vorticity co-stepper.

The advecting velocity is the extrapolation 1.5*u^n - 0.5*u^{n-1}
(2*u^n - u^{n-1} for BDF2), bootstrapped with u^0 at the first step, and is
replaced by its divergence-free reconstruction for the modified convective
form.  The initial velocity is interpolated and then L2-projected onto the
discretely divergence-free subspace so the discrete conservation identities
hold from the first step.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp

from .assembly import (ConvectiveForm, assemble_convection, assemble_div,
                       assemble_div_div, assemble_load, assemble_mass,
                       assemble_stiffness, assemble_vorticity_operator,
                       pressure_mean_vector)
from .diagnostics import DiagnosticsRecord, l2_error
from .elements import ElementKind
from .linalg import (CachedFactorSolver, ConstraintConflictError,
                     Factorization, LinalgError, apply_dirichlet,
                     collect_constraints)
from .mesh import Mesh, MeshError
from .quadrature import DEFAULT_DEGREE
from .reconstruction import ReconstructionPlan, Reconstructor
from .spaces import Field, Space, build_space, field_at_quadrature, interpolate

STEPPERS = ("cn_picard1", "cn_picard2", "bdf2")
BC_KINDS = ("noslip", "nopen", "dirichlet", "donothing")


class ConfigError(ValueError):
    pass


class BlowUpError(RuntimeError):
    def __init__(self, step, time, reason):
        self.step = step
        self.time = time
        super().__init__(f"blow-up at step {step} (t={time:g}): {reason}")


@dataclass(frozen=True)
class BC:
    kind: str
    value: object = None  # g(x, y, t) -> (2,) + shape for "dirichlet"

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise ConfigError(f"unknown BC kind {self.kind!r}")
        if self.kind == "dirichlet" and self.value is None:
            raise ConfigError("dirichlet BC needs a value function")


@dataclass
class SchemeConfig:
    mesh: Mesh
    vel_kind: ElementKind
    pres_kind: ElementKind
    form: ConvectiveForm | None
    dt: float
    t_end: float
    nu: float
    stepper: str = "cn_picard1"
    bcs: dict = dc_field(default_factory=dict)
    f: object = None          # body force f(x, y, t)
    u0: object = None         # initial velocity u0(x, y)
    plan: ReconstructionPlan | None = None
    vorticity: bool = False
    curl_f: object = None
    project_initial: bool = True
    quad_degree: int = DEFAULT_DEGREE

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise ConfigError("t_end must be at least one step")
        if self.nu < 0:
            raise ConfigError(f"viscosity must be >= 0, got {self.nu}")
        if self.stepper not in STEPPERS:
            raise ConfigError(f"unknown stepper {self.stepper!r}")
        if self.form == ConvectiveForm.MOD_CONV and self.plan is None:
            raise ConfigError("modified convection requires a reconstruction plan")
        if self.vorticity and self.form != ConvectiveForm.MOD_CONV:
            raise ConfigError(
                "the vorticity co-stepper advects with the reconstructed "
                "field and requires the modified convective form")
        tags = {self.mesh.boundary_tags[int(e)] for e in self.mesh.boundary_edges}
        missing = tags - set(self.bcs)
        if missing:
            raise ConfigError(f"no BC recipe for boundary tags {sorted(missing)}")

    @property
    def num_steps(self) -> int:
        n = int(round(self.t_end / self.dt))
        return max(n, 1)


@dataclass
class State:
    u: Field
    u_prev: Field | None
    p: Field | None
    w: Field | None
    step: int
    t: float


@dataclass
class RunResult:
    records: list
    initial: DiagnosticsRecord
    status: str               # completed | blowup | solver_failure
    state: State | None
    failure_time: float | None = None
    failure_reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "completed"


class _BCInfo:
    """Per-edge boundary recipes resolved into dof constraint specs."""

    def __init__(self, space: Space, config: SchemeConfig):
        mesh = space.mesh
        self.space = space
        self.zero_pairs = []           # (dof, 0.0), time-independent
        self.dirichlet = {}            # tag -> (dofs, comps, xs, ys)
        self.zero_normal_edges = []    # u.n = 0 enforced here
        self.projection_edges = {}     # for the Taylor-Hood projector
        self.has_outflow = False
        groups: dict[str, list] = {}

        for e in mesh.boundary_edges:
            e = int(e)
            tag = mesh.boundary_tags[e]
            bc = config.bcs[tag]
            lo, hi = mesh.edges[e]
            dvec = mesh.vertices[hi] - mesh.vertices[lo]
            if abs(dvec[0]) > 1e-12 and abs(dvec[1]) > 1e-12:
                raise MeshError(
                    "boundary handling assumes axis-aligned boundary edges")
            normal_comp = 0 if abs(dvec[0]) <= 1e-12 else 1
            nodes = space.edge_scalar_nodes(e)
            if bc.kind == "noslip":
                for s in nodes:
                    for c in (0, 1):
                        self.zero_pairs.append((space.component_dof(s, c), 0.0))
                self.zero_normal_edges.append(e)
                self.projection_edges[e] = "full"
            elif bc.kind == "nopen":
                for s in nodes:
                    self.zero_pairs.append(
                        (space.component_dof(s, normal_comp), 0.0))
                self.zero_normal_edges.append(e)
                self.projection_edges[e] = "normal"
            elif bc.kind == "dirichlet":
                groups.setdefault(tag, []).extend(nodes)
                self.projection_edges[e] = "full"
            elif bc.kind == "donothing":
                self.has_outflow = True

        pos = space.dof_positions
        for tag, nodes in groups.items():
            nodes = sorted(set(nodes))
            dofs, comps, xs, ys = [], [], [], []
            for s in nodes:
                for c in (0, 1):
                    dofs.append(space.component_dof(s, c))
                    comps.append(c)
                    xs.append(pos[s, 0])
                    ys.append(pos[s, 1])
            self.dirichlet[tag] = (np.array(dofs), np.array(comps),
                                   np.array(xs), np.array(ys))

    def constraints(self, config: SchemeConfig, t: float) -> dict[int, float]:
        pairs = list(self.zero_pairs)
        for tag, (dofs, comps, xs, ys) in self.dirichlet.items():
            g = np.asarray(config.bcs[tag].value(xs, ys, t), dtype=np.float64)
            vals = g[comps, np.arange(len(dofs))]
            pairs.extend(zip(dofs.tolist(), vals.tolist()))
        return collect_constraints(pairs)


class Workspace:
    """Static discrete operators shared by every step of one run."""

    def __init__(self, config: SchemeConfig):
        mesh = config.mesh
        deg = config.quad_degree
        self.vel_space = build_space(mesh, config.vel_kind)
        self.pres_space = build_space(mesh, config.pres_kind)
        self.bc = _BCInfo(self.vel_space, config)
        self.M = assemble_mass(self.vel_space, deg)
        self.A = assemble_stiffness(self.vel_space, deg)
        self.B = assemble_div(self.vel_space, self.pres_space, deg)
        self.n_u = self.vel_space.ndof
        self.n_p = self.pres_space.ndof
        self.mean_active = not self.bc.has_outflow
        self._b_scale = abs(self.B).max()
        if self.mean_active:
            m = pressure_mean_vector(self.pres_space, deg)
            self.mcol = sp.csr_matrix(
                (m, (np.arange(self.n_p), np.zeros(self.n_p, int))),
                shape=(self.n_p, 1))
            self._m_scale = np.abs(m).max()
            self.n_total = self.n_u + self.n_p + 1
        else:
            self.mcol = None
            self.n_total = self.n_u + self.n_p

        self.reconstructor = None
        if config.form == ConvectiveForm.MOD_CONV:
            self.reconstructor = Reconstructor(
                config.plan, self.vel_space,
                zero_normal_edges=self.bc.zero_normal_edges,
                dirichlet_edges=self.bc.projection_edges,
                mean_constraint=self.mean_active)

        self.w_space = None
        if config.vorticity:
            self.w_space = build_space(mesh, ElementKind.ScalarP2)
            self.Mw = assemble_mass(self.w_space, deg)
            self.Aw = assemble_stiffness(self.w_space, deg)
            if config.f is not None and config.curl_f is None:
                raise ConfigError(
                    "vorticity co-stepper needs curl_f when f is nonzero")

        # factor reuse across steps: sparsity is constant and the matrix
        # moves slowly, so a stale LU refines to direct accuracy cheaply
        self.solver = CachedFactorSolver()
        self.w_solver = CachedFactorSolver()

        # quadratic-form monitors: same degree-8 quadrature as the direct
        # integrals, evaluated as matrix/vector contractions per step
        self.b_x = assemble_load(self.vel_space,
                                 lambda x, y: np.stack([np.ones_like(x),
                                                        np.zeros_like(y)]), deg)
        self.b_y = assemble_load(self.vel_space,
                                 lambda x, y: np.stack([np.zeros_like(x),
                                                        np.ones_like(y)]), deg)
        self.b_ang = assemble_load(self.vel_space,
                                   lambda x, y: np.stack([y, -x]), deg)
        self.Ddiv = assemble_div_div(self.vel_space, deg)
        if config.vorticity:
            self.b_w = assemble_load(self.w_space,
                                     lambda x, y: np.ones_like(x), deg)

    def saddle(self, K_u: sp.spmatrix):
        """Monolithic matrix plus the symmetric block scaling vector.

        The divergence block is scaled to the velocity diagonal so threshold
        pivoting keeps diagonal pivots, and the dense mean row is kept two
        orders below that so it is pivoted last; both keep the LU fill low.
        The solution is unscaled afterwards.
        """
        diag = K_u.diagonal().max()
        s_p = diag / self._b_scale
        if self.mean_active:
            K = sp.bmat([[K_u, -self.B.T, None],
                         [self.B, None, self.mcol],
                         [None, self.mcol.T, None]], format="csr")
            s_mu = 0.01 * diag / (s_p * self._m_scale)
            dvec = np.concatenate([np.ones(self.n_u),
                                   np.full(self.n_p, s_p), [s_mu]])
        else:
            K = sp.bmat([[K_u, -self.B.T],
                         [self.B, None]], format="csr")
            dvec = np.concatenate([np.ones(self.n_u), np.full(self.n_p, s_p)])
        D = sp.diags(dvec)
        return (D @ K @ D).tocsc(), dvec

    def advecting(self, config: SchemeConfig, u_pre: Field) -> Field:
        if config.form == ConvectiveForm.MOD_CONV:
            return self.reconstructor.apply(u_pre)
        return u_pre


def _load_vector(config, ws, t):
    if config.f is None:
        return np.zeros(ws.n_u)
    return assemble_load(ws.vel_space,
                         lambda x, y: config.f(x, y, t), config.quad_degree)


def initial_state(config: SchemeConfig, ws: Workspace) -> State:
    """Interpolate u0, then L2-project onto the discretely divergence-free
    subspace under the t=0 boundary constraints."""
    if config.u0 is None:
        u0 = Field(ws.vel_space, np.zeros(ws.n_u))
    else:
        u0 = interpolate(ws.vel_space, config.u0)
    if config.project_initial:
        rhs = np.zeros(ws.n_total)
        rhs[:ws.n_u] = ws.M @ u0.coeffs
        K, dvec = ws.saddle(ws.M)
        cons = ws.bc.constraints(config, 0.0)
        K_e, rhs_e = apply_dirichlet(K, dvec * rhs, cons)
        x = dvec * Factorization(K_e).solve(rhs_e)
        u0 = Field(ws.vel_space, x[:ws.n_u])

    w0 = None
    if config.vorticity:
        vals, grads, _ = field_at_quadrature(u0, config.quad_degree)
        curl = grads[..., 1, 0] - grads[..., 0, 1]
        from .quadrature import triangle_rule
        rule = triangle_rule(config.quad_degree)
        _, detJ, _ = config.mesh.cell_jacobians()
        wq = rule.weights[None, :] * detJ[:, None]
        tab = ws.w_space.tabulation(config.quad_degree)
        local = np.einsum("tq,tq,tqi->ti", wq, curl, tab.values)
        rhs = np.zeros(ws.w_space.ndof)
        np.add.at(rhs, ws.w_space.cell_dofs.ravel(), local.ravel())
        w0 = Field(ws.w_space, Factorization(ws.Mw.tocsc()).solve(rhs))

    return State(u=u0, u_prev=None, p=None, w=w0, step=0, t=0.0)


@dataclass
class StepInfo:
    residual: float
    div_rec_max: float | None
    a_adv: Field | None


def _solve_velocity(config, ws, K_u, rhs_u, t_bc):
    rhs = np.zeros(ws.n_total)
    rhs[:ws.n_u] = rhs_u
    K, dvec = ws.saddle(K_u)
    cons = ws.bc.constraints(config, t_bc)
    K_e, rhs_e = apply_dirichlet(K, dvec * rhs, cons)
    y, res = ws.solver.solve(K_e, rhs_e)
    x = dvec * y
    return x[:ws.n_u], x[ws.n_u:ws.n_u + ws.n_p], res


def _extrapolate(state: State, coeff_n: float, coeff_nm1: float) -> Field:
    if state.u_prev is None:
        return state.u
    return Field(state.u.space,
                 coeff_n * state.u.coeffs + coeff_nm1 * state.u_prev.coeffs)


def cn_picard_step(state: State, config: SchemeConfig, ws: Workspace):
    """One linearized Crank-Nicolson step; two Picard passes when configured."""
    dt = config.dt
    t_mid = state.t + 0.5 * dt
    t_new = state.t + dt
    F = _load_vector(config, ws, t_mid)
    passes = 2 if config.stepper == "cn_picard2" else 1

    u_pre = _extrapolate(state, 1.5, -0.5)
    u_new = None
    for p in range(passes):
        a_adv = ws.advecting(config, u_pre) if config.form else None
        if config.form is not None:
            N = assemble_convection(config.form, a_adv, ws.vel_space,
                                    degree=config.quad_degree)
        else:
            N = sp.csr_matrix((ws.n_u, ws.n_u))
        K_u = ws.M / dt + 0.5 * config.nu * ws.A + 0.5 * N
        rhs_u = ws.M @ (state.u.coeffs / dt) \
            - 0.5 * config.nu * (ws.A @ state.u.coeffs) \
            - 0.5 * (N @ state.u.coeffs) + F
        u_new, q, res = _solve_velocity(config, ws, K_u, rhs_u, t_new)
        if p + 1 < passes:
            u_pre = Field(ws.vel_space, 0.5 * (u_new + state.u.coeffs))

    div_rec = None
    if config.form == ConvectiveForm.MOD_CONV:
        _, _, adiv = field_at_quadrature(a_adv, config.quad_degree)
        div_rec = float(np.abs(adiv).max())

    new = State(u=Field(ws.vel_space, u_new), u_prev=state.u,
                p=Field(ws.pres_space, q), w=state.w,
                step=state.step + 1, t=t_new)
    info = StepInfo(residual=res, div_rec_max=div_rec, a_adv=a_adv)
    if config.vorticity:
        new.w = vorticity_costep(state, new, config, ws, info)
    return new, info


def bdf2_step(state: State, config: SchemeConfig, ws: Workspace):
    """BDF2 with second-order extrapolated advection; needs two prior levels."""
    if state.u_prev is None:
        raise ConfigError("bdf2_step requires two time levels; start with one CN step")
    dt = config.dt
    t_new = state.t + dt
    F = _load_vector(config, ws, t_new)
    u_pre = _extrapolate(state, 2.0, -1.0)
    a_adv = ws.advecting(config, u_pre) if config.form else None
    if config.form is not None:
        N = assemble_convection(config.form, a_adv, ws.vel_space,
                                degree=config.quad_degree)
    else:
        N = sp.csr_matrix((ws.n_u, ws.n_u))
    K_u = 1.5 * ws.M / dt + config.nu * ws.A + N
    rhs_u = ws.M @ ((2.0 * state.u.coeffs - 0.5 * state.u_prev.coeffs) / dt) + F
    u_new, q, res = _solve_velocity(config, ws, K_u, rhs_u, t_new)

    div_rec = None
    if config.form == ConvectiveForm.MOD_CONV:
        _, _, adiv = field_at_quadrature(a_adv, config.quad_degree)
        div_rec = float(np.abs(adiv).max())

    new = State(u=Field(ws.vel_space, u_new), u_prev=state.u,
                p=Field(ws.pres_space, q), w=state.w,
                step=state.step + 1, t=t_new)
    info = StepInfo(residual=res, div_rec_max=div_rec, a_adv=a_adv)
    if config.vorticity:
        new.w = vorticity_costep(state, new, config, ws, info)
    return new, info


def vorticity_costep(state: State, new: State, config: SchemeConfig,
                     ws: Workspace, info: StepInfo) -> Field:
    """Crank-Nicolson transport of the scalar vorticity by the same
    reconstructed advecting field as the velocity step."""
    dt = config.dt
    Nw = assemble_vorticity_operator(info.a_adv, ws.w_space,
                                     degree=config.quad_degree)
    K = ws.Mw / dt + 0.5 * Nw + 0.5 * config.nu * ws.Aw
    rhs = ws.Mw @ (state.w.coeffs / dt) \
        - 0.5 * (Nw @ state.w.coeffs) \
        - 0.5 * config.nu * (ws.Aw @ state.w.coeffs)
    if config.curl_f is not None:
        t_mid = state.t + 0.5 * dt
        rhs += assemble_load(ws.w_space,
                             lambda x, y: config.curl_f(x, y, t_mid),
                             config.quad_degree)
    sol, _ = ws.w_solver.solve(K, rhs)
    return Field(ws.w_space, sol)


class _ErrorSplit:
    """Fast L2 error for exact solutions of the form decay(t) * u0(x, y)."""

    def __init__(self, ws: Workspace, u0, decay, degree):
        from .quadrature import triangle_rule
        self.decay = decay
        self.c = assemble_load(ws.vel_space, u0, degree)
        rule = triangle_rule(degree)
        mesh = ws.vel_space.mesh
        _, detJ, _ = mesh.cell_jacobians()
        wq = rule.weights[None, :] * detJ[:, None]
        X = mesh.map_points(rule.points)
        vals = np.asarray(u0(X[..., 0], X[..., 1]), dtype=np.float64)
        self.n0sq = float(np.einsum("tq,ctq->", wq, vals**2, optimize=True))

    def __call__(self, ws: Workspace, u: np.ndarray, t: float) -> float:
        d = float(self.decay(t))
        err2 = float(u @ (ws.M @ u)) - 2.0 * d * float(self.c @ u) \
            + d * d * self.n0sq
        return float(np.sqrt(max(err2, 0.0)))


def _record(state: State, info: StepInfo | None, ws: Workspace,
            exact=None, err_split: _ErrorSplit | None = None,
            degree=DEFAULT_DEGREE) -> DiagnosticsRecord:
    u = state.u.coeffs
    mom_x = float(ws.b_x @ u)
    mom_y = float(ws.b_y @ u)
    rec = DiagnosticsRecord(
        step=state.step, time=state.t,
        kinetic_energy=0.5 * float(u @ (ws.M @ u)),
        momentum_x=mom_x, momentum_y=mom_y, momentum_sum=mom_x + mom_y,
        angular_momentum=float(ws.b_ang @ u),
        div_l2=float(np.sqrt(max(u @ (ws.Ddiv @ u), 0.0))),
        div_rec_max=None if info is None else info.div_rec_max,
        solver_residual=None if info is None else info.residual)
    if state.w is not None:
        w = state.w.coeffs
        rec.enstrophy = 0.5 * float(w @ (ws.Mw @ w))
        rec.total_vorticity = float(ws.b_w @ w)
    if err_split is not None:
        rec.l2_error = err_split(ws, u, state.t)
    elif exact is not None:
        rec.l2_error = l2_error(state.u, exact, state.t, degree)
    return rec


def run(config: SchemeConfig, exact=None, exact_split=None,
        callback=None) -> RunResult:
    """Advance from t=0 to t_end, emitting one DiagnosticsRecord per step.

    ``exact`` is an analytic velocity (x, y, t) used for the L2-error
    column; ``exact_split=(u0, decay)`` is a faster path for separable
    solutions decay(t)*u0(x, y).  On blow-up the records collected so far
    are returned with a failure marker instead of raising.
    """
    ws = Workspace(config)
    state = initial_state(config, ws)
    err_split = None
    if exact_split is not None:
        err_split = _ErrorSplit(ws, exact_split[0], exact_split[1],
                                config.quad_degree)
    initial = _record(state, None, ws, exact, err_split, config.quad_degree)
    e0 = initial.kinetic_energy
    blowup_energy = 1e6 * e0 if e0 > 0 else np.inf

    records = []
    nsteps = config.num_steps
    last_energy = e0
    for n in range(nsteps):
        try:
            if config.stepper == "bdf2" and state.u_prev is not None:
                state, info = bdf2_step(state, config, ws)
            else:
                state, info = cn_picard_step(state, config, ws)
        except LinalgError as exc:
            # a solver breakdown while the energy is already running away is
            # the instability, not a linear-algebra defect
            if e0 > 0 and last_energy > 1e3 * e0:
                return RunResult(records, initial, "blowup", None,
                                 failure_time=state.t + config.dt,
                                 failure_reason=f"solver breakdown during "
                                                f"energy growth: {exc}")
            return RunResult(records, initial, "solver_failure", None,
                             failure_time=state.t + config.dt,
                             failure_reason=str(exc))
        if not np.all(np.isfinite(state.u.coeffs)):
            return RunResult(records, initial, "blowup", None,
                             failure_time=state.t,
                             failure_reason="non-finite velocity coefficients")
        rec = _record(state, info, ws, exact, err_split, config.quad_degree)
        if not np.isfinite(rec.kinetic_energy) \
                or rec.kinetic_energy > blowup_energy:
            return RunResult(records, initial, "blowup", None,
                             failure_time=state.t,
                             failure_reason="kinetic energy blow-up")
        last_energy = rec.kinetic_energy
        records.append(rec)
        if callback is not None:
            callback(state, rec)
    return RunResult(records, initial, "completed", state)
