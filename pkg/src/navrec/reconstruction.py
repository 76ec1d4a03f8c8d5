"""Divergence-free velocity reconstruction into H(div) spaces.

Two routes, one per element pair:

* P2-bubble/P1-disc: canonical RT1 interpolation.  Edge and interior moments
  of the source field are matched, so cellwise moments of the divergence
  against P1 are preserved; discretely divergence-free inputs come out
  pointwise divergence-free.
* Taylor-Hood: project (L2 or H1 sense) onto the discretely divergence-free
  Bernardi-Raugel subspace by solving a constrained saddle system, then
  apply canonical BDM1 interpolation.

Edges where the boundary condition enforces u.n = 0 have their normal
moments zeroed, which keeps the reconstruction in H0(div).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (assemble_cross, assemble_div, assemble_mass,
                       assemble_stiffness, pressure_mean_vector)
from .elements import ElementKind
from .linalg import Factorization, assemble_finalize, apply_dirichlet
from .mesh import Mesh
from .quadrature import DEFAULT_DEGREE, edge_rule, triangle_rule
from .spaces import Field, Space, build_space

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


class ReconstructionError(ValueError):
    pass


@dataclass(frozen=True)
class ReconstructionPlan:
    """Which reconstruction route to take.

    pair: "p2b_p1disc" (RT1 interpolation) or "taylor_hood"
    (Bernardi-Raugel projection followed by BDM1 interpolation).
    flavor: projection inner product for the Taylor-Hood route.
    """

    pair: str
    flavor: str = "l2"

    def __post_init__(self):
        if self.pair not in ("p2b_p1disc", "taylor_hood"):
            raise ReconstructionError(f"unknown pair {self.pair!r}")
        if self.flavor not in ("l2", "stokes"):
            raise ReconstructionError(f"unknown flavor {self.flavor!r}")

    @property
    def source_kind(self) -> ElementKind:
        return (ElementKind.VectorP2Bubble if self.pair == "p2b_p1disc"
                else ElementKind.VectorP2)


def hdiv_interpolation_matrix(source: Space, target: Space,
                              zero_normal_edges=()) -> sp.csr_matrix:
    """Sparse matrix of the canonical RT1/BDM1 interpolation of a field.

    Row 2e holds the edge-mean normal moment, row 2e+1 the first moment
    against (s - 1/2); RT1 appends the two interior moments per cell.
    Rows of edges in ``zero_normal_edges`` are left empty.
    """
    mesh = source.mesh
    if target.mesh is not mesh:
        raise ReconstructionError("source and target live on different meshes")
    E = mesh.num_edges
    gpts, gwts = edge_rule(4)
    _, elen, enorm = mesh.edge_vectors()
    zero_mask = np.zeros(E, dtype=bool)
    zero_mask[np.asarray(list(zero_normal_edges), dtype=np.int64)] = True

    rows, cols, vals = [], [], []
    owner = mesh.edge_cells[:, 0]
    for ell in range(3):
        for sign in (1, -1):
            # edges whose first adjacent cell sees them as local edge ell
            # with orientation sign
            cells = np.arange(mesh.num_cells)
            e_of = mesh.cell_edges[:, ell]
            mask = (owner[e_of] == cells) & \
                (mesh.cell_edge_signs[:, ell] == sign)
            mask &= ~zero_mask[e_of]
            tsel = np.flatnonzero(mask)
            if len(tsel) == 0:
                continue
            esel = e_of[tsel]
            a, b = (ell + 1) % 3, (ell + 2) % 3
            if sign < 0:
                a, b = b, a
            ref = _REF_VERTS[a][None, :] + gpts[:, None] * \
                (_REF_VERTS[b] - _REF_VERTS[a])[None, :]
            tab = source.tabulate_points(ref, cells=tsel)
            vn = np.einsum("tgjc,tc->tgj", tab.values, enorm[esel])
            w0 = gwts[None, :] * elen[esel][:, None]
            r0 = np.einsum("tg,tgj->tj", w0, vn)
            r1 = np.einsum("tg,tgj->tj", w0 * (gpts - 0.5)[None, :], vn)
            nloc = r0.shape[1]
            dofs = source.cell_dofs[tsel]
            rows.append(np.repeat(2 * esel, nloc))
            cols.append(dofs.ravel())
            vals.append(r0.ravel())
            rows.append(np.repeat(2 * esel + 1, nloc))
            cols.append(dofs.ravel())
            vals.append(r1.ravel())

    if target.kind == ElementKind.HdivRT1:
        rule = triangle_rule(DEFAULT_DEGREE)
        _, detJ, _ = mesh.cell_jacobians()
        wq = rule.weights[None, :] * detJ[:, None]
        tab = source.tabulation(DEFAULT_DEGREE)
        cell_ids = np.arange(mesh.num_cells)
        for k in range(2):
            rk = np.einsum("tq,tqj->tj", wq, tab.values[..., k])
            nloc = rk.shape[1]
            rows.append(np.repeat(2 * E + 2 * cell_ids + k, nloc))
            cols.append(source.cell_dofs.ravel())
            vals.append(rk.ravel())

    return assemble_finalize(np.concatenate(rows), np.concatenate(cols),
                             np.concatenate(vals),
                             (target.ndof, source.ndof))


def rt1_interpolate(u: Field, target: Space | None = None,
                    zero_normal_edges=()) -> Field:
    """Canonical RT1 interpolation of a P2-bubble velocity field."""
    if u.space.kind != ElementKind.VectorP2Bubble:
        raise ReconstructionError(
            f"rt1_interpolate expects VectorP2Bubble, got {u.space.kind.name}")
    if target is None:
        target = build_space(u.space.mesh, ElementKind.HdivRT1)
    R = hdiv_interpolation_matrix(u.space, target, zero_normal_edges)
    return Field(target, R @ u.coeffs)


def bdm1_interpolate(u: Field, target: Space | None = None,
                     zero_normal_edges=()) -> Field:
    """Canonical BDM1 interpolation of a Bernardi-Raugel velocity field."""
    if u.space.kind != ElementKind.VectorBernardiRaugel:
        raise ReconstructionError(
            f"bdm1_interpolate expects BernardiRaugel, got {u.space.kind.name}")
    if target is None:
        target = build_space(u.space.mesh, ElementKind.HdivBDM1)
    R = hdiv_interpolation_matrix(u.space, target, zero_normal_edges)
    return Field(target, R @ u.coeffs)


def br_boundary_values(u: Field, edge: int, mode: str):
    """Bernardi-Raugel boundary dof values matching the trace of u.

    For a Taylor-Hood field u, the BR interpolant on a boundary edge is
    determined by the endpoint values plus the bubble moment
    (u(mid) - (u(lo) + u(hi))/2) . n_e.  ``mode`` selects "full" (both
    components) or "normal" (normal component and bubble only).
    """
    space = u.space
    mesh = space.mesh
    V = mesh.num_vertices
    lo, hi = mesh.edges[edge]
    S = space.nscalar
    mid_sdof = V + edge
    _, _, enorm = mesh.edge_vectors()
    n = enorm[edge]

    vals = {}
    um = np.array([u.coeffs[mid_sdof], u.coeffs[S + mid_sdof]])
    ulo = np.array([u.coeffs[lo], u.coeffs[S + lo]])
    uhi = np.array([u.coeffs[hi], u.coeffs[S + hi]])
    bubble = float((um - 0.5 * (ulo + uhi)) @ n)
    vals[("bubble", edge)] = bubble
    if mode == "full":
        comps = (0, 1)
    else:
        # axis-aligned boundary: the normal axis is the dominant component
        comps = (int(np.argmax(np.abs(n))),)
    for vtx, uv in ((lo, ulo), (hi, uhi)):
        for cmp in comps:
            vals[("vertex", int(vtx), cmp)] = float(uv[cmp])
    return vals


class TaylorHoodProjector:
    """Projection of Taylor-Hood velocities onto the divergence-free
    Bernardi-Raugel subspace (a Darcy- or Stokes-type saddle solve)."""

    def __init__(self, th_space: Space, flavor: str = "l2",
                 dirichlet_edges: dict[int, str] | None = None,
                 mean_constraint: bool = True):
        if th_space.kind != ElementKind.VectorP2:
            raise ReconstructionError(
                f"Taylor-Hood projector expects VectorP2, got {th_space.kind.name}")
        mesh = th_space.mesh
        self.th_space = th_space
        self.flavor = flavor
        self.br_space = build_space(mesh, ElementKind.VectorBernardiRaugel)
        self.p0_space = build_space(mesh, ElementKind.ScalarP0)
        self.dirichlet_edges = dict(dirichlet_edges or {})

        op = "mass" if flavor == "l2" else "stiffness"
        M = assemble_mass(self.br_space) if flavor == "l2" \
            else assemble_stiffness(self.br_space)
        self.cross = assemble_cross(self.br_space, th_space, op)
        B = assemble_div(self.br_space, self.p0_space)
        n_br, n_p = self.br_space.ndof, self.p0_space.ndof
        diag = M.diagonal().max()
        s_p = diag / abs(B).max()
        blocks = [[M, B.T], [B, None]]
        dvec = np.concatenate([np.ones(n_br), np.full(n_p, s_p)])
        if mean_constraint:
            m = pressure_mean_vector(self.p0_space)
            mcol = sp.csr_matrix((m, (np.arange(n_p), np.zeros(n_p, int))),
                                 shape=(n_p, 1))
            blocks = [[M, B.T, None], [B, None, mcol], [None, mcol.T, None]]
            s_mu = 0.01 * diag / (s_p * np.abs(m).max())
            dvec = np.concatenate([dvec, [s_mu]])
        K = sp.bmat(blocks, format="csr")
        self._dvec = dvec
        D = sp.diags(dvec)
        K = (D @ K @ D).tocsc()
        self.n_total = K.shape[0]
        self._K_orig = K

        self._constrained = self._constraint_dofs()
        zero_vals = {d: 0.0 for d in self._constrained}
        K_elim, _ = apply_dirichlet(K, np.zeros(self.n_total), zero_vals)
        self.fact = Factorization(K_elim)

    def _constraint_dofs(self):
        space = self.br_space
        mesh = space.mesh
        V = mesh.num_vertices
        dofs = set()
        for e, mode in self.dirichlet_edges.items():
            dofs.add(2 * V + e)
            lo, hi = mesh.edges[e]
            _, _, enorm = mesh.edge_vectors()
            if mode == "full":
                comps = (0, 1)
            else:
                comps = (int(np.argmax(np.abs(enorm[e]))),)
            for vtx in (lo, hi):
                for cmp in comps:
                    dofs.add(cmp * V + int(vtx))
        return sorted(dofs)

    def boundary_values(self, u: Field) -> dict[int, float]:
        from .linalg import collect_constraints
        V = self.br_space.mesh.num_vertices
        pairs = []
        for e, mode in self.dirichlet_edges.items():
            vals = br_boundary_values(u, e, mode)
            for key, v in vals.items():
                if key[0] == "bubble":
                    pairs.append((2 * V + key[1], v))
                else:
                    _, vtx, cmp = key
                    pairs.append((cmp * V + vtx, v))
        return collect_constraints(pairs)

    def project(self, u: Field) -> Field:
        if u.space is not self.th_space:
            raise ReconstructionError("field is not bound to the projector space")
        rhs = np.zeros(self.n_total)
        rhs[:self.br_space.ndof] = self.cross @ u.coeffs
        rhs *= self._dvec
        values = self.boundary_values(u)
        # constant elimination pattern: lift the rhs with the frozen columns
        if values:
            dofs = np.array(sorted(values), dtype=np.int64)
            xc = np.zeros(self.n_total)
            xc[dofs] = [values[int(d)] for d in dofs]
            rhs = rhs - self._K_orig @ xc
            rhs[dofs] = xc[dofs]
            missing = set(self._constrained) - set(int(d) for d in dofs)
            for d in missing:
                rhs[d] = 0.0
        else:
            rhs[self._constrained] = 0.0
        x = self._dvec * self.fact.solve(rhs)
        return Field(self.br_space, x[:self.br_space.ndof])


def th_project_divfree(u: Field, flavor: str = "l2",
                       dirichlet_edges: dict[int, str] | None = None,
                       mean_constraint: bool = True) -> Field:
    """One-shot Taylor-Hood -> divergence-free Bernardi-Raugel projection."""
    proj = TaylorHoodProjector(u.space, flavor, dirichlet_edges,
                               mean_constraint)
    return proj.project(u)


class Reconstructor:
    """Plan-driven reconstruction operator with precomputed machinery."""

    def __init__(self, plan: ReconstructionPlan, vel_space: Space,
                 zero_normal_edges=(), dirichlet_edges=None,
                 mean_constraint: bool = True):
        if vel_space.kind != plan.source_kind:
            raise ReconstructionError(
                f"plan {plan.pair} expects {plan.source_kind.name}, "
                f"got {vel_space.kind.name}")
        self.plan = plan
        mesh = vel_space.mesh
        self.vel_space = vel_space
        if plan.pair == "p2b_p1disc":
            self.target_space = build_space(mesh, ElementKind.HdivRT1)
            self._R = hdiv_interpolation_matrix(
                vel_space, self.target_space, zero_normal_edges)
            self._projector = None
        else:
            self._projector = TaylorHoodProjector(
                vel_space, plan.flavor, dirichlet_edges, mean_constraint)
            self.target_space = build_space(mesh, ElementKind.HdivBDM1)
            self._R = hdiv_interpolation_matrix(
                self._projector.br_space, self.target_space, zero_normal_edges)

    def apply(self, u: Field) -> Field:
        if self._projector is not None:
            u = self._projector.project(u)
        return Field(self.target_space, self._R @ u.coeffs)


def reconstruct(u: Field, plan: ReconstructionPlan, zero_normal_edges=(),
                dirichlet_edges=None, mean_constraint: bool = True) -> Field:
    """Dispatch the reconstruction route chosen by the plan."""
    rec = Reconstructor(plan, u.space, zero_normal_edges, dirichlet_edges,
                        mean_constraint)
    return rec.apply(u)
