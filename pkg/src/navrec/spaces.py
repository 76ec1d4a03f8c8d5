"""Global finite element spaces, fields, interpolation and evaluation.

A Space binds an element kind to a mesh: global dof numbering, per-cell
local->global tables, boundary-dof metadata, and basis tabulation at
quadrature points.  H(div) elements (RT1/BDM1) are built per cell as the
dual basis of their physical dof functionals (edge moments of v.n against
{1, s-1/2} in the global low->high edge orientation, plus interior moments
against constant fields for RT1); shared edge dofs then give exact normal
continuity across interior edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elements import (
    ElementKind, KIND_INFO, HDIV_KINDS, REF_NODES,
    barycentric, hdiv_monomials, scalar_tabulate,
)
from .mesh import Mesh
from .quadrature import DEFAULT_DEGREE, edge_rule, triangle_rule


class SpaceError(ValueError):
    """Unsupported element/mesh combination or malformed field."""


class DomainError(ValueError):
    """Evaluation point outside the reference triangle."""


_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


@dataclass
class Tabulation:
    """Basis data at points, per cell.

    values: (T, nq, nloc) scalar kinds / (T, nq, nloc, 2) vector kinds
    grads:  (T, nq, nloc, 2) scalar / (T, nq, nloc, 2, 2) vector
            (component axis before derivative axis)
    div:    (T, nq, nloc) for vector kinds, else None
    """

    values: np.ndarray
    grads: np.ndarray
    div: np.ndarray | None = None


class Space:
    """Finite element space descriptor over a mesh."""

    def __init__(self, mesh: Mesh, kind: ElementKind):
        self.mesh = mesh
        self.kind = kind
        self.info = KIND_INFO[kind]
        self.ncomp = self.info.ncomp
        self._tab_cache: dict[int, Tabulation] = {}
        self._build_dofs()
        if kind in HDIV_KINDS:
            self._build_hdiv_basis()

    # -- dof numbering -------------------------------------------------

    def _build_dofs(self):
        mesh = self.mesh
        V, E, T = mesh.num_vertices, mesh.num_edges, mesh.num_cells
        c, ce = mesh.cells, mesh.cell_edges
        kind = self.kind
        verts = mesh.vertices
        emid = 0.5 * (verts[mesh.edges[:, 0]] + verts[mesh.edges[:, 1]])
        cmid = verts[c].mean(axis=1)

        if kind == ElementKind.ScalarP1:
            self.ndof = V
            self.cell_dofs = c.copy()
            pos = verts
        elif kind == ElementKind.ScalarP2:
            self.ndof = V + E
            self.cell_dofs = np.hstack([c, V + ce])
            pos = np.vstack([verts, emid])
        elif kind == ElementKind.ScalarP1Disc:
            self.ndof = 3 * T
            self.cell_dofs = np.arange(3 * T).reshape(T, 3)
            pos = verts[c].reshape(-1, 2)
        elif kind == ElementKind.ScalarP0:
            self.ndof = T
            self.cell_dofs = np.arange(T).reshape(T, 1)
            pos = cmid
        elif kind in (ElementKind.VectorP2, ElementKind.VectorP2Bubble):
            if kind == ElementKind.VectorP2:
                S = V + E
                sdofs = np.hstack([c, V + ce])
                spos = np.vstack([verts, emid])
            else:
                S = V + E + T
                sdofs = np.hstack([c, V + ce,
                                   (V + E + np.arange(T))[:, None]])
                spos = np.vstack([verts, emid, cmid])
            self.nscalar = S
            self.ndof = 2 * S
            self.cell_dofs = np.hstack([sdofs, S + sdofs])
            pos = np.vstack([spos, spos])
        elif kind == ElementKind.VectorBernardiRaugel:
            self.nscalar = V
            self.ndof = 2 * V + E
            self.cell_dofs = np.hstack([c, V + c, 2 * V + ce])
            pos = np.vstack([verts, verts, emid])
        elif kind == ElementKind.HdivRT1:
            self.ndof = 2 * E + 2 * T
            cd = np.empty((T, 8), dtype=np.int64)
            cd[:, 0:6:2] = 2 * ce
            cd[:, 1:6:2] = 2 * ce + 1
            cd[:, 6] = 2 * E + 2 * np.arange(T)
            cd[:, 7] = cd[:, 6] + 1
            self.cell_dofs = cd
            pos = np.vstack([np.repeat(emid, 2, axis=0),
                             np.repeat(cmid, 2, axis=0)])
        elif kind == ElementKind.HdivBDM1:
            self.ndof = 2 * E
            cd = np.empty((T, 6), dtype=np.int64)
            cd[:, 0::2] = 2 * ce
            cd[:, 1::2] = 2 * ce + 1
            self.cell_dofs = cd
            pos = np.repeat(emid, 2, axis=0)
        else:  # pragma: no cover
            raise SpaceError(f"unhandled kind {kind}")
        self.dof_positions = pos

        # component of each dof: 0/1 for blocked vector dofs, -1 for
        # normal-moment dofs (BR bubbles, H(div) edge/cell moments)
        comp = np.zeros(self.ndof, dtype=np.int64)
        if kind in (ElementKind.VectorP2, ElementKind.VectorP2Bubble):
            comp[self.nscalar:] = 1
        elif kind == ElementKind.VectorBernardiRaugel:
            comp[V:2 * V] = 1
            comp[2 * V:] = -1
        elif kind in HDIV_KINDS:
            comp[:] = -1
        self.dof_component = comp

        self._mark_boundary()

    def _mark_boundary(self):
        """Flag dofs geometrically located on the domain boundary."""
        mesh = self.mesh
        V = mesh.num_vertices
        on_b = np.zeros(self.ndof, dtype=bool)
        bverts = set()
        for e in mesh.boundary_edges:
            bverts.update(mesh.edges[e].tolist())
        bverts = np.array(sorted(bverts), dtype=np.int64)
        kind = self.kind

        def mark_scalar(vofs, eofs):
            on_b[vofs + bverts] = True
            if eofs is not None:
                on_b[eofs + mesh.boundary_edges] = True

        if kind == ElementKind.ScalarP1:
            mark_scalar(0, None)
        elif kind == ElementKind.ScalarP2:
            mark_scalar(0, V)
        elif kind == ElementKind.VectorP2:
            S = self.nscalar
            for off in (0, S):
                mark_scalar(off, off + V)
        elif kind == ElementKind.VectorP2Bubble:
            S = self.nscalar
            for off in (0, S):
                mark_scalar(off, off + V)
        elif kind == ElementKind.VectorBernardiRaugel:
            on_b[bverts] = True
            on_b[V + bverts] = True
            on_b[2 * V + mesh.boundary_edges] = True
        elif kind in HDIV_KINDS:
            on_b[2 * mesh.boundary_edges] = True
            on_b[2 * mesh.boundary_edges + 1] = True
        self.boundary_dof_mask = on_b

    def edge_scalar_nodes(self, e: int):
        """Scalar-space dof ids with a nodal position on edge ``e``."""
        a, b = self.mesh.edges[e]
        kind = self.kind
        V = self.mesh.num_vertices
        if kind in (ElementKind.ScalarP1, ElementKind.VectorBernardiRaugel):
            return [int(a), int(b)]
        if kind in (ElementKind.ScalarP2, ElementKind.VectorP2,
                    ElementKind.VectorP2Bubble):
            return [int(a), int(b), int(V + e)]
        raise SpaceError(f"{kind} has no scalar boundary nodes")

    def component_dof(self, scalar_dof: int, comp: int) -> int:
        return comp * self.nscalar + scalar_dof

    # -- H(div) dual basis ----------------------------------------------

    def _build_hdiv_basis(self):
        mesh = self.mesh
        T = mesh.num_cells
        nloc = self.info.ndof_local
        nmono = nloc
        self.cell_centers = mesh.vertices[mesh.cells].mean(axis=1)
        self.cell_scales = np.sqrt(mesh.cell_areas)

        D = np.zeros((T, nloc, nmono))
        gpts, gwts = edge_rule(4)
        _, elen, enorm = mesh.edge_vectors()
        everts = mesh.vertices[mesh.edges]  # (E, 2(lo/hi), 2)
        for ell in range(3):
            e = mesh.cell_edges[:, ell]
            lo = everts[e, 0]
            hi = everts[e, 1]
            # physical Gauss points along the global lo->hi direction
            X = lo[:, None, :] + gpts[None, :, None] * (hi - lo)[:, None, :]
            xi = (X - self.cell_centers[:, None, :]) / \
                self.cell_scales[:, None, None]
            mv, _, _ = hdiv_monomials(self.kind, xi.reshape(-1, 2))
            mv = mv.reshape(T, len(gpts), nmono, 2)
            vn = np.einsum("tgmc,tc->tgm", mv, enorm[e], optimize=True)
            w = gwts[None, :] * elen[e][:, None]
            D[:, 2 * ell, :] = np.einsum("tg,tgm->tm", w, vn, optimize=True)
            D[:, 2 * ell + 1, :] = np.einsum(
                "tg,tgm->tm", w * (gpts - 0.5)[None, :], vn, optimize=True)
        if self.kind == ElementKind.HdivRT1:
            rule = triangle_rule(5)
            X = mesh.map_points(rule.points)
            xi = (X - self.cell_centers[:, None, :]) / \
                self.cell_scales[:, None, None]
            mv, _, _ = hdiv_monomials(self.kind, xi.reshape(-1, 2))
            mv = mv.reshape(T, len(rule.weights), nmono, 2)
            _, detJ, _ = mesh.cell_jacobians()
            wq = rule.weights[None, :] * detJ[:, None]
            for k in range(2):
                D[:, 6 + k, :] = np.einsum("tq,tqm->tm", wq, mv[..., k], optimize=True)
        self.hdiv_coeffs = np.linalg.inv(D)  # (T, nmono, nloc)

    # -- tabulation ------------------------------------------------------

    def tabulation(self, degree: int = DEFAULT_DEGREE) -> Tabulation:
        """Basis data at the triangle rule of the given degree (cached)."""
        if degree not in self._tab_cache:
            rule = triangle_rule(degree)
            self._tab_cache[degree] = self.tabulate_points(rule.points)
        return self._tab_cache[degree]

    def tabulate_points(self, points, cells=None) -> Tabulation:
        """Basis values/gradients at reference points for all (or some) cells."""
        points = np.asarray(points, dtype=np.float64)
        mesh = self.mesh
        sel = slice(None) if cells is None else np.asarray(cells)
        _, detJ, Jinv = mesh.cell_jacobians()
        Jinv = Jinv[sel]
        Tn = Jinv.shape[0]
        nq = len(points)
        kind = self.kind
        fam = self.info.family

        if fam == "lagrange":
            sval, sgrad = scalar_tabulate(kind, points)
            gphys = np.einsum("qid,tdk->tqik", sgrad, Jinv, optimize=True)
            if self.ncomp == 1:
                values = np.broadcast_to(sval, (Tn, nq, sval.shape[1]))
                return Tabulation(values=values, grads=gphys)
            S = sval.shape[1]
            nloc = 2 * S
            values = np.zeros((1, nq, nloc, 2))
            values[0, :, :S, 0] = sval
            values[0, :, S:, 1] = sval
            values = np.broadcast_to(values, (Tn, nq, nloc, 2))
            grads = np.zeros((Tn, nq, nloc, 2, 2))
            grads[:, :, :S, 0, :] = gphys
            grads[:, :, S:, 1, :] = gphys
            div = grads[..., 0, 0] + grads[..., 1, 1]
            return Tabulation(values=values, grads=grads, div=div)

        if fam == "br":
            sval, sgrad = scalar_tabulate(ElementKind.ScalarP1, points)
            gphys = np.einsum("qid,tdk->tqik", sgrad, Jinv, optimize=True)
            lam = barycentric(points)
            glam = np.broadcast_to(
                np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (nq, 3, 2))
            values = np.zeros((Tn, nq, 9, 2))
            grads = np.zeros((Tn, nq, 9, 2, 2))
            values[:, :, 0:3, 0] = sval
            values[:, :, 3:6, 1] = sval
            grads[:, :, 0:3, 0, :] = gphys
            grads[:, :, 3:6, 1, :] = gphys
            _, _, enorm = mesh.edge_vectors()
            ce = mesh.cell_edges[sel]
            for ell in range(3):
                a, b = (ell + 1) % 3, (ell + 2) % 3
                bub = 4.0 * lam[:, a] * lam[:, b]
                gbub = 4.0 * np.einsum(
                    "q,tqk->tqk", lam[:, a],
                    np.einsum("qd,tdk->tqk", glam[:, b], Jinv, optimize=True)) \
                    + 4.0 * np.einsum(
                        "q,tqk->tqk", lam[:, b],
                        np.einsum("qd,tdk->tqk", glam[:, a], Jinv, optimize=True))
                n = enorm[ce[:, ell]]
                values[:, :, 6 + ell, :] = bub[None, :, None] * n[:, None, :]
                grads[:, :, 6 + ell, :, :] = np.einsum(
                    "tqk,tc->tqck", gbub, n, optimize=True)
            div = grads[..., 0, 0] + grads[..., 1, 1]
            return Tabulation(values=values, grads=grads, div=div)

        # hdiv: evaluate monomials at per-cell local coordinates
        X = mesh.map_points(points)[sel]
        centers = self.cell_centers[sel]
        scales = self.cell_scales[sel]
        xi = (X - centers[:, None, :]) / scales[:, None, None]
        mv, mg, md = hdiv_monomials(kind, xi.reshape(-1, 2))
        nmono = mv.shape[1]
        mv = mv.reshape(Tn, nq, nmono, 2)
        mg = mg.reshape(Tn, nq, nmono, 2, 2) / scales[:, None, None, None, None]
        md = md.reshape(Tn, nq, nmono) / scales[:, None, None]
        C = self.hdiv_coeffs[sel]
        values = np.einsum("tmj,tqmc->tqjc", C, mv, optimize=True)
        grads = np.einsum("tmj,tqmck->tqjck", C, mg, optimize=True)
        div = np.einsum("tmj,tqm->tqj", C, md, optimize=True)
        return Tabulation(values=values, grads=grads, div=div)


@dataclass
class Field:
    """Coefficient vector bound to a space."""

    space: Space
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.space.ndof,):
            raise SpaceError(
                f"coefficient length {self.coeffs.shape} does not match "
                f"space dof count {self.space.ndof}")

    def copy(self) -> "Field":
        return Field(self.space, self.coeffs.copy())


def build_space(mesh: Mesh, kind: ElementKind) -> Space:
    return Space(mesh, kind)


def zero_field(space: Space) -> Field:
    return Field(space, np.zeros(space.ndof))


def _call_vector(f, x, y):
    out = np.asarray(f(x, y), dtype=np.float64)
    if out.shape != (2,) + np.shape(x):
        raise SpaceError("vector function must return shape (2,) + x.shape")
    return out


def interpolate(space: Space, f) -> Field:
    """Canonical interpolation of an analytic function onto the space.

    Lagrange kinds use point values at the element nodes; Bernardi-Raugel
    adds edge-normal moment corrections; RT1/BDM1 use their edge (and, for
    RT1, interior) moment functionals evaluated by quadrature.
    """
    mesh = space.mesh
    kind = space.kind
    coeffs = np.zeros(space.ndof)

    if space.info.family == "lagrange":
        pos = space.dof_positions
        if space.ncomp == 1:
            coeffs[:] = np.asarray(f(pos[:, 0], pos[:, 1]), dtype=np.float64)
        else:
            S = space.nscalar
            vals = _call_vector(f, pos[:S, 0], pos[:S, 1])
            coeffs[:S] = vals[0]
            coeffs[S:] = vals[1]
        return Field(space, coeffs)

    if kind == ElementKind.VectorBernardiRaugel:
        V = mesh.num_vertices
        vals = _call_vector(f, mesh.vertices[:, 0], mesh.vertices[:, 1])
        coeffs[:V] = vals[0]
        coeffs[V:2 * V] = vals[1]
        gpts, gwts = edge_rule(4)
        _, elen, enorm = mesh.edge_vectors()
        lo = mesh.vertices[mesh.edges[:, 0]]
        hi = mesh.vertices[mesh.edges[:, 1]]
        X = lo[:, None, :] + gpts[None, :, None] * (hi - lo)[:, None, :]
        fg = _call_vector(f, X[..., 0], X[..., 1])       # (2, E, ng)
        fn = np.einsum("ceg,ec->eg", fg, enorm, optimize=True)
        flux = elen * np.einsum("g,eg->e", gwts, fn, optimize=True)
        fa = _call_vector(f, lo[:, 0], lo[:, 1])
        fb = _call_vector(f, hi[:, 0], hi[:, 1])
        p1flux = elen * 0.5 * (np.einsum("ce,ec->e", fa, enorm, optimize=True)
                               + np.einsum("ce,ec->e", fb, enorm, optimize=True))
        # bubble trace integral: int_e 4*lam_a*lam_b ds = 2|e|/3
        coeffs[2 * V:] = (flux - p1flux) / (2.0 * elen / 3.0)
        return Field(space, coeffs)

    if kind in HDIV_KINDS:
        gpts, gwts = edge_rule(5)
        _, elen, enorm = mesh.edge_vectors()
        lo = mesh.vertices[mesh.edges[:, 0]]
        hi = mesh.vertices[mesh.edges[:, 1]]
        X = lo[:, None, :] + gpts[None, :, None] * (hi - lo)[:, None, :]
        fg = _call_vector(f, X[..., 0], X[..., 1])
        fn = np.einsum("ceg,ec->eg", fg, enorm, optimize=True)
        w = gwts[None, :] * elen[:, None]
        coeffs[0::2][:mesh.num_edges] = np.einsum("eg,eg->e", w, fn, optimize=True)
        coeffs[1::2][:mesh.num_edges] = np.einsum(
            "eg,eg->e", w * (gpts - 0.5)[None, :], fn, optimize=True)
        if kind == ElementKind.HdivRT1:
            rule = triangle_rule(DEFAULT_DEGREE)
            X = mesh.map_points(rule.points)
            fg = _call_vector(f, X[..., 0], X[..., 1])   # (2, T, nq)
            _, detJ, _ = mesh.cell_jacobians()
            wq = rule.weights[None, :] * detJ[:, None]
            E2 = 2 * mesh.num_edges
            coeffs[E2::2] = np.einsum("tq,tq->t", wq, fg[0], optimize=True)
            coeffs[E2 + 1::2] = np.einsum("tq,tq->t", wq, fg[1], optimize=True)
        return Field(space, coeffs)

    raise SpaceError(f"interpolation not implemented for {kind}")


def _check_ref_points(points):
    lam = barycentric(points)
    if np.any(lam < -1e-12) or np.any(lam > 1.0 + 1e-12):
        raise DomainError("reference point outside the reference triangle")


def evaluate(field: Field, cell: int, ref_points):
    """Values, gradients and divergence of a field on one cell.

    Returns (values, grads, div): scalar fields give (nq,), (nq, 2), None;
    vector fields give (nq, 2), (nq, 2, 2), (nq,).
    """
    ref_points = np.atleast_2d(np.asarray(ref_points, dtype=np.float64))
    _check_ref_points(ref_points)
    space = field.space
    if not 0 <= cell < space.mesh.num_cells:
        raise DomainError(f"cell index {cell} out of range")
    tab = space.tabulate_points(ref_points, cells=[cell])
    u = field.coeffs[space.cell_dofs[cell]]
    if space.ncomp == 1:
        vals = np.einsum("j,qj->q", u, tab.values[0], optimize=True)
        grads = np.einsum("j,qjk->qk", u, tab.grads[0], optimize=True)
        return vals, grads, None
    vals = np.einsum("j,qjc->qc", u, tab.values[0], optimize=True)
    grads = np.einsum("j,qjck->qck", u, tab.grads[0], optimize=True)
    div = np.einsum("j,qj->q", u, tab.div[0], optimize=True)
    return vals, grads, div


def field_at_quadrature(field: Field, degree: int = DEFAULT_DEGREE):
    """Field values, gradients and divergence at all cell quadrature points.

    Shapes: values (T, nq[, 2]), grads (T, nq, 2[, 2]) with the component
    axis first for vector fields, div (T, nq) or None.
    """
    space = field.space
    tab = space.tabulation(degree)
    u = field.coeffs[space.cell_dofs]
    if space.ncomp == 1:
        vals = np.einsum("tj,tqj->tq", u, tab.values, optimize=True)
        grads = np.einsum("tj,tqjk->tqk", u, tab.grads, optimize=True)
        return vals, grads, None
    vals = np.einsum("tj,tqjc->tqc", u, tab.values, optimize=True)
    grads = np.einsum("tj,tqjck->tqck", u, tab.grads, optimize=True)
    div = np.einsum("tj,tqj->tq", u, tab.div, optimize=True)
    return vals, grads, div


def norms(field: Field, degree: int = DEFAULT_DEGREE) -> dict:
    """L2 norm, H1 seminorm and L2 divergence norm by cell quadrature."""
    rule = triangle_rule(degree)
    _, detJ, _ = field.space.mesh.cell_jacobians()
    w = rule.weights[None, :] * detJ[:, None]
    vals, grads, div = field_at_quadrature(field, degree)
    if field.space.ncomp == 1:
        l2 = np.sqrt(np.einsum("tq,tq->", w, vals**2, optimize=True))
        h1 = np.sqrt(np.einsum("tq,tqk->", w, grads**2, optimize=True))
        return {"l2": float(l2), "h1_semi": float(h1), "div_l2": 0.0}
    l2 = np.sqrt(np.einsum("tq,tqc->", w, vals**2, optimize=True))
    h1 = np.sqrt(np.einsum("tq,tqck->", w, grads**2, optimize=True))
    dl2 = np.sqrt(np.einsum("tq,tq->", w, div**2, optimize=True))
    return {"l2": float(l2), "h1_semi": float(h1), "div_l2": float(dl2)}
