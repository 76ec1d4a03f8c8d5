"""Assembly of mass, stiffness, divergence and convection operators.

All forms are integrated with the same symmetric degree-8 triangle rule,
which is exact for every assembled integrand (the worst case, an RT1 field
against P2-bubble gradients and values, has degree 7).  Element loops are
vectorized; triplets are finalized in a canonical order so matrices do not
depend on assembly order.
"""

from __future__ import annotations

from enum import Enum

import numpy as np

from .elements import ElementKind, HDIV_KINDS, VELOCITY_KINDS
from .linalg import assemble_finalize
from .quadrature import DEFAULT_DEGREE, triangle_rule
from .spaces import Field, Space, field_at_quadrature


class ConvectiveForm(Enum):
    CONV = "conv"
    SKEW = "skew"
    EMAC_LIN = "emac"
    MOD_CONV = "modconv"


class FormError(ValueError):
    """Incompatible space pairing or advecting-field kind."""


DIV_PAIRS = {
    (ElementKind.VectorP2, ElementKind.ScalarP1),
    (ElementKind.VectorP2Bubble, ElementKind.ScalarP1Disc),
    (ElementKind.VectorBernardiRaugel, ElementKind.ScalarP0),
}


def _wdet(mesh, degree):
    rule = triangle_rule(degree)
    _, detJ, _ = mesh.cell_jacobians()
    return rule.weights[None, :] * detJ[:, None]


def _scatter(local, row_dofs, col_dofs, shape):
    T, ni, nj = local.shape
    rows = np.repeat(row_dofs, nj, axis=1).ravel()
    cols = np.tile(col_dofs, (1, ni)).ravel()
    return assemble_finalize(rows, cols, local.ravel(), shape)


def assemble_mass(space: Space, degree: int = DEFAULT_DEGREE):
    """(u, v) over the space."""
    w = _wdet(space.mesh, degree)
    tab = space.tabulation(degree)
    if space.ncomp == 1:
        local = np.einsum("tq,tqi,tqj->tij", w, tab.values, tab.values, optimize=True)
    else:
        local = np.einsum("tq,tqic,tqjc->tij", w, tab.values, tab.values, optimize=True)
    return _scatter(local, space.cell_dofs, space.cell_dofs,
                    (space.ndof, space.ndof))


def assemble_stiffness(space: Space, degree: int = DEFAULT_DEGREE):
    """(grad u, grad v); kernel before boundary conditions is the constants."""
    w = _wdet(space.mesh, degree)
    tab = space.tabulation(degree)
    if space.ncomp == 1:
        local = np.einsum("tq,tqik,tqjk->tij", w, tab.grads, tab.grads, optimize=True)
    else:
        local = np.einsum("tq,tqick,tqjck->tij", w, tab.grads, tab.grads, optimize=True)
    return _scatter(local, space.cell_dofs, space.cell_dofs,
                    (space.ndof, space.ndof))


def assemble_div(vel_space: Space, pres_space: Space,
                 degree: int = DEFAULT_DEGREE):
    """(div v, q) with rows indexed by pressure dofs."""
    if (vel_space.kind, pres_space.kind) not in DIV_PAIRS:
        raise FormError(
            f"unsupported velocity/pressure pair "
            f"{vel_space.kind.name}/{pres_space.kind.name}")
    if vel_space.mesh is not pres_space.mesh:
        raise FormError("velocity and pressure spaces live on different meshes")
    w = _wdet(vel_space.mesh, degree)
    vtab = vel_space.tabulation(degree)
    ptab = pres_space.tabulation(degree)
    local = np.einsum("tq,tqi,tqj->tij", w, ptab.values, vtab.div, optimize=True)
    return _scatter(local, pres_space.cell_dofs, vel_space.cell_dofs,
                    (pres_space.ndof, vel_space.ndof))


def assemble_div_div(space: Space, degree: int = DEFAULT_DEGREE):
    """(div u, div v); u' D u is the squared L2 divergence norm."""
    if space.ncomp != 2:
        raise FormError("divergence form needs a vector space")
    w = _wdet(space.mesh, degree)
    tab = space.tabulation(degree)
    local = np.einsum("tq,tqi,tqj->tij", w, tab.div, tab.div, optimize=True)
    return _scatter(local, space.cell_dofs, space.cell_dofs,
                    (space.ndof, space.ndof))


def assemble_cross(test_space: Space, trial_space: Space, op: str = "mass",
                   degree: int = DEFAULT_DEGREE):
    """Rectangular (u, z) or (grad u, grad z) coupling two vector spaces."""
    if test_space.mesh is not trial_space.mesh:
        raise FormError("spaces live on different meshes")
    w = _wdet(test_space.mesh, degree)
    a = test_space.tabulation(degree)
    b = trial_space.tabulation(degree)
    if op == "mass":
        local = np.einsum("tq,tqic,tqjc->tij", w, a.values, b.values, optimize=True)
    elif op == "stiffness":
        local = np.einsum("tq,tqick,tqjck->tij", w, a.grads, b.grads, optimize=True)
    else:
        raise FormError(f"unknown cross operator {op!r}")
    return _scatter(local, test_space.cell_dofs, trial_space.cell_dofs,
                    (test_space.ndof, trial_space.ndof))


def _advecting_data(form: ConvectiveForm, a: Field, degree):
    kind = a.space.kind
    if form == ConvectiveForm.MOD_CONV:
        if kind not in HDIV_KINDS:
            raise FormError(
                f"{form.name} requires an H(div) advecting field, got {kind.name}")
    else:
        if kind not in VELOCITY_KINDS:
            raise FormError(
                f"{form.name} requires a velocity-space advecting field, "
                f"got {kind.name}")
    return field_at_quadrature(a, degree)


def assemble_convection(form: ConvectiveForm, a: Field, trial_space: Space,
                        test_space: Space | None = None,
                        degree: int = DEFAULT_DEGREE):
    """N(a)[i, j] = form(a, phi_j, phi_i).

    CONV and MOD_CONV assemble ((a.grad) v, w); SKEW adds (1/2)((div a) v, w);
    EMAC_LIN is the skew-symmetrized linearization of the
    energy/momentum-conserving nonlinearity: it self-annihilates for every
    advecting field and reduces to the nonlinear form when a = v.
    """
    if test_space is None:
        test_space = trial_space
    if test_space is not trial_space:
        raise FormError("trial and test spaces must coincide")
    if trial_space.mesh is not a.space.mesh:
        raise FormError("advecting field lives on a different mesh")
    if trial_space.ncomp != 2:
        raise FormError("convection needs a vector trial space")
    aval, agrad, adiv = _advecting_data(form, a, degree)

    w = _wdet(trial_space.mesh, degree)
    tab = trial_space.tabulation(degree)
    V, G, dV = tab.values, tab.grads, tab.div

    local = np.einsum("tq,tql,tqjkl,tqik->tij", w, aval, G, V, optimize=True)
    if form == ConvectiveForm.SKEW:
        local += 0.5 * np.einsum("tq,tq,tqjk,tqik->tij", w, adiv, V, V, optimize=True)
    elif form == ConvectiveForm.EMAC_LIN:
        local += 0.5 * np.einsum("tq,tqlk,tqjl,tqik->tij", w, agrad, V, V, optimize=True)
        local += 0.5 * np.einsum("tq,tql,tqjlk,tqik->tij", w, aval, G, V, optimize=True)
        local += 0.5 * np.einsum("tq,tq,tqjk,tqik->tij", w, adiv, V, V, optimize=True)
        local += 0.5 * np.einsum("tq,tqj,tqk,tqik->tij", w, dV, aval, V, optimize=True)
    ndof = trial_space.ndof
    return _scatter(local, trial_space.cell_dofs, trial_space.cell_dofs,
                    (ndof, ndof))


def assemble_vorticity_operator(a: Field, w_space: Space,
                                degree: int = DEFAULT_DEGREE):
    """((a.grad) w, v) for the scalar vorticity transport; a must be H(div)."""
    if a.space.kind not in HDIV_KINDS:
        raise FormError(
            f"vorticity advection requires an H(div) field, got {a.space.kind.name}")
    if w_space.kind != ElementKind.ScalarP2:
        raise FormError("vorticity space must be ScalarP2")
    if w_space.mesh is not a.space.mesh:
        raise FormError("advecting field lives on a different mesh")
    aval, _, _ = field_at_quadrature(a, degree)
    w = _wdet(w_space.mesh, degree)
    tab = w_space.tabulation(degree)
    local = np.einsum("tq,tql,tqjl,tqi->tij", w, aval, tab.grads, tab.values, optimize=True)
    return _scatter(local, w_space.cell_dofs, w_space.cell_dofs,
                    (w_space.ndof, w_space.ndof))


def assemble_load(space: Space, f, degree: int = DEFAULT_DEGREE):
    """(f, v) with f an analytic function of (x, y)."""
    rule = triangle_rule(degree)
    w = _wdet(space.mesh, degree)
    X = space.mesh.map_points(rule.points)
    tab = space.tabulation(degree)
    out = np.zeros(space.ndof)
    if space.ncomp == 1:
        fv = np.asarray(f(X[..., 0], X[..., 1]), dtype=np.float64)
        local = np.einsum("tq,tq,tqi->ti", w, fv, tab.values, optimize=True)
    else:
        fv = np.asarray(f(X[..., 0], X[..., 1]), dtype=np.float64)
        local = np.einsum("tq,ctq,tqic->ti", w, fv, tab.values, optimize=True)
    np.add.at(out, space.cell_dofs.ravel(), local.ravel())
    return out


def pressure_mean_vector(space: Space, degree: int = DEFAULT_DEGREE):
    """Integrals of the pressure basis functions (the zero-mean row)."""
    return assemble_load(space, lambda x, y: np.ones_like(x), degree)
