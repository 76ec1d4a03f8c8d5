"""Reference elements: local dof layouts and scalar basis tabulation.

Local ordering conventions on the reference triangle (0,0)-(1,0)-(0,1):
vertex dofs first, then edge dofs (local edge k is opposite local vertex k,
i.e. it connects vertices k+1 and k+2 mod 3), then cell dofs.  Vector
Lagrange elements are component-blocked: all x-component dofs, then all
y-component dofs.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ElementKind(Enum):
    ScalarP1 = "p1"
    ScalarP2 = "p2"
    ScalarP1Disc = "p1disc"
    ScalarP0 = "p0"
    VectorP2 = "vp2"
    VectorP2Bubble = "vp2b"
    VectorBernardiRaugel = "br"
    HdivRT1 = "rt1"
    HdivBDM1 = "bdm1"


@dataclass(frozen=True)
class KindInfo:
    ndof_local: int
    ncomp: int          # components of the field value
    family: str         # "lagrange", "br", "hdiv"
    scalar_nloc: int = 0   # per-component dofs for blocked vector kinds


KIND_INFO = {
    ElementKind.ScalarP1: KindInfo(3, 1, "lagrange", 3),
    ElementKind.ScalarP2: KindInfo(6, 1, "lagrange", 6),
    ElementKind.ScalarP1Disc: KindInfo(3, 1, "lagrange", 3),
    ElementKind.ScalarP0: KindInfo(1, 1, "lagrange", 1),
    ElementKind.VectorP2: KindInfo(12, 2, "lagrange", 6),
    ElementKind.VectorP2Bubble: KindInfo(14, 2, "lagrange", 7),
    ElementKind.VectorBernardiRaugel: KindInfo(9, 2, "br"),
    ElementKind.HdivRT1: KindInfo(8, 2, "hdiv"),
    ElementKind.HdivBDM1: KindInfo(6, 2, "hdiv"),
}

VELOCITY_KINDS = (ElementKind.VectorP2, ElementKind.VectorP2Bubble,
                  ElementKind.VectorBernardiRaugel)
HDIV_KINDS = (ElementKind.HdivRT1, ElementKind.HdivBDM1)


def barycentric(points):
    """(n, 3) barycentric coordinates of reference points (n, 2)."""
    x, y = points[:, 0], points[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


def _p1_tab(points):
    lam = barycentric(points)
    grad = np.broadcast_to(
        np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]),
        (len(points), 3, 2))
    return lam, grad


def _p2_tab(points):
    lam, glam = _p1_tab(points)
    n = len(points)
    val = np.empty((n, 6))
    grad = np.empty((n, 6, 2))
    for i in range(3):
        val[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
        grad[:, i, :] = (4.0 * lam[:, i] - 1.0)[:, None] * glam[:, i, :]
    for k in range(3):
        a, b = (k + 1) % 3, (k + 2) % 3
        val[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
        grad[:, 3 + k, :] = 4.0 * (lam[:, a, None] * glam[:, b, :]
                                   + lam[:, b, None] * glam[:, a, :])
    return val, grad


def _bubble_tab(points):
    """Cubic cell bubble normalized to 1 at the centroid."""
    lam, glam = _p1_tab(points)
    val = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
    grad = 27.0 * (lam[:, 1] * lam[:, 2])[:, None] * glam[:, 0, :] \
        + 27.0 * (lam[:, 0] * lam[:, 2])[:, None] * glam[:, 1, :] \
        + 27.0 * (lam[:, 0] * lam[:, 1])[:, None] * glam[:, 2, :]
    return val, grad


def _p2b_tab(points):
    """Nodal P2+bubble basis: 3 vertices, 3 edge midpoints, centroid.

    The P2 functions are corrected by the bubble so every basis function
    vanishes at the other nodes; interpolation is plain point evaluation.
    """
    v2, g2 = _p2_tab(points)
    bv, bg = _bubble_tab(points)
    n = len(points)
    val = np.empty((n, 7))
    grad = np.empty((n, 7, 2))
    # P2 vertex functions are -1/9 at the centroid, edge functions 4/9
    for i in range(3):
        val[:, i] = v2[:, i] + (1.0 / 9.0) * bv
        grad[:, i] = g2[:, i] + (1.0 / 9.0) * bg
    for k in range(3):
        val[:, 3 + k] = v2[:, 3 + k] - (4.0 / 9.0) * bv
        grad[:, 3 + k] = g2[:, 3 + k] - (4.0 / 9.0) * bg
    val[:, 6] = bv
    grad[:, 6] = bg
    return val, grad


def _p0_tab(points):
    n = len(points)
    return np.ones((n, 1)), np.zeros((n, 1, 2))


_SCALAR_TABS = {
    ElementKind.ScalarP1: _p1_tab,
    ElementKind.ScalarP1Disc: _p1_tab,
    ElementKind.ScalarP2: _p2_tab,
    ElementKind.ScalarP0: _p0_tab,
    ElementKind.VectorP2: _p2_tab,
    ElementKind.VectorP2Bubble: _p2b_tab,
}


def scalar_tabulate(kind: ElementKind, points):
    """Reference values (n, nloc_s) and gradients (n, nloc_s, 2) per component."""
    return _SCALAR_TABS[kind](np.asarray(points, dtype=np.float64))


# reference nodes for nodal (Lagrange) interpolation, matching local ordering
_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_MIDS = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])  # edge k opposite vertex k
_CENTROID = np.array([[1.0 / 3.0, 1.0 / 3.0]])

REF_NODES = {
    ElementKind.ScalarP1: _VERTS,
    ElementKind.ScalarP1Disc: _VERTS,
    ElementKind.ScalarP2: np.vstack([_VERTS, _MIDS]),
    ElementKind.ScalarP0: _CENTROID,
    ElementKind.VectorP2: np.vstack([_VERTS, _MIDS]),
    ElementKind.VectorP2Bubble: np.vstack([_VERTS, _MIDS, _CENTROID]),
}

# monomial exponents (per component) for the H(div) spaces, in local
# scaled coordinates; RT1 appends the two x*(homogeneous P1) generators
_BDM1_MONO = [(0, (0, 0)), (0, (1, 0)), (0, (0, 1)),
              (1, (0, 0)), (1, (1, 0)), (1, (0, 1))]


def hdiv_monomials(kind: ElementKind, xi):
    """Values (n, nmono, 2), gradients (n, nmono, 2, 2) and divergence
    (n, nmono) of the monomial generators at local points ``xi`` (n, 2).

    Gradients/divergence are with respect to the local coordinate; divide by
    the cell scale to get physical derivatives.
    """
    xi = np.asarray(xi, dtype=np.float64)
    n = len(xi)
    nmono = 6 if kind == ElementKind.HdivBDM1 else 8
    val = np.zeros((n, nmono, 2))
    grad = np.zeros((n, nmono, 2, 2))
    div = np.zeros((n, nmono))
    for m, (comp, (px, py)) in enumerate(_BDM1_MONO):
        val[:, m, comp] = xi[:, 0] ** px * xi[:, 1] ** py
        if px:
            grad[:, m, comp, 0] = 1.0
        if py:
            grad[:, m, comp, 1] = 1.0
        if (comp, px, py) in ((0, 1, 0), (1, 0, 1)):
            div[:, m] = 1.0
    if kind == ElementKind.HdivRT1:
        x, y = xi[:, 0], xi[:, 1]
        # x * x~: (x^2, xy) and y * x~: (xy, y^2)
        val[:, 6, 0] = x * x
        val[:, 6, 1] = x * y
        grad[:, 6, 0, 0] = 2.0 * x
        grad[:, 6, 1, 0] = y
        grad[:, 6, 1, 1] = x
        div[:, 6] = 3.0 * x
        val[:, 7, 0] = x * y
        val[:, 7, 1] = y * y
        grad[:, 7, 0, 0] = y
        grad[:, 7, 0, 1] = x
        grad[:, 7, 1, 1] = 2.0 * y
        div[:, 7] = 3.0 * y
    return val, grad, div
