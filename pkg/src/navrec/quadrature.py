"""Symmetric quadrature rules on the reference triangle and edge Gauss rules.

The reference triangle has vertices (0,0), (1,0), (0,1) and area 1/2.
Rules are stored in barycentric orbits and expanded to (x, y) points with
weights that sum to 1/2, so ``sum(w * f(x, y))`` integrates f over the
reference triangle directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial, sqrt

import numpy as np

# Orbit tables per polynomial degree.  "c" is the centroid, "s" an
# (a, a, 1-2a) three-point orbit, "f" an (a, b, 1-a-b) six-point orbit.
# Weights are normalized to sum to 1 before the 1/2 area factor.
# The degree-8 entries are the Dunavant values refined to double precision
# by Newton iteration on the symmetric moment equations.
_SQRT15 = sqrt(15.0)
_ORBITS = {
    1: [("c", 1.0, None)],
    2: [("s", 1.0 / 3.0, 1.0 / 6.0)],
    3: [("c", -0.5625, None), ("s", 25.0 / 48.0, 0.2)],
    5: [
        ("c", 0.225, None),
        ("s", (155.0 - _SQRT15) / 1200.0, (6.0 - _SQRT15) / 21.0),
        ("s", (155.0 + _SQRT15) / 1200.0, (6.0 + _SQRT15) / 21.0),
    ],
    8: [
        ("c", 0.1443156076777871682511, None),
        ("s", 0.0950916342672846247939, 0.4592925882927231560288),
        ("s", 0.1032173705347182502818, 0.1705693077517602066223),
        ("s", 0.03245849762319808031093, 0.05054722831703097545842),
        ("f", 0.02723031417443499426484,
         (0.2631128296346381134218, 0.728492392955404281241)),
    ],
}

DEFAULT_DEGREE = 8


@dataclass(frozen=True)
class QuadratureRule:
    """Points (n, 2) in reference coordinates and weights (n,) summing to 1/2."""

    degree: int
    points: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.weights)

    def self_test(self, rtol: float = 1e-13) -> float:
        """Return the worst relative monomial error up to ``degree``.

        Raises if the rule misses its stated exactness degree.
        """
        x, y = self.points[:, 0], self.points[:, 1]
        worst = 0.0
        for i in range(self.degree + 1):
            for j in range(self.degree + 1 - i):
                approx = float(np.dot(self.weights, x**i * y**j))
                exact = factorial(i) * factorial(j) / factorial(i + j + 2)
                worst = max(worst, abs(approx - exact) / exact)
        if worst > rtol:
            raise AssertionError(
                f"degree-{self.degree} rule misses exactness: {worst:.3e}")
        return worst


def _expand(orbits) -> tuple[np.ndarray, np.ndarray]:
    pts, ws = [], []
    third = 1.0 / 3.0
    for kind, w, par in orbits:
        if kind == "c":
            pts.append((third, third))
            ws.append(w)
        elif kind == "s":
            a = par
            c = 1.0 - 2.0 * a
            for lam in ((a, a, c), (a, c, a), (c, a, a)):
                pts.append((lam[1], lam[2]))
                ws.append(w)
        else:
            a, b = par
            c = 1.0 - a - b
            for lam in ((a, b, c), (b, c, a), (c, a, b),
                        (a, c, b), (b, a, c), (c, b, a)):
                pts.append((lam[1], lam[2]))
                ws.append(w)
    return np.array(pts), 0.5 * np.array(ws)


@lru_cache(maxsize=None)
def triangle_rule(degree: int = DEFAULT_DEGREE) -> QuadratureRule:
    """Symmetric rule exact for polynomials up to ``degree`` on the triangle."""
    if degree < 1:
        raise ValueError(f"quadrature degree must be >= 1, got {degree}")
    avail = sorted(_ORBITS)
    chosen = next((d for d in avail if d >= degree), None)
    if chosen is None:
        raise ValueError(f"no triangle rule of degree >= {degree} available")
    pts, ws = _expand(_ORBITS[chosen])
    return QuadratureRule(degree=chosen, points=pts, weights=ws)


@lru_cache(maxsize=None)
def edge_rule(npoints: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points/weights on [0, 1]; exact to degree 2n-1."""
    x, w = np.polynomial.legendre.leggauss(npoints)
    return 0.5 * (x + 1.0), 0.5 * w
