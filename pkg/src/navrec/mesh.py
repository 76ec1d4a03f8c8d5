"""Conforming triangulations of rectangles and the forward-backward step channel.

Meshes are immutable after construction.  Cells are counter-clockwise vertex
triples; edges carry a global low-index -> high-index orientation; boundary
edges carry one of the tags {inflow, outflow, wall, generic}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BOUNDARY_TAGS = ("inflow", "outflow", "wall", "generic")


class MeshError(ValueError):
    """Invalid domain specification or broken mesh invariant."""


@dataclass(frozen=True)
class DomainSpec:
    """Domain descriptor for the built-in mesh generators.

    ``rect`` and ``gresho_square`` are uniform nx-by-ny grids of split quads;
    ``step_channel`` is the 40x10 rectangle with the unit step [5,6]x[0,1]
    removed from the bottom.
    """

    kind: str
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    nx: int = 1
    ny: int = 1
    step_x0: float = 5.0
    step_width: float = 1.0
    step_height: float = 1.0

    def __post_init__(self):
        if self.kind not in ("rect", "gresho_square", "step_channel"):
            raise MeshError(f"unknown domain kind {self.kind!r}")
        if self.kind == "gresho_square":
            object.__setattr__(self, "bounds", (-0.5, 0.5, -0.5, 0.5))
        elif self.kind == "step_channel":
            object.__setattr__(self, "bounds", (0.0, 40.0, 0.0, 10.0))
        xmin, xmax, ymin, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise MeshError(f"degenerate bounds {self.bounds}")
        if self.nx < 1 or self.ny < 1:
            raise MeshError(f"nx, ny must be >= 1, got {self.nx}, {self.ny}")


class Mesh:
    """Triangulation with vertex/edge/cell connectivity and boundary tags."""

    def __init__(self, vertices, cells, boundary_tags=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be a (V, 2) array")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshError("cells must be a (T, 3) array")

        v = self.vertices
        c = self.cells
        d1 = v[c[:, 1]] - v[c[:, 0]]
        d2 = v[c[:, 2]] - v[c[:, 0]]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        if np.any(det <= 0.0):
            bad = int(np.argmax(det <= 0.0))
            raise MeshError(f"cell {bad} is not counter-clockwise or degenerate")
        self.cell_areas = 0.5 * det

        self._build_edges()
        self._tag_boundary(boundary_tags)

    # -- construction ------------------------------------------------------

    def _build_edges(self):
        c = self.cells
        # local edge i is opposite local vertex i: (i+1, i+2) mod 3
        raw = np.stack([c[:, [1, 2]], c[:, [2, 0]], c[:, [0, 1]]], axis=1)
        lo = raw.min(axis=2)
        hi = raw.max(axis=2)
        pairs = np.stack([lo, hi], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        self.edges = edges
        self.cell_edges = inverse.reshape(-1, 3)
        # sign +1 when the local direction (first -> second vertex) matches
        # the global low -> high orientation
        self.cell_edge_signs = np.where(
            raw[:, :, 0] == lo, 1, -1).astype(np.int8)

        ne = len(edges)
        edge_cells = np.full((ne, 2), -1, dtype=np.int64)
        counts = np.zeros(ne, dtype=np.int64)
        for t in range(len(c)):
            for ell in range(3):
                e = self.cell_edges[t, ell]
                if counts[e] >= 2:
                    raise MeshError(f"edge {e} shared by more than 2 cells")
                edge_cells[e, counts[e]] = t
                counts[e] += 1
        self.edge_cells = edge_cells
        self.boundary_edges = np.flatnonzero(counts == 1)

    def _tag_boundary(self, boundary_tags):
        if boundary_tags is None:
            tags = {int(e): "generic" for e in self.boundary_edges}
        elif callable(boundary_tags):
            tags = {}
            for e in self.boundary_edges:
                a, b = self.edges[e]
                mid = 0.5 * (self.vertices[a] + self.vertices[b])
                tags[int(e)] = boundary_tags(mid[0], mid[1])
        else:
            tags = {int(e): boundary_tags[int(e)] for e in self.boundary_edges}
        for e, t in tags.items():
            if t not in BOUNDARY_TAGS:
                raise MeshError(f"edge {e} has unknown boundary tag {t!r}")
        self.boundary_tags = tags

    # -- queries -----------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def cell_jacobians(self):
        """(J, detJ, Jinv) per cell for the affine map from the reference triangle."""
        v = self.vertices
        c = self.cells
        J = np.empty((len(c), 2, 2))
        J[:, :, 0] = v[c[:, 1]] - v[c[:, 0]]
        J[:, :, 1] = v[c[:, 2]] - v[c[:, 0]]
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = J[:, 1, 1] / det
        Jinv[:, 0, 1] = -J[:, 0, 1] / det
        Jinv[:, 1, 0] = -J[:, 1, 0] / det
        Jinv[:, 1, 1] = J[:, 0, 0] / det
        return J, det, Jinv

    def map_points(self, ref_points):
        """Map reference points (n, 2) to physical points per cell: (T, n, 2)."""
        v = self.vertices
        c = self.cells
        p0 = v[c[:, 0]]
        J, _, _ = self.cell_jacobians()
        return p0[:, None, :] + np.einsum("tij,qj->tqi", J, ref_points)

    def edge_vectors(self):
        """Oriented (low -> high) edge vectors, lengths, and unit normals.

        The global edge normal is the low->high tangent rotated by -90 degrees:
        n = (t_y, -t_x).
        """
        vec = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        length = np.linalg.norm(vec, axis=1)
        normal = np.stack([vec[:, 1], -vec[:, 0]], axis=1) / length[:, None]
        return vec, length, normal


def _tensor_mesh(x, y, skip_cell=None, tag_fn=None):
    """Triangulate a tensor grid, splitting each quad along its ll->ur diagonal."""
    nx, ny = len(x) - 1, len(y) - 1
    vid = -np.ones((len(x), len(y)), dtype=np.int64)
    cells = []
    for i in range(nx):
        for j in range(ny):
            if skip_cell is not None and skip_cell(i, j):
                continue
            for (a, b) in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
                if vid[a, b] < 0:
                    vid[a, b] = 0  # mark used
            ll, lr, ur, ul = (i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)
            cells.append((ll, lr, ur))
            cells.append((ll, ur, ul))
    used = np.argwhere(vid >= 0)
    vid[tuple(used.T)] = np.arange(len(used))
    vertices = np.column_stack([x[used[:, 0]], y[used[:, 1]]])
    tri = np.array([[vid[a], vid[b], vid[c]] for a, b, c in cells],
                   dtype=np.int64)
    return Mesh(vertices, tri, boundary_tags=tag_fn)


def generate_uniform(spec: DomainSpec) -> Mesh:
    """Uniform nx-by-ny triangulation of a rectangle; all boundary edges 'wall'."""
    if spec.kind not in ("rect", "gresho_square"):
        raise MeshError(f"generate_uniform expects a rectangle kind, got {spec.kind!r}")
    xmin, xmax, ymin, ymax = spec.bounds
    x = np.linspace(xmin, xmax, spec.nx + 1)
    y = np.linspace(ymin, ymax, spec.ny + 1)
    return _tensor_mesh(x, y, tag_fn=lambda px, py: "wall")


def _graded_insert(coords, corner, factor=0.8, layers=3):
    """Split the grid intervals adjacent to ``corner`` into geometric layers.

    Layer thicknesses shrink by ``factor`` toward the corner line, which must
    already be one of the coordinates.
    """
    coords = np.asarray(coords)
    idx = int(np.argmin(np.abs(coords - corner)))
    out = list(coords)
    ratios = np.array([factor ** (k + 1) for k in range(layers)])
    ratios /= ratios.sum()
    # interior break fractions, thinnest layer adjacent to the corner
    cum = np.cumsum(ratios)[:-1]
    new = []
    if idx + 1 < len(coords):
        new.extend(corner + (coords[idx + 1] - corner) * cum)
    if idx - 1 >= 0:
        new.extend(corner - (corner - coords[idx - 1]) * cum)
    out.extend(new)
    return np.unique(np.array(out))


def _segment_lines(a, b, h):
    n = max(1, int(round((b - a) / h)))
    return np.linspace(a, b, n + 1)


def generate_step_channel(spec: DomainSpec, target_h: float) -> Mesh:
    """Structured mesh of the 40x10 channel with the unit step removed.

    The intervals next to the step corner lines (x=5, x=6, y=1) are split into
    3 geometric layers (factor 0.8) to resolve the re-entrant corners.
    Boundary tags: inflow at x=0, outflow at x=40, wall elsewhere.
    """
    if spec.kind != "step_channel":
        raise MeshError(f"generate_step_channel expects step_channel, got {spec.kind!r}")
    if target_h <= 0:
        raise MeshError(f"target_h must be positive, got {target_h}")
    s0 = spec.step_x0
    s1 = spec.step_x0 + spec.step_width
    sh = spec.step_height
    xmin, xmax, ymin, ymax = spec.bounds
    if target_h > min(spec.step_width, spec.step_height):
        raise MeshError(
            f"target_h={target_h} exceeds the step size "
            f"{min(spec.step_width, spec.step_height)}")

    x = np.concatenate([
        _segment_lines(xmin, s0, target_h)[:-1],
        _segment_lines(s0, s1, target_h)[:-1],
        _segment_lines(s1, xmax, target_h),
    ])
    y = np.concatenate([
        _segment_lines(ymin, sh, target_h)[:-1],
        _segment_lines(sh, ymax, target_h),
    ])
    for corner in (s0, s1):
        x = _graded_insert(x, corner)
    y = _graded_insert(y, sh)

    def in_step(i, j):
        cx = 0.5 * (x[i] + x[i + 1])
        cy = 0.5 * (y[j] + y[j + 1])
        return s0 < cx < s1 and ymin < cy < sh

    def tag(px, py):
        if px == xmin:
            return "inflow"
        if px == xmax:
            return "outflow"
        return "wall"

    return _tensor_mesh(x, y, skip_cell=in_step, tag_fn=tag)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into 4 via edge midpoints; boundary tags inherited."""
    V = mesh.num_vertices
    mid_xy = 0.5 * (mesh.vertices[mesh.edges[:, 0]] +
                    mesh.vertices[mesh.edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid_xy])
    mid = V + np.arange(mesh.num_edges)  # midpoint vertex of edge e

    c = mesh.cells
    ce = mesh.cell_edges
    m01 = mid[ce[:, 2]]  # edge (v0, v1) is local edge 2
    m12 = mid[ce[:, 0]]
    m02 = mid[ce[:, 1]]
    children = np.concatenate([
        np.stack([c[:, 0], m01, m02], axis=1),
        np.stack([m01, c[:, 1], m12], axis=1),
        np.stack([m02, m12, c[:, 2]], axis=1),
        np.stack([m01, m12, m02], axis=1),
    ])

    # child boundary edges pair a parent vertex with the parent edge midpoint
    parent_tag_of_mid = {int(mid[e]): tag for e, tag in mesh.boundary_tags.items()}

    refined = Mesh(vertices, children)
    tags = {}
    for e in refined.boundary_edges:
        a, b = refined.edges[e]
        key = int(b) if b >= V else int(a)
        tags[int(e)] = parent_tag_of_mid[key]
    refined._tag_boundary(tags)
    return refined


def validate(mesh: Mesh, rtol: float = 1e-12) -> None:
    """Check the structural mesh invariants; raises MeshError on violation."""
    if np.any(mesh.cell_areas <= 0):
        raise MeshError("non-positive cell area")
    counts = np.sum(mesh.edge_cells >= 0, axis=1)
    if not np.all((counts == 1) | (counts == 2)):
        raise MeshError("edge adjacent to 0 or >2 cells")
    boundary = set(np.flatnonzero(counts == 1).tolist())
    if boundary != set(mesh.boundary_tags):
        raise MeshError("boundary tags do not partition the boundary edges")
    # interior edges are traversed once in each direction
    sign_sum = np.zeros(mesh.num_edges, dtype=np.int64)
    np.add.at(sign_sum, mesh.cell_edges.ravel(), mesh.cell_edge_signs.ravel())
    interior = counts == 2
    if np.any(sign_sum[interior] != 0):
        raise MeshError("inconsistent edge orientation signs")
    for t in range(mesh.num_cells):
        for ell in range(3):
            e = mesh.cell_edges[t, ell]
            if t not in mesh.edge_cells[e]:
                raise MeshError(f"connectivity round-trip broken at cell {t}")
