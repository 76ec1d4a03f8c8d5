"""Conserved-quantity monitors, CSV time series, and VTK legacy export."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .quadrature import DEFAULT_DEGREE, triangle_rule
from .spaces import Field, field_at_quadrature


@dataclass
class DiagnosticsRecord:
    """One per time step; None marks quantities not monitored in a run."""

    step: int
    time: float
    kinetic_energy: float
    momentum_x: float
    momentum_y: float
    momentum_sum: float
    angular_momentum: float
    enstrophy: float | None = None
    total_vorticity: float | None = None
    l2_error: float | None = None
    div_l2: float = 0.0
    div_rec_max: float | None = None
    solver_residual: float | None = None


CSV_COLUMNS = [f.name for f in fields(DiagnosticsRecord)]


def conserved_quantities(u: Field, w: Field | None = None,
                         degree: int = DEFAULT_DEGREE) -> dict:
    """Kinetic energy, momentum, angular momentum about the origin, and
    (when a vorticity field is given) enstrophy and total vorticity."""
    rule = triangle_rule(degree)
    mesh = u.space.mesh
    _, detJ, _ = mesh.cell_jacobians()
    wq = rule.weights[None, :] * detJ[:, None]
    X = mesh.map_points(rule.points)
    vals, grads, div = field_at_quadrature(u, degree)
    energy = 0.5 * float(np.einsum("tq,tqc->", wq, vals**2))
    mom = np.einsum("tq,tqc->c", wq, vals)
    ang = float(np.einsum("tq,tq->", wq,
                          vals[..., 0] * X[..., 1] - vals[..., 1] * X[..., 0]))
    div_l2 = float(np.sqrt(np.einsum("tq,tq->", wq, div**2)))
    out = {
        "kinetic_energy": energy,
        "momentum_x": float(mom[0]),
        "momentum_y": float(mom[1]),
        "momentum_sum": float(mom[0] + mom[1]),
        "angular_momentum": ang,
        "div_l2": div_l2,
    }
    if w is not None:
        wvals, _, _ = field_at_quadrature(w, degree)
        out["enstrophy"] = 0.5 * float(np.einsum("tq,tq->", wq, wvals**2))
        out["total_vorticity"] = float(np.einsum("tq,tq->", wq, wvals))
    return out


def l2_error(u: Field, exact, t: float,
             degree: int = DEFAULT_DEGREE) -> float:
    """L2 distance between a discrete field and an analytic solution at t."""
    rule = triangle_rule(degree)
    mesh = u.space.mesh
    _, detJ, _ = mesh.cell_jacobians()
    wq = rule.weights[None, :] * detJ[:, None]
    X = mesh.map_points(rule.points)
    vals, _, _ = field_at_quadrature(u, degree)
    ex = np.asarray(exact(X[..., 0], X[..., 1], t), dtype=np.float64)
    diff = vals - np.moveaxis(ex, 0, -1)
    return float(np.sqrt(np.einsum("tq,tqc->", wq, diff**2)))


def _fmt(x) -> str:
    return "" if x is None else f"{x:.17g}"


def write_csv(records, path) -> None:
    """Fixed column order, 17 significant digits, newline-terminated."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def read_csv(path) -> list[DiagnosticsRecord]:
    path = Path(path)
    out = []
    with path.open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise ValueError(f"unexpected diagnostics header {header}")
        for row in reader:
            kwargs = {}
            for name, cell in zip(CSV_COLUMNS, row):
                if cell == "":
                    kwargs[name] = None
                elif name == "step":
                    kwargs[name] = int(cell)
                else:
                    kwargs[name] = float(cell)
            out.append(DiagnosticsRecord(**kwargs))
    return out


def _vertex_velocity(u: Field) -> np.ndarray:
    space = u.space
    V = space.mesh.num_vertices
    S = space.nscalar
    return np.stack([u.coeffs[:V], u.coeffs[S:S + V]], axis=1)


def export_vtk(u: Field, p: Field | None, path) -> None:
    """Legacy ASCII unstructured-grid file with vertex velocity/speed and
    cellwise pressure, good enough for external contour/streamline plots."""
    mesh = u.space.mesh
    vel = _vertex_velocity(u)
    speed = np.linalg.norm(vel, axis=1)
    lines = _vtk_header(mesh)
    lines.append(f"POINT_DATA {mesh.num_vertices}")
    lines.append("VECTORS velocity double")
    for vx, vy in vel:
        lines.append(f"{vx:.12g} {vy:.12g} 0")
    lines.append("SCALARS speed double")
    lines.append("LOOKUP_TABLE default")
    lines.extend(f"{s:.12g}" for s in speed)
    if p is not None:
        centroid = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        tab = p.space.tabulate_points(centroid)
        pc = np.einsum("tj,tqj->t", p.coeffs[p.space.cell_dofs], tab.values)
        lines.append(f"CELL_DATA {mesh.num_cells}")
        lines.append("SCALARS pressure double")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.12g}" for v in pc)
    Path(path).write_text("\n".join(lines) + "\n")


def export_mesh_vtk(mesh, path) -> None:
    """Mesh-only export for visual inspection."""
    Path(path).write_text("\n".join(_vtk_header(mesh)) + "\n")


def _vtk_header(mesh) -> list[str]:
    lines = [
        "# vtk DataFile Version 3.0",
        "navrec output",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.num_vertices} double",
    ]
    lines.extend(f"{x:.12g} {y:.12g} 0" for x, y in mesh.vertices)
    lines.append(f"CELLS {mesh.num_cells} {4 * mesh.num_cells}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.cells)
    lines.append(f"CELL_TYPES {mesh.num_cells}")
    lines.extend("5" for _ in range(mesh.num_cells))
    return lines
