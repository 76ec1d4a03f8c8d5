"""Command-line front end: run benchmarks, parameter sweeps, and the
property verification suite.

Exit codes: 0 success, 2 usage error, 3 blow-up, 4 solver failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import (CASES, FORMS, PAIRS, BenchmarkCase, CaseError,
                         case_from_config, case_to_config, make_case,
                         parse_config)
from .diagnostics import export_vtk, write_csv
from .timestepping import run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BLOWUP = 3
EXIT_SOLVER = 4

_CASE_FLAGS = ["case", "pair", "form", "nx", "target_h", "dt", "t_end", "nu",
               "stepper", "flavor", "vorticity", "vtk_every", "seed"]


def _add_case_args(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, default=None,
                   help="config file (key = value, '#' comments); flags override")
    p.add_argument("--case", choices=CASES)
    p.add_argument("--pair", choices=sorted(PAIRS))
    p.add_argument("--form", choices=sorted(FORMS))
    p.add_argument("--nx", type=int, help="cells per direction (square cases)")
    p.add_argument("--target-h", type=float, dest="target_h",
                   help="target mesh size (step channel)")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--nu", type=float)
    p.add_argument("--stepper", choices=("cn_picard1", "cn_picard2", "bdf2"))
    p.add_argument("--flavor", choices=("l2", "stokes"))
    p.add_argument("--vorticity", action="store_true", default=None)
    p.add_argument("--vtk-every", type=int, dest="vtk_every",
                   help="write a VTK snapshot every k steps (0 = off)")
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir", type=Path, default=Path("out"))


def _resolve_case(args) -> BenchmarkCase:
    overrides = {}
    if args.config is not None:
        overrides.update(parse_config(args.config.read_text()))
    for key in _CASE_FLAGS:
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if "case" not in overrides:
        raise CaseError("--case (or a config with a 'case' key) is required")
    case_name = overrides.pop("case")
    return make_case(case_name, **overrides)


def _write_meta(outdir: Path, case: BenchmarkCase, result, wall: float,
                dofs: dict):
    lines = [f"# navrec {__version__} run metadata",
             f"# status = {result.status}"]
    if result.failure_time is not None:
        lines.append(f"# failure_time = {result.failure_time:.17g}")
        lines.append(f"# failure_reason = {result.failure_reason}")
    lines.append(f"# wall_seconds = {wall:.3f}")
    for k, v in dofs.items():
        lines.append(f"# {k} = {v}")
    ini = result.initial
    lines.append(f"# initial_kinetic_energy = {ini.kinetic_energy:.17g}")
    lines.append(f"# initial_momentum_x = {ini.momentum_x:.17g}")
    lines.append(f"# initial_momentum_y = {ini.momentum_y:.17g}")
    lines.append(case_to_config(case).rstrip())
    (outdir / "meta.txt").write_text("\n".join(lines) + "\n")


def _execute(case: BenchmarkCase, outdir: Path) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    config = case.build()
    exact = case.exact()
    snapshots = []

    def callback(state, rec):
        if case.vtk_every > 0 and rec.step % case.vtk_every == 0:
            path = outdir / f"fields_{rec.step:06d}.vtk"
            export_vtk(state.u, state.p, path)
            snapshots.append(path)

    t0 = time.time()
    result = run(config, exact=exact, exact_split=case.exact_split(),
                 callback=callback)
    wall = time.time() - t0
    write_csv(result.records, outdir / "diagnostics.csv")
    nv, npr = _vel_dofs(config), _pres_dofs(config)
    dofs = {
        "velocity_dofs": nv,
        "pressure_dofs": npr,
        "total_dofs": nv + npr,
        "cells": config.mesh.num_cells,
    }
    _write_meta(outdir, case, result, wall, dofs)
    if result.status == "completed":
        if case.vtk_every > 0 and result.state is not None:
            export_vtk(result.state.u, result.state.p,
                       outdir / f"fields_{result.records[-1].step:06d}.vtk")
        return EXIT_OK
    if result.status == "blowup":
        print(f"blow-up at t={result.failure_time:g}: {result.failure_reason}",
              file=sys.stderr)
        return EXIT_BLOWUP
    print(f"solver failure: {result.failure_reason}", file=sys.stderr)
    return EXIT_SOLVER


def _vel_dofs(config) -> int:
    from .spaces import build_space
    return build_space(config.mesh, config.vel_kind).ndof


def _pres_dofs(config) -> int:
    from .spaces import build_space
    return build_space(config.mesh, config.pres_kind).ndof


def cmd_run(args) -> int:
    case = _resolve_case(args)
    return _execute(case, args.outdir)


def cmd_sweep(args) -> int:
    base = _resolve_case(args)
    key, _, items = args.axis.partition("=")
    key = key.strip()
    if not items:
        raise CaseError("--axis expects 'name=v1,v2,...'")
    if key not in _CASE_FLAGS or key == "case":
        raise CaseError(f"cannot sweep over {key!r}")
    values = [v.strip() for v in items.split(",") if v.strip()]
    if not values:
        raise CaseError("--axis value list is empty")

    rows = []
    per_step_errors = {}
    rc_overall = EXIT_OK
    for raw in values:
        overrides = parse_config(f"{key} = {raw}")
        sub = make_case(base.case, **{**_case_dict(base), **overrides})
        subdir = args.outdir / f"{key}_{raw}"
        rc = _execute(sub, subdir)
        rc_overall = rc_overall if rc == EXIT_OK else rc
        from .diagnostics import read_csv
        recs = read_csv(subdir / "diagnostics.csv")
        rows.append((raw, rc, recs[-1] if recs else None))
        if recs and recs[0].l2_error is not None:
            per_step_errors[raw] = np.array([r.l2_error for r in recs])

    lines = ["value,exit_code,final_time,final_energy,final_l2_error"]
    for raw, rc, rec in rows:
        if rec is None:
            lines.append(f"{raw},{rc},,,")
        else:
            err = "" if rec.l2_error is None else f"{rec.l2_error:.17g}"
            lines.append(f"{raw},{rc},{rec.time:.17g},"
                         f"{rec.kinetic_energy:.17g},{err}")
    (args.outdir / "summary.csv").write_text("\n".join(lines) + "\n")

    # per-step error-ratio stream for two-valued form sweeps
    if key == "form" and len(values) == 2 and len(per_step_errors) == 2:
        a, b = values
        ea, eb = per_step_errors[a], per_step_errors[b]
        n = min(len(ea), len(eb))
        with (args.outdir / "ratio.csv").open("w") as fh:
            fh.write(f"step,ratio_{b}_over_{a}\n")
            for i in range(n):
                fh.write(f"{i + 1},{eb[i] / ea[i]:.17g}\n")
        ratio = eb[:n] / ea[:n]
        print(f"max |ratio - 1| = {np.abs(ratio - 1.0).max():.3e}")
    return rc_overall


def _case_dict(case: BenchmarkCase) -> dict:
    d = asdict(case)
    d.pop("case")
    return d


def cmd_verify(args) -> int:
    from .verify import run_verification
    ok = run_verification(seed=args.seed if args.seed is not None else 0,
                          quad_degree=args.quad_degree)
    return EXIT_OK if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="navrec",
        description="2D incompressible flow solver with divergence-free "
                    "reconstructed convection")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one benchmark case")
    _add_case_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a one-axis parameter sweep")
    _add_case_args(p_sweep)
    p_sweep.add_argument("--axis", required=True,
                         help="parameter axis, e.g. nu=1e3,1,1e-3")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ver = sub.add_parser("verify", help="run the property suite")
    p_ver.add_argument("--seed", type=int, default=0)
    p_ver.add_argument("--quad-degree", type=int, dest="quad_degree", default=8)
    p_ver.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CaseError as exc:
        parser.exit(EXIT_USAGE, f"error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
