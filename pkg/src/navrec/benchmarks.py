"""Benchmark cases: Gresho vortex, lattice vortex, forward-backward step,
and a manufactured divergence-free solution for convergence studies.

Each case resolves to a SchemeConfig plus (when known) the analytic
solution.  Cases serialize to a flat ``key = value`` config format whose
keys mirror the CLI flags exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict, replace

import numpy as np

from .assembly import ConvectiveForm
from .elements import ElementKind
from .mesh import DomainSpec, generate_step_channel, generate_uniform
from .reconstruction import ReconstructionPlan
from .timestepping import BC, SchemeConfig

CASES = ("gresho", "lattice", "step", "mms")
PAIRS = {"p2b": (ElementKind.VectorP2Bubble, ElementKind.ScalarP1Disc),
         "th": (ElementKind.VectorP2, ElementKind.ScalarP1)}
FORMS = {"conv": ConvectiveForm.CONV, "skew": ConvectiveForm.SKEW,
         "emac": ConvectiveForm.EMAC_LIN, "modconv": ConvectiveForm.MOD_CONV,
         "none": None}


class CaseError(ValueError):
    pass


# -- analytic data -------------------------------------------------------

def gresho_velocity(x, y):
    """Three-branch rotational profile: solid rotation, linear decay, rest."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    r = np.sqrt(x * x + y * y)
    safe = np.maximum(r, 1e-300)
    fac = np.where(r <= 0.2, 5.0,
                   np.where(r <= 0.4, 2.0 / safe - 5.0, 0.0))
    return np.stack([-fac * y, fac * x])


def lattice_initial(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.stack([np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y),
                     np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y)])


def lattice_velocity(x, y, t, nu):
    return lattice_initial(x, y) * np.exp(-8.0 * nu * np.pi**2 * t)


def step_inflow(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.stack([y * (10.0 - y) / 25.0, np.zeros_like(x)])


def mms_velocity(x, y, t):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return np.stack([np.sin(np.pi * x) * np.sin(np.pi * y + t),
                     np.cos(np.pi * x) * np.cos(np.pi * y + t)])


def mms_pressure(x, y, t):
    mean = 2.0 * np.sin(1.0 + t) * (1.0 - np.cos(1.0))
    return np.sin(np.asarray(x) + np.asarray(y) + t) - mean


def mms_forcing(x, y, t, nu):
    """Body force closing the momentum equation for the manufactured pair."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sx, cx = np.sin(np.pi * x), np.cos(np.pi * x)
    sy, cy = np.sin(np.pi * y + t), np.cos(np.pi * y + t)
    grad_p = np.cos(x + y + t)
    f1 = sx * cy + 2.0 * nu * np.pi**2 * sx * sy \
        + 0.5 * np.pi * np.sin(2.0 * np.pi * x) + grad_p
    f2 = -cx * sy + 2.0 * nu * np.pi**2 * cx * cy \
        - 0.5 * np.pi * np.sin(2.0 * (np.pi * y + t)) + grad_p
    return np.stack([f1, f2])


# -- cases ---------------------------------------------------------------

@dataclass(frozen=True)
class BenchmarkCase:
    """Fully resolved run descriptor; ``build`` turns it into a SchemeConfig."""

    case: str
    pair: str = "p2b"
    form: str = "modconv"
    nx: int = 48
    target_h: float = 0.65
    dt: float = 0.01
    t_end: float = 10.0
    nu: float = 0.0
    stepper: str = "cn_picard1"
    flavor: str = "l2"
    vorticity: bool = False
    vtk_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.case not in CASES:
            raise CaseError(f"unknown case {self.case!r}")
        if self.pair not in PAIRS:
            raise CaseError(f"unknown pair {self.pair!r}")
        if self.form not in FORMS:
            raise CaseError(f"unknown form {self.form!r}")

    def plan(self) -> ReconstructionPlan | None:
        if FORMS[self.form] != ConvectiveForm.MOD_CONV:
            return None
        pair = "p2b_p1disc" if self.pair == "p2b" else "taylor_hood"
        return ReconstructionPlan(pair, self.flavor)

    def exact(self):
        if self.case == "gresho":
            return lambda x, y, t: gresho_velocity(x, y)
        if self.case == "lattice":
            nu = self.nu
            return lambda x, y, t: lattice_velocity(x, y, t, nu)
        if self.case == "mms":
            return mms_velocity
        return None

    def exact_split(self):
        """(u0, decay) factorization of the exact solution when separable."""
        if self.case == "gresho":
            return gresho_velocity, lambda t: 1.0
        if self.case == "lattice":
            nu = self.nu
            return lattice_initial, \
                lambda t: np.exp(-8.0 * nu * np.pi**2 * t)
        return None

    def build(self) -> SchemeConfig:
        vel_kind, pres_kind = PAIRS[self.pair]
        form = FORMS[self.form]
        if self.case == "gresho":
            mesh = generate_uniform(
                DomainSpec("gresho_square", nx=self.nx, ny=self.nx))
            bcs = {"wall": BC("nopen")}
            u0, f = gresho_velocity, None
        elif self.case == "lattice":
            mesh = generate_uniform(
                DomainSpec("rect", (0.0, 1.0, 0.0, 1.0),
                           nx=self.nx, ny=self.nx))
            nu = self.nu
            bcs = {"wall": BC("dirichlet",
                              lambda x, y, t: lattice_velocity(x, y, t, nu))}
            u0, f = lattice_initial, None
        elif self.case == "step":
            mesh = generate_step_channel(DomainSpec("step_channel"),
                                         self.target_h)
            bcs = {"inflow": BC("dirichlet",
                                lambda x, y, t: step_inflow(x, y)),
                   "outflow": BC("donothing"),
                   "wall": BC("noslip")}
            u0, f = step_inflow, None
        else:  # mms
            mesh = generate_uniform(
                DomainSpec("rect", (0.0, 1.0, 0.0, 1.0),
                           nx=self.nx, ny=self.nx))
            nu = self.nu
            bcs = {"wall": BC("dirichlet", mms_velocity)}
            u0 = lambda x, y: mms_velocity(x, y, 0.0)
            f = lambda x, y, t: mms_forcing(x, y, t, nu)
        return SchemeConfig(
            mesh=mesh, vel_kind=vel_kind, pres_kind=pres_kind, form=form,
            dt=self.dt, t_end=self.t_end, nu=self.nu, stepper=self.stepper,
            bcs=bcs, f=f, u0=u0, plan=self.plan(), vorticity=self.vorticity)


_DEFAULTS = {
    "gresho": dict(case="gresho", nx=48, dt=0.01, t_end=10.0, nu=0.0,
                   stepper="cn_picard1"),
    "lattice": dict(case="lattice", nx=64, dt=0.001, t_end=10.0, nu=1e-5,
                    stepper="cn_picard1"),
    "step": dict(case="step", target_h=0.65, dt=0.01, t_end=80.0, nu=0.001,
                 stepper="bdf2"),
    "mms": dict(case="mms", nx=16, dt=0.001, t_end=0.1, nu=1.0,
                stepper="cn_picard1"),
}


def make_case(case: str, **overrides) -> BenchmarkCase:
    if case not in _DEFAULTS:
        raise CaseError(f"unknown case {case!r}")
    kwargs = dict(_DEFAULTS[case])
    kwargs.update(overrides)
    return BenchmarkCase(**kwargs)


def case_gresho(**overrides) -> BenchmarkCase:
    return make_case("gresho", **overrides)


def case_lattice(**overrides) -> BenchmarkCase:
    return make_case("lattice", **overrides)


def case_step(**overrides) -> BenchmarkCase:
    return make_case("step", **overrides)


def case_mms(**overrides) -> BenchmarkCase:
    return make_case("mms", **overrides)


# -- config file format ---------------------------------------------------

_FIELD_TYPES = {
    "case": str, "pair": str, "form": str, "nx": int, "target_h": float,
    "dt": float, "t_end": float, "nu": float, "stepper": str, "flavor": str,
    "vorticity": bool, "vtk_every": int, "seed": int,
}


def case_to_config(case: BenchmarkCase) -> str:
    """Flat key = value text; keys mirror the CLI flags exactly."""
    lines = []
    for key, value in asdict(case).items():
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def parse_config(text: str) -> dict:
    """Parse the flat config format; '#' starts a comment; unknown keys error."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CaseError(f"config line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise CaseError(f"config line {lineno}: unknown key {key!r}")
        typ = _FIELD_TYPES[key]
        if typ is bool:
            if value not in ("True", "False", "true", "false"):
                raise CaseError(f"config line {lineno}: bad boolean {value!r}")
            out[key] = value in ("True", "true")
        else:
            out[key] = typ(value)
    return out


def case_from_config(text: str) -> BenchmarkCase:
    kwargs = parse_config(text)
    if "case" not in kwargs:
        raise CaseError("config is missing the 'case' key")
    return BenchmarkCase(**kwargs)
