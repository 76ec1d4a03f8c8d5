"""2D incompressible Navier-Stokes/Euler finite element solver built around
a divergence-free reconstruction of the convective term."""

__version__ = "0.1.0"

from .assembly import ConvectiveForm
from .benchmarks import (BenchmarkCase, case_gresho, case_lattice, case_mms,
                         case_step, make_case)
from .elements import ElementKind
from .mesh import DomainSpec, Mesh, generate_step_channel, generate_uniform, refine_uniform
from .reconstruction import ReconstructionPlan, Reconstructor, reconstruct
from .spaces import Field, Space, build_space, evaluate, interpolate, norms
from .timestepping import BC, RunResult, SchemeConfig, State, run

__all__ = [
    "BC", "BenchmarkCase", "ConvectiveForm", "DomainSpec", "ElementKind",
    "Field", "Mesh", "ReconstructionPlan", "Reconstructor", "RunResult",
    "SchemeConfig", "Space", "State", "build_space", "case_gresho",
    "case_lattice", "case_mms", "case_step", "evaluate",
    "generate_step_channel", "generate_uniform", "interpolate", "make_case",
    "norms", "reconstruct", "refine_uniform", "run",
]
