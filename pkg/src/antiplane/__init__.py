"""Finite element simulation of antiplane frictional contact for a
thermo-electro-visco-elastic body."""
from .assembly import AssembledOperators, BoundaryData, MaterialField, assemble_forms
from .friction import FrictionLaw
from .kernels import BACKEND
from .mesh import Mesh, generate_rect_mesh, load_mesh, write_mesh
from .spaces import FeSpace, NodalField, build_space, estimate_trace_constant
from .stepper import CoupledStepper, SystemState, TimeGrid
from .vi_solver import SolverConfig, StepProblem, solve_frozen_bound, solve_step

__version__ = "0.1.0"

__all__ = [
    "AssembledOperators", "BoundaryData", "MaterialField", "assemble_forms", "FrictionLaw", "BACKEND",
    "Mesh", "generate_rect_mesh", "load_mesh", "write_mesh", "FeSpace", "NodalField", "build_space",
    "estimate_trace_constant", "CoupledStepper", "SystemState", "TimeGrid", "SolverConfig",
    "StepProblem", "solve_frozen_bound", "solve_step", "__version__",
]
