"""Discontinuous plane wave neural networks for Helmholtz and time-harmonic Maxwell equations."""

from .forms import AssembledSystem, DiscreteSolution, Layer, Rows, UsageError
from .helmholtz import HelmholtzForm
from .maxwell import MaxwellForm
from .mesh import BoxDomain, ConfigurationError, Mesh, build_uniform_mesh
from .problems import (PROBLEMS, Problem, helmholtz_2d_mode, helmholtz_2d_piecewise,
                       helmholtz_3d_point_source, make_form, maxwell_3d_piecewise, maxwell_dipole)
from .pwbasis import DirectionAngles, init_angles_uniform
from .solver import (AdamConfig, OuterConfig, RunRecord, WidthSchedule, alternate_train, dlsq_solve,
                     outer_loop, pwls_baseline)

__version__ = "0.1.0"

__all__ = [
    "AdamConfig", "AssembledSystem", "BoxDomain", "ConfigurationError", "DirectionAngles",
    "DiscreteSolution", "HelmholtzForm", "Layer", "MaxwellForm", "Mesh", "OuterConfig", "PROBLEMS",
    "Problem", "Rows", "RunRecord", "UsageError", "WidthSchedule", "alternate_train",
    "build_uniform_mesh", "dlsq_solve", "helmholtz_2d_mode", "helmholtz_2d_piecewise",
    "helmholtz_3d_point_source", "init_angles_uniform", "make_form", "maxwell_3d_piecewise",
    "maxwell_dipole", "outer_loop", "pwls_baseline",
]
