"""Entropy-stable, positivity-preserving nodal DG solver for cross-diffusion
gradient-flow systems in 1D and on 2D Cartesian meshes."""

from .diagnostics import (ErrorTriple, aggregate_norms, component_mass,
                          discrete_entropy, entropy_identity_residual,
                          error_norms, nodal_error_norms, observed_order,
                          self_convergence_errors)
from .mesh import (Field, Mesh1D, Mesh2D, build_mesh_1d, build_mesh_2d,
                   project_initial)
from .models import (Model, get_model, list_models, mobility_velocity,
                     model_heat, model_seawater, model_skt,
                     model_skt_2d_manufactured, model_surfactant, model_tumor)
from .quadrature import (QuadratureRule, differentiation_matrix,
                         gauss_lobatto_rule, quad_integrate)
from .scheme1d import (FluxChoice, InterfaceState, auxiliary_u,
                       boundary_traces, interface_flux, semi_discrete_rhs)
from .scheme2d import EdgeState, auxiliary_u_2d, semi_discrete_rhs_2d
from .stepping import (RunReport, SolverBreakdown, StepConfig, StepOutcome,
                       cfl_bound, euler_step, integrate, scaling_limiter,
                       ssp_rk_step)

__all__ = [
    "ErrorTriple", "Field", "FluxChoice", "InterfaceState", "EdgeState", "aggregate_norms",
    "Mesh1D", "Mesh2D", "Model", "QuadratureRule", "RunReport",
    "SolverBreakdown", "StepConfig", "StepOutcome",
    "auxiliary_u", "auxiliary_u_2d", "boundary_traces", "build_mesh_1d",
    "build_mesh_2d", "cfl_bound", "component_mass", "differentiation_matrix",
    "discrete_entropy", "entropy_identity_residual", "error_norms",
    "euler_step", "gauss_lobatto_rule", "get_model", "integrate",
    "interface_flux", "list_models", "mobility_velocity", "model_heat",
    "model_seawater", "model_skt", "model_skt_2d_manufactured",
    "model_surfactant", "model_tumor", "nodal_error_norms", "observed_order",
    "project_initial", "quad_integrate", "scaling_limiter",
    "self_convergence_errors", "semi_discrete_rhs", "semi_discrete_rhs_2d",
    "ssp_rk_step",
]

__version__ = "0.1.0"
