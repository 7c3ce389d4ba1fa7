"""This module provides a matrix-free DG solver for incompressible flows."""

# flake8: noqa
from .adapt import AdaptConfig, compute_indicator, mark_cells, \
    transfer_solution
from .analysis import ErrorReport, ExactSolution, ForceReport, \
    aero_coefficients, compute_vorticity, convergence_rates, error_norms, \
    exact_eval, pressure_drop, solve_streamfunction, strouhal
from .cli import convergence_study, main, run_case, write_fields
from .config import CaseConfig, load_config
from .errors import AnalysisError, ConfigError, DgflowError, \
    FixedPointError, MeshError, SolverError, SpaceError
from .event import AdaptationEvent, Event, ForceEvent, StepEvent
from .forms import BoundaryConditions, HelmholtzOperator, MomentumOperator, \
    OperatorContext, PenaltyTable, apply_momentum_operator, \
    apply_pressure_helmholtz, apply_velocity_mass, divergence_residual, \
    kinetic_energy, momentum_rhs_stage1, momentum_rhs_stage2, pressure_rhs, \
    project_pressure_gradient, velocity_update, weak_divergence
from .krylov import SolverSettings, cg_solve, gmres_solve, \
    jacobi_preconditioner
from .mesh import Mesh, distort, generate_cartesian, \
    generate_cylinder_channel, load_mesh, refine_and_coarsen
from .run import CaseRun
from .schemes import BCGScheme, FixedPointSettings, FlowProblem, \
    GQBDF2Scheme, SchemeConfig, SchemeState, TRBDF2Scheme, build_scheme, \
    check_steady, compute_stability_params, extrapolate_stage1, \
    extrapolate_stage2
from .simulation import Simulation
from .space import Field, FunctionSpace, QuadratureRule, build_space, \
    evaluate, interpolate, mean_value, subtract_mean
from .subscriber import CsvSubscriber, Subscriber
