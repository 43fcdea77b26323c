"""Stochastic cell problems on the torus, their adjoint densities, and the
Mather and dissipation measures built from them."""

from .adjoint import (
    build_generator,
    build_phase_measure,
    dissipation_field,
    iul_functional,
    mather_checks,
    stationary_adjoint,
    support_diagnostics,
    weak_kam_identity_check,
)
from .cell_solver import CellProblemSpec, CellSolution, SolverOptions, dP_u, effective_hamiltonian_sweep, solve_cell
from .errors import (
    AmbiguousDensity,
    AssemblyError,
    ConfigError,
    DtTooLarge,
    InvalidArgument,
    InvalidDensity,
    InvalidProfile,
    InvalidShape,
    NoConvergence,
)
from .estimates import averaging_mode_defect, energy_report
from .grid import TorusGrid
from .hamiltonians import (
    HamiltonianModel,
    PotentialSpec,
    Profile,
    make_1d_nonconvex,
    make_conserved_sum,
    make_counterexample,
    make_mechanical,
    make_nonuniqueness,
    make_quasiconvex_square,
    make_radial,
)
from .scenarios import get_scenario, list_scenarios
from .sde import SimConfig, simulate

__version__ = "0.1.0"
