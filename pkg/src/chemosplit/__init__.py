"""Numerical laboratory for a chemotaxis model with a split (moving/static) population."""
from .blowup import BubbleVariant, bubble_initial_data, bubble_profile, eta_sweep
from .dynamics import State, StepControl, energy_audit, homogeneous_state, run, step
from .functionals import EnergyReport, dissipation, energy_report, free_energy_F, liapunov
from .grid import Grid, build_radial_grid, build_rect_grid, integrate, norms
from .model import (DomainSpec, ModelParams, RadialDisk, Rectangle, critical_mass, entropy_L,
                    entropy_L_theta, excluded_masses)
from .operators import (HelmholtzProblem, chemotactic_divergence, helmholtz_solve,
                        neumann_laplacian)
from .steady import SteadyState, solve_steady, steady_energy_closed_form

__version__ = "0.1.0"
