"""Inertial spin flocking model: particles, mean-field equilibria, continuum limits."""

__version__ = "0.1.0"

from .analysis import (AsymptoticVerdict, Trajectory, classify_asymptotic,
                       corollary_thresholds, w_infinity)
from .core import (AgentState, Ensemble, ModelParams, SigmaView, mean_velocity,
                   potential_energy, sigma_of, total_energy, total_spin)
from .geometry import cross, omega_matrix, rotate_about, tangent_project
from .integrators import (RngStream, StepReport, run, step_deterministic,
                          step_free_space, step_stochastic)
from .interactions import (ConstantKernel, DistanceKernel, IndicatorProfile,
                           MultiplicativeKernel, RankKernel, SmoothBumpProfile,
                           SpatialIndex, TableProfile, continuum_w, w_constant,
                           w_distance, w_multiplicative, w_rank)
from .meanfield import (EquilibriumSolution, critical_coupling, free_energy_product,
                        h, sample_equilibrium, selfconsistency_residual,
                        solve_selfconsistency)
from .monokinetic import (ExpansionCheck, LineChain, MonokineticField1D,
                          PolarField2D, coeff_bK, coeff_line, coeff_rank,
                          expansion_check, expansion_slope, line_rhs, line_step,
                          pde_rhs_1d, pde_step_1d, polar_rotating_state,
                          traveling_curve)

__all__ = [name for name in dir() if not name.startswith("_")]
