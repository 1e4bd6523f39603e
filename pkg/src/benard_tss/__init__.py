"""Spectral-Galerkin Boussinesq (Benard) solver and finite trajectory
statistical solutions built from discrete initial measures."""
from .params import (DerivedConstants, Parameters, ValidatedParameters, derived_constants,
                     propose_gamma_epsilon, validate_parameters)
from .basis import (Grid, TempBasis, VelBasis, build_temperature_basis,
                    build_velocity_basis, quadrature_grid)
from .operators import OperatorSet, PhaseVector, assemble_operators, rhs, weak_residual
from .integrator import (EstimateReport, Trajectory, check_apriori_bounds,
                         check_energy_inequalities, integrate, step_imex)
from .measures import (DiscreteMeasure, DyadicPartition, TestFunctionalSuite,
                       annulus_decompose, choquet_approximate, dyadic_partition, eq0_gap,
                       moment, pushforward_at, recombine, tightness_radius)
from .engine import (StatSolutionReport, TrajectoryEnsemble, check_h_conditions,
                     galerkin_v, lift_measure, v_functional, verify_statistical_solution)

__version__ = "0.1.0"
