"""Nonlinear reduced models for state estimation from local measurements.

A parametric elliptic problem is discretised with P1 finite elements; its
solution manifold is covered by a family of local affine reduced spaces, each
paired with a PBDW reconstruction.  The PDE residual picks the best local
estimate and yields a parameter estimate; alternating minimisation refines
both.
"""

from .altmin import AltMinError, AltMinState, apply_S, apply_T, run_altmin, v_step, y_step
from .estimation import (PlausibleSet, SelectionResult, estimate_parameter, oracle_select,
                         plausible_set, select_state)
from .family import Cell, ReducedFamily, build_family, fixed_family, split_direction
from .fem import (DiscreteSpace, Grid, NotSPDError, SolverError, SPDFactor, assemble_load,
                  assemble_weighted_stiffness, build_grid, build_space, count_solves, riesz_lift,
                  solve_spd, v_inner, v_norm)
from .measurement import (MeasurementSpace, Observation, build_measurements, observe_noisy,
                          project_W)
from .model import (AffineModel, ParameterBox, SnapshotSet, build_model, ellipticity_bounds,
                    sample_snapshots, solve_state)
from .pbdw import PBDWError, reconstruct
from .reduced_basis import (AffineReducedSpace, RBHierarchy, best_dimension, greedy_hierarchy,
                            stability_mu)
from .residual import ResidualQuadratic, build_quadratic, minimize_box, surrogate_S

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
