"""Multinode Shepard collocation for the two-asset Black-Scholes equation."""
from .assembly import SpatialSystem, assemble, boundary_vector
from .covering import (Covering, DegenerateNeighborhoodError, InsufficientNodesError,
                       build_covering, leja_select, nearest_neighbors)
from .experiment import ErrorReport, ExperimentConfig, evaluation_grid, measure_errors, run_experiment
from .fdref import FDSolution, fd_interpolate, fd_solve
from .geometry import (NodeSet, NodeSetError, enrich_with_lines, halton_nodeset,
                       uniform_nodeset, waldron_nodeset)
from .localpoly import build_local_interpolant, eval_lambda
from .model import MarketParams, apply_L, far_field, payoff
from .rbf import RbfModel, rbf_assemble, rbf_nodeset_fig1
from .shepard import MultinodeShepard, ShepardParams, ms_interpolate
from .timestepper import TimeStepError, Trajectory, run

__version__ = "0.1.0"
