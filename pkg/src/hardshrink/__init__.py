"""Iterative hard-thresholding solvers for sparse and low-rank estimation."""
from ._backend import BACKEND
from .numkit import RngStream, svd, solve_restricted, sym_eig_extremes, top_k_indices
from .projections import hard_threshold, partial_hard_threshold, rank_project
from .solvers import SolverConfig, iht_solve, matrix_iht_solve, pht_solve, two_stage_solve

__version__ = "0.1.0"
