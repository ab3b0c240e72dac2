"""Adaptive H(div)-conforming DG eigensolver for the Stokes operator."""

from .mesh import Cell, Edge, EdgeKind, Mesh, active_edges, make_domain, refine
from .quadrature import QuadratureRule, cell_rule, edge_rule, gauss_1d
from .spaces import (
    DofMap,
    build_dofmap,
    eval_velocity,
    interpolate_velocity,
    pressure_mean_vector,
    project_pressure,
)
from .assembly import AssembledSystem, assemble, assemble_load, divergence_l2
from .eigsolver import (
    EigenPair,
    NonConvergenceError,
    Pencil,
    SingularSystemError,
    build_pencil,
    factorize,
    rayleigh_check,
    smallest_eigenpair,
)
from .estimator import EstimatorBreakdown, efficiency_ratio, estimate
from .adapt import ConvergenceRecord, adaptive_loop, doerfler_mark
from .sourceprob import ManufacturedCase, default_case, mms_rates, solve_source
from .io import RunConfig, write_convergence_csv, write_vtk

__all__ = [name for name in dir() if not name.startswith("_")]
