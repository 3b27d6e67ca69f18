"""Fast multipole / boundary element preconditioning toolkit in 2-D.

Building blocks: an adaptive quadtree and logarithmic-kernel expansion
operators (:mod:`fmmprec.quadtree`, :mod:`fmmprec.kernels`), a dual tree
traversal evaluator (:mod:`fmmprec.fmm`), a constant-element boundary
integral solver for the inhomogeneous Poisson problem (:mod:`fmmprec.bem`),
sparse Q1 finite element test systems (:mod:`fmmprec.fem`), Krylov solvers
with standard preconditioners (:mod:`fmmprec.krylov`), the glue presenting
the boundary-integral solve as an approximate stiffness inverse
(:mod:`fmmprec.preconditioner`), and a benchmark command line
(:mod:`fmmprec.bench`).
"""

from .kernels import FmmConfig
from .fmm import (
    FmmPlan,
    InteractionStats,
    direct_evaluate,
    fmm_evaluate,
)
from .quadtree import Cell, QuadTree, build_quadtree

__all__ = [
    "FmmConfig",
    "FmmPlan",
    "InteractionStats",
    "direct_evaluate",
    "fmm_evaluate",
    "Cell",
    "QuadTree",
    "build_quadtree",
]

__version__ = "0.1.0"
