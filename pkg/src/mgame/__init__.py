"""Matvec-metered saddle point solvers for matrix games.

The library solves two families to certified gap eps: simplex x simplex
(zero-sum games under a max-entry norm bound) and ball x simplex (hard
margin classification under row norm bounds).  The main solver keeps a
low rank model of the matrix along a path of anchor points and pays for
matrix-vector products only when a cheap smoothness test fails; every
product is metered by phase so sweeps can compare oracle complexity
against a classical mirror prox baseline honestly.
"""
from .bench import (InstanceSpec, SweepSpec, generate, mirror_prox_baseline,
                    run_sweep, verify)
from .errors import InvariantError
from .geometry import (L1L1, L2L1, Point, Setup, bregman, gap_from_actions,
                       make_setup, uniform_point)
from .oracle import DenseBacking, MatvecLedger, certified_gap, load, save
from .outer import SolveReport, solve_game

__all__ = [
    "InstanceSpec", "SweepSpec", "generate", "mirror_prox_baseline",
    "run_sweep", "verify", "InvariantError", "L1L1", "L2L1", "Point",
    "Setup", "bregman", "gap_from_actions", "make_setup", "uniform_point",
    "DenseBacking", "MatvecLedger", "certified_gap", "load", "save",
    "SolveReport", "solve_game",
]
