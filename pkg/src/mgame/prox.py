"""Typed wrappers for the separable and composite Bregman prox subproblems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, geometry
from .errors import InvariantError


@dataclass(frozen=True)
class ProxRegion:
    """Feasible region in kernel form: per-block boxes with cached logs.

    The x arrays are placeholders when the x block is the euclidean ball
    (the kernels ignore them there).
    """

    setup: geometry.Setup
    lox: np.ndarray
    hix: np.ndarray
    llox: np.ndarray
    lhix: np.ndarray
    loy: np.ndarray
    hiy: np.ndarray
    lloy: np.ndarray
    lhiy: np.ndarray


def region(setup, ball=None):
    """Kernel-ready region: a stable ball's box, or the full truncated domain."""
    if ball is None:
        loy = np.full(setup.m, setup.nu)
        hiy = np.ones(setup.m)
        if setup.x_simplex:
            lox = np.full(setup.n, setup.nu)
            hix = np.ones(setup.n)
        else:
            lox, hix = np.ones(setup.n), np.ones(setup.n)
    else:
        loy, hiy = ball.lo_y, ball.hi_y
        if setup.x_simplex:
            lox, hix = ball.lo_x, ball.hi_x
        else:
            lox, hix = np.ones(setup.n), np.ones(setup.n)
    return ProxRegion(setup, lox, hix, np.log(lox), np.log(hix),
                      loy, hiy, np.log(loy), np.log(hiy))


def local_weights(setup, basis):
    """Diagonal weights of the squared local norm at the basis."""
    icy = 1.0 / basis.y
    if setup.x_simplex:
        icx = 1.0 / basis.x
    else:
        icx = np.ones(setup.n)
    return icx, icy


def _combine_centers(setup, centers):
    """Weighted log-sum (simplex) / point-sum (ball) of prox centers."""
    wsum = 0.0
    base_y = np.zeros(setup.m)
    base_x = np.zeros(setup.n)
    for w, c in centers:
        wsum += w
        base_y += w * np.log(c.y)
        if setup.x_simplex:
            base_x += w * np.log(c.x)
        else:
            base_x += w * c.x
    if wsum <= 0.0:
        raise ValueError("prox needs positive total center weight")
    return base_x, base_y, wsum


def solve_separable(setup, reg, g, centers):
    """Exact minimizer of <g, p> + sum_k w_k V_{c_k}(p) over the region.

    g is an (n,), (m,) pair; centers is a list of (weight, Point).  Simplex
    blocks go through the clipped-exponential multiplier bisection, the ball
    block through a clipped affine projection.
    """
    gx, gy = g
    base_x, base_y, wsum = _combine_centers(setup, centers)
    try:
        px, py, _, _, _ = _kernels.composite_solve(
            setup.x_simplex, np.asarray(gx, dtype=np.float64),
            np.asarray(gy, dtype=np.float64),
            np.zeros((1, 1)), False,
            base_x, base_y, wsum,
            reg.lox, reg.hix, reg.llox, reg.lhix,
            reg.loy, reg.hiy, reg.lloy, reg.lhiy,
            np.ones(setup.n), np.ones(setup.m),
            np.zeros(setup.n), np.zeros(setup.m), 0.0, 1)
    except ValueError as exc:
        raise InvariantError(f"corrupted prox region bounds: {exc}") from exc
    return geometry.Point(px, py)


@dataclass
class CompositeProxProblem:
    """Composite VI: constant g, bilinear skew coupling, Bregman center terms.

    Operator F(p) = g + (skew^T p_y, -skew p_x) + sum_k w_k grad V_{c_k}(p)
    over the region; (sum_k w_k)-strongly monotone relative to the dgf.
    skew=None reduces to the separable closed-form case.
    """

    setup: geometry.Setup
    reg: ProxRegion
    g: tuple
    centers: list
    skew: np.ndarray | None = None

    @property
    def monotone_weight(self):
        return float(sum(w for w, _ in self.centers))


def solve_composite_prox(problem, norm_basis, tol, warm=None, max_iter=200_000):
    """Solve the composite VI to a fixed-point movement below tol.

    Movement is measured in the local norm at norm_basis.  Raises
    InvariantError if the iteration fuse is hit without convergence or
    machine-precision stagnation.
    """
    setup = problem.setup
    gx, gy = problem.g
    base_x, base_y, wsum = _combine_centers(setup, problem.centers)
    if problem.skew is None:
        skew, has_skew = np.zeros((1, 1)), False
    else:
        skew = np.ascontiguousarray(problem.skew, dtype=np.float64)
        has_skew = True
    icx, icy = local_weights(setup, norm_basis)
    if warm is None:
        warm = norm_basis
    try:
        px, py, iters, status, mv = _kernels.composite_solve(
            setup.x_simplex, np.asarray(gx, dtype=np.float64),
            np.asarray(gy, dtype=np.float64), skew, has_skew,
            base_x, base_y, wsum,
            problem.reg.lox, problem.reg.hix, problem.reg.llox, problem.reg.lhix,
            problem.reg.loy, problem.reg.hiy, problem.reg.lloy, problem.reg.lhiy,
            icx, icy, np.asarray(warm.x, dtype=np.float64),
            np.asarray(warm.y, dtype=np.float64), tol, max_iter)
    except ValueError as exc:
        raise InvariantError(f"corrupted prox region bounds: {exc}") from exc
    if status == 2 and mv > max(tol, 1e-12):
        raise InvariantError(
            f"composite prox failed to converge: movement {mv:.3e} after {iters} iterations")
    return geometry.Point(px, py), iters
