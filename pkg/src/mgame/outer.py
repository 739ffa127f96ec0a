"""Outer multi-center loops: the generic schedule and the matrix-games solver.

The driver keeps K center sequences on a power-of-two refresh schedule.
Each iteration rebuilds the telescoping segment path over the centers,
runs one regularization search against it, then refreshes the centers
whose level fires at this iteration (their models reset to zero; the
others keep whatever the search learned in place).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry, oracle, path, search
from .errors import InvariantError

FUSE_MULTIPLIER = 10


def active_indices(t, K):
    """Levels refreshed at iteration t: {k in [K] : 2^(K-k) divides t}."""
    if t < 1 or K < 1:
        raise ValueError("need t >= 1 and K >= 1")
    return {k for k in range(1, K + 1) if t % (1 << (K - k)) == 0}


@dataclass(frozen=True)
class OuterConfig:
    """Iteration-schedule constants derived from the accuracy target."""

    eps_alg: float
    K: int
    s_target: float
    t_bound: float

    @classmethod
    def create(cls, setup, eps_alg, beta, rho=2, gamma=2.0):
        g = setup.gamma_range
        load = beta / eps_alg + gamma ** (-1.0 / (rho + 1)) * eps_alg ** (-rho / (rho + 1.0))
        K = math.ceil(5.0 * math.log2(g * load + 2.0)) + 5
        t_bound = K * g * load + 2.0
        if K < math.log2(t_bound) + 5:
            raise InvariantError("level count too small for the dyadic schedule")
        return cls(eps_alg, K, K * g / eps_alg, t_bound)

    @property
    def fuse(self):
        return int(FUSE_MULTIPLIER * self.t_bound)


def multiprox_generic(gamma_range, eps, K, dmp, policy=active_indices,
                      t_bound=None, init=None):
    """Schedule-only loop for arbitrary multiprox oracles; used by property tests.

    dmp(centers, t) returns (point, alpha).  Centers live in whatever space
    the oracle understands.  Returns the list of (alpha, point) pairs; the
    weighted combination is left to the caller since the point type is
    opaque here.
    """
    target = K * gamma_range / eps
    fuse = int(FUSE_MULTIPLIER * t_bound) if t_bound is not None else 10_000_000
    centers = [init] * K
    out = []
    s = 0.0
    t = 0
    while s < target:
        t += 1
        if t > fuse:
            raise InvariantError("outer iteration fuse tripped")
        z, alpha = dmp(list(centers), t)
        if alpha <= 0.0:
            raise ValueError("oracle returned nonpositive alpha")
        for k in policy(t, K):
            centers[k - 1] = z
        out.append((alpha, z))
        s += 1.0 / alpha
    return out


@dataclass
class SolveReport:
    kind: str
    m: int
    n: int
    eps_final: float
    eps_alg: float
    nu: float
    K: int
    T: int
    gap_certified: float
    matvecs: dict
    alpha_history: list
    wallclock_ms: float

    def as_dict(self):
        return {
            "kind": self.kind, "m": self.m, "n": self.n,
            "eps_final": self.eps_final, "eps_alg": self.eps_alg,
            "nu": self.nu, "K": self.K, "T": self.T,
            "gap_certified": self.gap_certified, "matvecs": dict(self.matvecs),
            "alpha_history": list(self.alpha_history),
            "wallclock_ms": self.wallclock_ms,
        }


@dataclass
class AuditTrail:
    """Dense-mode measurements accumulated across a solve; test fodder only."""

    movement: float = 0.0
    alt_movement: float = 0.0
    telescope_err: float = 0.0
    size_released: float = 0.0
    kinetic: list = field(default_factory=list)
    z_history: list = field(default_factory=list)


def _assemble(setup, centers, models):
    segs = []
    prev = None
    for w, mdl in zip(centers, models):
        segs.append(path.PathSegment(prev, w, mdl))
        prev = w
    return path.MatrixApproxPath(segs)


def _telescope_error(setup, dense, centers):
    total = np.zeros_like(dense)
    prev = None
    for w in centers:
        head = geometry.grounded_dense(setup, dense, w)
        total += head if prev is None else head - prev
        prev = head
    return float(np.linalg.norm(total - prev))


def solve_game(orc, eps_final, *, audit=False, trace=None,
               m_lip=1.0, c_kappa=1e-2):
    """Solve the game behind the oracle to a certified gap below eps_final.

    Returns (SolveReport, AuditTrail-or-None).  Audit mode records the
    dense-only invariant measurements (movement sums, telescoping error,
    size released by convictions, kineticness witnesses) and the full
    iterate history; it reads the backing matrix directly but charges
    nothing to the algorithm's ledger.
    """
    if not 0.0 < eps_final <= 1.0:
        raise ValueError("eps_final must lie in (0, 1]")
    start = time.perf_counter()
    m, n = orc.shape
    setup = geometry.make_setup(orc.kind, m, n, eps_final)
    eps_alg = eps_final / 4.0
    params = search.MdmpParams.create(setup, eps_alg, m_lip=m_lip,
                                      c_kappa=c_kappa)
    cfg = OuterConfig.create(setup, eps_alg, params.beta)
    K = cfg.K
    ledger = oracle.MatvecLedger()

    z0 = geometry.uniform_point(setup)
    centers = [z0] * K
    models = [path.RankOneModel(m, n) for _ in range(K)]
    alpha_history = []
    s = 0.0
    acc_x = np.zeros(n)
    acc_y = np.zeros(m)
    trail = AuditTrail() if audit else None
    t = 0
    while s < cfg.s_target:
        t += 1
        if t > cfg.fuse:
            raise InvariantError("outer iteration fuse tripped")
        pth = _assemble(setup, centers, models)
        act = active_indices(t, K)
        active_centers = [centers[k - 1] for k in act]
        ucen = geometry.CenterSet.create(setup, active_centers)
        if audit:
            trail.telescope_err = max(
                trail.telescope_err,
                _telescope_error(setup, orc.matrix, centers))
            size_before = path.size_dense(pth, setup, orc.matrix)
        z, alpha = search.mdmp_search(setup, orc, ledger, ucen, pth, params,
                                      trace)
        if audit:
            trail.size_released += size_before - path.size_dense(pth, setup,
                                                                 orc.matrix)
            trail.kinetic.append(
                (alpha, geometry.bregman_sum(setup, active_centers, z)))
        if audit:
            prev_centers = list(centers)
        for k in act:
            centers[k - 1] = z
            models[k - 1] = path.RankOneModel(m, n)
        if audit:
            for k in act:
                trail.movement += geometry.bregman(setup, prev_centers[k - 1], z)
            # Active levels share one point, so consecutive-level divergences
            # vanish except across the lowest active boundary.
            k_min = min(act)
            anchor = centers[k_min - 2] if k_min >= 2 else z0
            trail.alt_movement += geometry.bregman(setup, anchor, z)
            trail.z_history.append(z)
        alpha_history.append(alpha)
        s += 1.0 / alpha
        acc_x += z.x / alpha
        acc_y += z.y / alpha

    zbar = geometry.Point(acc_x / s, acc_y / s)
    gap = oracle.certified_gap(setup, orc, ledger, zbar)
    ms = (time.perf_counter() - start) * 1e3
    report = SolveReport(setup.kind, m, n, eps_final, eps_alg, setup.nu, K, t,
                         gap, ledger.as_dict(), alpha_history, ms)
    return report, trail
