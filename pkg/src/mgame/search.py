"""Regularization search: cautious doubling-then-bisection over the inner solver.

The searched parameter is the regularization weight alpha.  A probe at
alpha runs the full constrained inner pipeline (best-response map, center
selection, inner solve) and reports success or failure from divergence
checks; the driver never probes far above the weight it eventually
returns, which is what keeps wasted matvecs bounded.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry, oracle, path, prox, supg
from .errors import InvariantError

SUCCESS = "success"
FAILURE = "failure"

# Below this the divergence tolerance is noise at double precision.
KAPPA_FLOOR = 1e-15


@dataclass
class SearchOracleResult:
    point: geometry.Point | None
    flag: str

    def __post_init__(self):
        if self.flag == SUCCESS and self.point is None:
            raise ValueError("success result needs a point")

    @property
    def ok(self):
        return self.flag == SUCCESS


@dataclass(frozen=True)
class MdmpParams:
    """Derived search constants for a given setup and algorithmic accuracy.

    beta is the regularization floor, tau the inner smoothness threshold,
    eps_prime the bisection granularity.  delta is pinned by the midpoint
    identity (1+delta) iota(4) = (iota(4)+iota(5))/2, checked numerically
    at construction together with the strict stability orderings.
    """

    setup: geometry.Setup
    eps_alg: float
    beta: float
    theta_l: float
    tau: float
    delta: float
    eps_prime: float
    rho: int = 2
    gamma: float = 2.0
    m_lip: float = 1.0
    c_kappa: float = 1e-2

    def __post_init__(self):
        if not (self.theta_l > 0.0 and self.eps_prime > 0.0):
            raise ValueError("need positive theta_l and eps_prime")
        i3, i4, i5 = geometry.iota(3.0), geometry.iota(4.0), geometry.iota(5.0)
        lift = 1.0 + self.delta
        mid = 0.5 * (i4 + i5)
        if not (lift * lift * i3 < lift * i4 < i5):
            raise ValueError("delta breaks the stability ordering")
        if abs(lift * i4 - mid) > 1e-9 * mid:
            raise ValueError("delta misses the midpoint identity")

    @classmethod
    def create(cls, setup, eps_alg, m_lip=1.0, c_kappa=1e-2):
        beta = eps_alg ** (1.0 / 3.0)
        delta = 0.5 * (math.exp(2.0 * math.sqrt(10.0) - 4.0 * math.sqrt(2.0)) - 1.0)
        eps_prime = min((1.0 - math.sqrt(14.0 / 15.0)) * beta,
                        beta * beta / (15.0 * m_lip))
        return cls(setup, eps_alg, beta, beta, beta, delta, eps_prime,
                   m_lip=m_lip, c_kappa=c_kappa)

    def theta_r(self, card):
        """Upper end of the search range; beyond it failure cannot occur."""
        s = self.setup
        return 0.5 * math.sqrt(12.0 * card * math.log(1.0 / (s.nu * s.d)))

    def kappa(self, alpha, card):
        """Robustness tolerance: inexactness the divergence checks absorb."""
        s = self.setup
        lognu = math.log(1.0 / s.nu)
        return self.c_kappa * min(
            self.delta ** 2 * s.nu ** 2,
            alpha ** 4 / (card ** 2 * (1.0 + lognu ** 2)),
            self.eps_alg ** 2 / (1.0 + (alpha * card) ** 2 / s.nu ** 2))


def cautious_bisection(eps_prime, theta_l, theta_r, probe, gamma=2.0):
    """Find the smallest workable weight without overshooting it by more than 2x.

    probe maps alpha to a SearchOracleResult and must be deterministic; a
    success at theta_r is a precondition.  Returns (point, alpha) where the
    probe succeeded, with alpha = theta_l or a failure witnessed less than
    eps_prime below alpha.
    """
    res = probe(theta_l)
    if res.ok:
        return res.point, theta_l
    lo = theta_l
    while True:
        p = min(gamma * lo, theta_r)
        res = probe(p)
        if res.ok:
            hi, point = p, res.point
            break
        if p >= theta_r:
            raise InvariantError("search failed at the top of the range")
        lo = p
    jstar = max(1, math.ceil(math.log2((hi - lo) / eps_prime)))
    for _ in range(jstar):
        mid = 0.5 * (lo + hi)
        res = probe(mid)
        if res.ok:
            hi, point = mid, res.point
        else:
            lo = mid
    return point, hi


def best_response_map(setup, orc, ledger, alpha, ucen, products=None):
    """Regularized best response to the centers' mean point.

    The two mean-gradient matvecs are alpha-independent; pass their cached
    pair back in to re-solve at another alpha for free.  Returns
    (point, products).
    """
    if products is None:
        q = ucen.mean()
        gx = oracle.counted_matvec_t(orc, ledger, "map_and_center", q.y)
        gy = -oracle.counted_matvec(orc, ledger, "map_and_center", q.x)
        products = (gx, gy)
    reg = prox.region(setup)
    z = prox.solve_separable(setup, reg, products,
                             [(alpha * ucen.card, ucen.collapsed)])
    return z, products


def select_center(setup, z_tilde, ucen):
    """Divergence-sum minimizer over the iota(5)-stable ball around z_tilde."""
    ball = geometry.stable_ball(setup, z_tilde, geometry.iota(5.0))
    reg = prox.region(setup, ball)
    zero = (np.zeros(setup.n), np.zeros(setup.m))
    return prox.solve_separable(setup, reg, zero, [(ucen.card, ucen.collapsed)])


def constrained_solve(setup, orc, ledger, ucen, base_path, alpha, params,
                      products=None, trace=None):
    """One search probe at weight alpha.

    Flow: best-response map, center selection, an early divergence check
    that costs no further matvecs, then the inner solve on the path
    extended by a head segment at the selected center.  The head segment's
    model is discarded with the extended path; updates to the shared
    segments persist.  Returns (SearchOracleResult, products).
    """
    z_tilde, products = best_response_map(setup, orc, ledger, alpha, ucen,
                                          products)
    z_center = select_center(setup, z_tilde, ucen)
    asq = alpha * alpha
    v_center = ucen.breg(z_center)
    if v_center > 3.0 * asq:
        result = SearchOracleResult(None, FAILURE)
        if trace is not None:
            trace({"alpha": alpha, "flag": FAILURE, "early": True,
                   "v_center": v_center})
        return result, products

    pth = path.append_head(base_path, z_center)
    eps_db = max(params.kappa(alpha, ucen.card), KAPPA_FLOOR)
    res = supg.solve(setup, orc, ledger, ucen, pth, alpha, params.tau, eps_db)
    guard = geometry.stable_ball(setup, z_center,
                                 geometry.iota(4.0) * geometry.iota(5.0))
    v_out = ucen.breg(res.point)
    ok = geometry.contains(guard, res.point) and v_out <= 2.5 * asq
    result = SearchOracleResult(res.point if ok else None,
                                SUCCESS if ok else FAILURE)
    if trace is not None:
        trace({"alpha": alpha, "flag": result.flag, "early": False,
               "v_center": v_center, "v_out": v_out,
               "smooth": res.smooth_steps, "guilty": res.guilty_steps})
    return result, products


def mdmp_search(setup, orc, ledger, ucen, base_path, params, trace=None):
    """Full search: returns (z_star, alpha_star); the path is updated in place."""
    theta_r = params.theta_r(ucen.card)
    if theta_r <= params.theta_l:
        raise InvariantError("degenerate search range")
    memo = {"products": None}

    def probe(alpha):
        result, memo["products"] = constrained_solve(
            setup, orc, ledger, ucen, base_path, alpha, params,
            memo["products"], trace)
        return result

    return cautious_bisection(params.eps_prime, params.theta_l, theta_r, probe,
                              gamma=params.gamma)
