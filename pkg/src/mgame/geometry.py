"""Domain geometry: Bregman machinery, grounding, stable balls, collapsed centers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

L1L1 = "l1l1"
L2L1 = "l2l1"
KINDS = (L1L1, L2L1)

# Curvature exponent and compatibility constant shared by both setups.
RHO = 2
ZETA = 2.0


def iota(c):
    """Stability radius growth: iota(c) = exp(2*sqrt(2c))."""
    return math.exp(2.0 * math.sqrt(2.0 * c))


def pi_local(c, nu=0.0):
    """Local-boundedness factor: bregman >= pi * squared local norm on a ball.

    The universal bound is 1/(2c).  On a nu-truncated domain the ball's
    coordinates are also capped at min(c*z_i, 1), which sharpens the
    per-coordinate curvature floor to max(1/c, nu)/2; pass nu to use it.
    """
    return max(1.0 / (2.0 * c), 0.5 * nu)


def _owned(a):
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Point:
    """A primal-dual pair (x, y); arrays are copied and frozen on construction.

    Equality and hashing are by identity: anchor caches key on object
    identity, not coordinates.
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _owned(self.x))
        object.__setattr__(self, "y", _owned(self.y))


@dataclass(frozen=True)
class Setup:
    """Problem geometry: block domains, normalization, dgf, truncation level.

    Parameters
    ----------
    kind : str
        "l1l1" (simplex x simplex, max-norm bound) or "l2l1"
        (euclidean ball x simplex, row-norm bound).
    m, n : int
        Matrix shape; y lives in R^m, x in R^n.
    nu : float
        Truncation level for simplex blocks (coordinates floored at nu).
    """

    kind: str
    m: int
    n: int
    nu: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind `{self.kind}`")
        if self.m < 2 or self.n < 2:
            raise ValueError("need m, n >= 2")
        if not 0.0 < self.nu <= 1.0 / (self.m + self.n):
            raise ValueError("nu out of range")

    @property
    def d(self):
        return self.m + self.n

    @property
    def x_simplex(self):
        return self.kind == L1L1

    @property
    def gamma_range(self):
        """Range constant of the dgf over the domain."""
        if self.kind == L1L1:
            return math.log(self.m * self.n)
        return 0.5 + math.log(self.m)


def make_setup(kind, m, n, eps=1.0):
    """Build a Setup with the canonical truncation nu = min(min(eps,1)/(8 max(m,n)), 1/d)."""
    nu = min(min(eps, 1.0) / (8.0 * max(m, n)), 1.0 / (m + n))
    return Setup(kind, m, n, nu)


def uniform_point(setup):
    """Dgf minimizer over the truncated domain: uniform simplex blocks, origin ball block."""
    y = np.full(setup.m, 1.0 / setup.m)
    if setup.x_simplex:
        x = np.full(setup.n, 1.0 / setup.n)
    else:
        x = np.zeros(setup.n)
    return Point(x, y)


def kl(p, q):
    """Kullback-Leibler divergence sum(p log(p/q)) for strictly positive p, q."""
    p = np.asarray(p)
    q = np.asarray(q)
    return float(np.sum(p * (np.log(p) - np.log(q))))


def bregman(setup, src, dst):
    """Bregman divergence V_src(dst) of the setup's dgf.

    KL on simplex blocks, half squared euclidean distance on the ball block.
    Zero iff dst == src.
    """
    if setup.x_simplex:
        vx = kl(dst.x, src.x)
    else:
        dx = dst.x - src.x
        vx = 0.5 * float(dx @ dx)
    return vx + kl(dst.y, src.y)


def bregman_sum(setup, members, z):
    """Direct sum of bregman(setup, u, z) over the member multiset."""
    if isinstance(members, CenterSet):
        members = members.members
    return float(sum(bregman(setup, u, z) for u in members))


def hellinger_sq(p, q):
    """Squared Hellinger distance sum_i (sqrt(p_i) - sqrt(q_i))^2."""
    d = np.sqrt(p) - np.sqrt(q)
    return float(d @ d)


def collapse(setup, members):
    """Collapse a center multiset to its Bregman barycenter proxy.

    Simplex blocks take the normalized coordinatewise geometric mean
    (computed in log space); the ball block takes the arithmetic mean.
    The result satisfies sum_u V_u(z) = |U| V_collapsed(z) + const with
    the constant independent of z.
    """
    members = list(members)
    if not members:
        raise ValueError("empty center multiset")
    ys = np.stack([u.y for u in members])
    ly = np.mean(np.log(ys), axis=0)
    gy = np.exp(ly - ly.max())
    gy /= gy.sum()
    if setup.x_simplex:
        xs = np.stack([u.x for u in members])
        lx = np.mean(np.log(xs), axis=0)
        gx = np.exp(lx - lx.max())
        gx /= gx.sum()
    else:
        gx = np.mean(np.stack([u.x for u in members]), axis=0)
    return Point(gx, gy)


@dataclass(frozen=True)
class CenterSet:
    """Center multiset with its collapsed point and the collapsing constant.

    breg(z) evaluates sum_u V_u(z) in O(d) through the collapsing identity;
    bregman_sum remains the direct O(|U| d) route for audits.
    """

    setup: Setup
    members: tuple
    collapsed: Point
    const: float

    @classmethod
    def create(cls, setup, members):
        members = tuple(members)
        q = collapse(setup, members)
        const = bregman_sum(setup, members, q)
        return cls(setup, members, q, const)

    @property
    def card(self):
        return len(self.members)

    def breg(self, z):
        return self.card * bregman(self.setup, self.collapsed, z) + self.const

    def mean(self):
        """Arithmetic blockwise mean (the best-response query point)."""
        x = np.mean(np.stack([u.x for u in self.members]), axis=0)
        y = np.mean(np.stack([u.y for u in self.members]), axis=0)
        return Point(x, y)


# -- grounding ---------------------------------------------------------------
#
# The grounded matrix at basis z is H_y^{-1/2} A H_x^{-1/2} with H the dgf
# hessian per block, i.e. diag(sqrt(z_y)) A diag(sqrt(z_x)) on simplex blocks
# and an identity factor on the ball block.  Grounded vectors carry H^{1/2}.


def matrix_scalings(setup, basis):
    """Row/column scalings (r, c) with grounded A = diag(r) A diag(c)."""
    row = np.sqrt(basis.y)
    if setup.x_simplex:
        col = np.sqrt(basis.x)
    else:
        col = np.ones(setup.n)
    return row, col


def point_scalings(setup, basis):
    """Blockwise H^{1/2} scalings (sx, sy) grounding vectors at the basis."""
    sy = 1.0 / np.sqrt(basis.y)
    if setup.x_simplex:
        sx = 1.0 / np.sqrt(basis.x)
    else:
        sx = np.ones(setup.n)
    return sx, sy


def ground_point(setup, basis, z):
    """Grounded coordinates of z at the basis, as a plain (gx, gy) pair."""
    sx, sy = point_scalings(setup, basis)
    return z.x * sx, z.y * sy


def grounded_dense(setup, a, basis):
    """Dense grounded matrix (audit helper, no oracle involved)."""
    row, col = matrix_scalings(setup, basis)
    return row[:, None] * np.asarray(a) * col[None, :]


def local_norm_sq(setup, basis, dx, dy):
    """Squared local norm at the basis: ||(d)_basis||_2^2."""
    ny = float(np.sum(dy * dy / basis.y))
    if setup.x_simplex:
        nx = float(np.sum(dx * dx / basis.x))
    else:
        nx = float(dx @ dx)
    return nx + ny


# -- stable balls ------------------------------------------------------------


@dataclass(frozen=True)
class StableBall:
    """Multiplicative coordinate box around a center point.

    Simplex coordinates are confined to [max(nu, center/c), min(c*center, 1)];
    the ball block is unconstrained.  lo_x/hi_x are None for the l2-l1 x block.
    """

    setup: Setup
    center: Point
    c: float
    lo_x: np.ndarray | None
    hi_x: np.ndarray | None
    lo_y: np.ndarray
    hi_y: np.ndarray


def stable_ball(setup, center, c):
    """Build the c-stable ball around a center in the truncated domain."""
    if c <= 1.0:
        raise ValueError("stability factor must exceed 1")
    lo_y = np.maximum(setup.nu, center.y / c)
    hi_y = np.minimum(c * center.y, 1.0)
    if setup.x_simplex:
        lo_x = np.maximum(setup.nu, center.x / c)
        hi_x = np.minimum(c * center.x, 1.0)
    else:
        lo_x = hi_x = None
    return StableBall(setup, center, c, lo_x, hi_x, lo_y, hi_y)


def contains(ball, z, atol=1e-12):
    """Box membership test with a small absolute slack."""
    if np.any(z.y < ball.lo_y - atol) or np.any(z.y > ball.hi_y + atol):
        return False
    if ball.lo_x is not None:
        if np.any(z.x < ball.lo_x - atol) or np.any(z.x > ball.hi_x + atol):
            return False
    return True


# -- gap ---------------------------------------------------------------------


def gap_from_actions(setup, ax, aty):
    """Saddle-point gap from the two action vectors A x and A^T y.

    l1-l1: max_i (Ax)_i - min_j (A^T y)_j; l2-l1: max_i (Ax)_i + ||A^T y||_2.
    """
    if setup.kind == L1L1:
        return float(np.max(ax) - np.min(aty))
    return float(np.max(ax) + math.sqrt(float(aty @ aty)))
