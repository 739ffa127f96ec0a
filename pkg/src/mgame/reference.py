"""Independent audit references, kept deliberately separate from the solver path.

Everything here works in euclidean geometry: projected extragradient for the
regularized VIs and exact greedy linear programs for residual audits.  None of
it touches the entropic prox kernels, so agreement between the two routes is
evidence, not tautology.
"""
from __future__ import annotations

import numpy as np


def project_box_simplex(v, lo, hi, tol=1e-14, max_iter=300):
    """Euclidean projection onto {p : lo <= p <= hi, sum p = 1} by shift bisection."""
    la = float(np.min(v - hi))
    lb = float(np.max(v - lo))
    for _ in range(max_iter):
        lm = 0.5 * (la + lb)
        p = np.clip(v - lm, lo, hi)
        s = p.sum()
        if abs(s - 1.0) <= tol:
            break
        if s > 1.0:
            la = lm
        else:
            lb = lm
    return np.clip(v - 0.5 * (la + lb), lo, hi)


def project_ball(v):
    nrm = float(np.linalg.norm(v))
    return v / nrm if nrm > 1.0 else v.copy()


def linmin_box_simplex(g, lo, hi):
    """Exact minimizer of <g, u> over the boxed simplex (greedy fill).

    Returns (value, point).  Coordinates are raised from lo toward hi in
    ascending order of g until the unit budget is exhausted.
    """
    u = lo.astype(np.float64).copy()
    budget = 1.0 - u.sum()
    if budget < -1e-12:
        raise ValueError("infeasible box: sum(lo) exceeds 1")
    for i in np.argsort(g, kind="stable"):
        if budget <= 0.0:
            break
        room = hi[i] - u[i]
        take = room if room < budget else budget
        u[i] += take
        budget -= take
    return float(g @ u), u


def linmin_ball(g):
    """Exact minimizer of <g, u> over the unit ball."""
    nrm = float(np.linalg.norm(g))
    if nrm == 0.0:
        return 0.0, np.zeros_like(g)
    u = -g / nrm
    return -nrm, u


def composite_operator(x_simplex, gx, gy, skew, centers):
    """Build F(p) for the composite VI: constant + skew coupling + center gradients."""
    def op(px, py):
        fx = gx.copy()
        fy = gy.copy()
        if skew is not None:
            fx = fx + skew.T @ py
            fy = fy - skew @ px
        for w, cx, cy in centers:
            fy = fy + w * (np.log(py) - np.log(cy))
            if x_simplex:
                fx = fx + w * (np.log(px) - np.log(cx))
            else:
                fx = fx + w * (px - cx)
        return fx, fy
    return op


def solve_composite(x_simplex, gx, gy, skew, centers,
                    lo_x, hi_x, lo_y, hi_y,
                    tol=1e-11, max_iter=2_000_000):
    """Euclidean projected extragradient for the composite VI.

    The center list holds (weight, cx, cy) triples; simplex blocks use the
    boxes, the ball block ignores lo_x/hi_x.  Stops on euclidean movement
    below tol.  Step size is set from a crude Lipschitz estimate and halved
    whenever the iteration expands.
    """
    wsum = sum(w for w, _, _ in centers)
    if wsum <= 0.0:
        raise ValueError("composite reference needs positive center weight")
    floor = min(float(np.min(lo_y)), float(np.min(lo_x)) if x_simplex else 1.0)
    lip = wsum / max(floor, 1e-12)
    if skew is not None:
        lip += float(np.linalg.norm(skew, 2))
    eta = 1.0 / (2.0 * lip)
    op = composite_operator(x_simplex, gx, gy, skew, centers)

    def proj(px, py):
        py = project_box_simplex(py, lo_y, hi_y)
        if x_simplex:
            px = project_box_simplex(px, lo_x, hi_x)
        else:
            px = project_ball(px)
        return px, py

    if x_simplex:
        px = project_box_simplex(np.full_like(lo_x, 1.0 / lo_x.shape[0]), lo_x, hi_x)
    else:
        px = np.zeros_like(lo_x)
    py = project_box_simplex(np.full_like(lo_y, 1.0 / lo_y.shape[0]), lo_y, hi_y)
    prev_mv = np.inf
    for it in range(max_iter):
        fx, fy = op(px, py)
        hx, hy = proj(px - eta * fx, py - eta * fy)
        fx2, fy2 = op(hx, hy)
        nx, ny = proj(px - eta * fx2, py - eta * fy2)
        mv = float(np.linalg.norm(nx - px) + np.linalg.norm(ny - py))
        px, py = nx, ny
        if mv <= tol * eta * wsum:
            break
        if mv > 4.0 * prev_mv and it > 10:
            eta *= 0.5
            prev_mv = np.inf
            continue
        prev_mv = mv
    return px, py


def vi_residual(x_simplex, fx, fy, px, py, lo_x, hi_x, lo_y, hi_y):
    """Exact worst-case VI residual max_u <F(p), p - u> over the product region."""
    vy, _ = linmin_box_simplex(fy, lo_y, hi_y)
    if x_simplex:
        vx, _ = linmin_box_simplex(fx, lo_x, hi_x)
    else:
        vx, _ = linmin_ball(fx)
    return float(fx @ px + fy @ py - vx - vy)
