"""Jitted numeric kernels: clipped-exponential simplex prox, composite VI loop."""
from __future__ import annotations

import numpy as np
from numba import njit

SUM_TOL = 1e-13
MAX_BISECT = 200


@njit(cache=True, nogil=True)
def simplex_prox(score, lo, hi, llo, lhi):
    """Box-constrained entropic prox on the simplex.

    Solves p_i = clip(exp(score_i + theta), lo_i, hi_i) with sum(p) = 1 by
    a bracketed Newton iteration on theta.  The sum is monotone in theta and
    exponential on each clipping cell, so a Newton step with bisection
    fallback lands within 1e-13 of mass 1 in a handful of sweeps; the
    multiplier bracket saturates every coordinate at its bound, so the root
    is always enclosed.
    """
    n = score.shape[0]
    smax = score[0]
    for i in range(1, n):
        if score[i] > smax:
            smax = score[i]
    e = np.empty(n)
    sum_lo = 0.0
    sum_hi = 0.0
    for i in range(n):
        e[i] = np.exp(score[i] - smax)
        sum_lo += lo[i]
        sum_hi += hi[i]
    if sum_lo > 1.0 + 1e-9 or sum_hi < 1.0 - 1e-9:
        raise ValueError("infeasible simplex box")
    ta = np.inf
    tb = -np.inf
    for i in range(n):
        tl = llo[i] - (score[i] - smax)
        th = lhi[i] - (score[i] - smax)
        if tl < ta:
            ta = tl
        if th > tb:
            tb = th
    p = np.empty(n)
    tm = 0.5 * (ta + tb)
    for _ in range(MAX_BISECT):
        t = np.exp(tm)
        s = 0.0
        ds = 0.0
        for i in range(n):
            v = e[i] * t
            if v < lo[i]:
                v = lo[i]
            elif v > hi[i]:
                v = hi[i]
            else:
                ds += v
            p[i] = v
            s += v
        if abs(s - 1.0) <= SUM_TOL:
            break
        if s > 1.0:
            tb = tm
        else:
            ta = tm
        if ds > 0.0:
            tn = tm + (1.0 - s) / ds
            if ta < tn < tb:
                tm = tn
                continue
        tm = 0.5 * (ta + tb)
    return p


@njit(cache=True, nogil=True)
def ball_prox(target):
    """Euclidean projection of the target onto the unit ball (in place safe copy)."""
    nrm = 0.0
    for i in range(target.shape[0]):
        nrm += target[i] * target[i]
    nrm = np.sqrt(nrm)
    out = target.copy()
    if nrm > 1.0:
        out /= nrm
    return out


@njit(cache=True, nogil=True)
def _blocks(x_simplex, gx, gy, base_x, base_y, w,
            lox, hix, llox, lhix, loy, hiy, lloy, lhiy):
    """One exact separable pass: constant operator plus Bregman centers."""
    if x_simplex:
        px = simplex_prox((base_x - gx) / w, lox, hix, llox, lhix)
    else:
        px = ball_prox((base_x - gx) / w)
    py = simplex_prox((base_y - gy) / w, loy, hiy, lloy, lhiy)
    return px, py


@njit(cache=True, nogil=True)
def _move_sq(icx, icy, ax, ay, bx, by):
    s = 0.0
    for i in range(ax.shape[0]):
        d = ax[i] - bx[i]
        s += d * d * icx[i]
    for i in range(ay.shape[0]):
        d = ay[i] - by[i]
        s += d * d * icy[i]
    return s


@njit(cache=True, nogil=True)
def _squash_records(acc3, rec_sig, rec_u, rec_v, lo, hi, L, m):
    """Fold recorded rank-one charges [lo, hi) into the stacked accumulator.

    One matrix product covers every segment at once: the weighted left
    vectors stack into a (L*m, cnt) block so the whole batch lands as a
    single gemm against the stored right vectors.
    """
    cnt = hi - lo
    if cnt <= 0:
        return
    bigv = np.empty((L * m, cnt))
    for l in range(L):
        for i in range(m):
            r0 = l * m + i
            for r in range(cnt):
                bigv[r0, r] = rec_sig[lo + r, l] * rec_v[lo + r, i]
    acc3 += np.dot(bigv, rec_u[lo:hi])


@njit(cache=True, nogil=True)
def supg_run(x_simplex, amat, row, col, hasm0, msum, cden, acc3,
             ustart, uend, term_u, anone, urow, ucol, n_paid,
             cb_x, cb_y, coll_x, coll_y, lcoll_x, lcoll_y,
             lox, hix, llox, lhix, loy, hiy, lloy, lhiy,
             icx, icy, sx, sy, zx0, zy0,
             alpha, tau, card, tau_eff, prox_tol, noise_abs, noise_factor,
             tol_hi, budget, fp_tol, comp_max_iter, drop_sigma,
             guilty_base, guilty_fuse,
             rec_cand, rec_sig, rec_u, rec_v):
    """Whole inner-solver loop against a dense backing, convictions included.

    Matvec metering matches the unfused cycle with repeated queries served
    from cache: the gradient products at the iterate are bought once per
    accepted point (2 ticks), the half-step products once per subsolve
    (2 ticks), each fresh judge direction once (1 tick), and convictions
    charge n_paid guilty ticks, one per distinct non-terminal anchor.

    A conviction leaves the iterate, the subsolve answer and both judged
    directions untouched, so the loop re-judges from cache instead of
    re-solving: the convicted direction's violation is consumed by its own
    rank-one charge and the other direction gets its verdict against the
    updated model for one cheap dense product.  The subsolve is repeated
    only once the accumulated model drift (dw_accum, a first-order bound
    on how far the answer moved) exceeds the tolerance in force.

    Subsolve tolerance adapts to the judged scale: loose solves are fine
    while the candidate directions are large, and the judge noise term
    noise_factor * (tolerance + drift) * (|u| + |v|) says exactly how
    loose.  Acquittals only release a step once that slack is below a
    quarter of the violation threshold at the realized candidate scale
    (or the solver already did its best), so a too-loose pass triggers a
    warm refine-and-rejudge rather than a blind accept.

    Segments are the caller's effective list (nonzero grounded difference
    or nonzero model); ustart/uend give each segment's anchor slots in the
    unique tables urow/ucol, anone marks the zero-matrix slot, and the
    terminal product is reused from the judge by linearity.  Sigma rows
    batch into acc3 every few dozen records and always before returning.

    Flags: 0 budget spent, 1 fixed point, 3 composite subsolve failure
    (mv carries its residual), 4 record buffer full (drain and re-enter),
    5 the next conviction would pass guilty_fuse and was abandoned.

    Returns (zx, zy, steps, prog_ticks, guilty_ticks, flag, nrec, hasm, mv).
    """
    n = zx0.shape[0]
    m = zy0.shape[0]
    leff = acc3.shape[0] // m
    n_uniq = urow.shape[0]
    rec_cap = rec_cand.shape[0]
    zx = zx0.copy()
    zy = zy0.copy()
    pwx = zx
    pwy = zy
    wsum1 = alpha * card + tau
    wsum2 = tau + alpha
    hasm = hasm0
    tp = 0
    tg = 0
    steps = 0
    nrec = 0
    nsq = 0
    move = np.inf
    uh = np.empty(n)
    vh = np.empty(m)
    ucn = np.empty(n)
    tmpn = np.empty(n)
    pmat = np.empty((n_uniq, m))
    wq = np.empty(n_uniq)
    bil = np.empty(leff)
    cu = np.empty((2, n))
    cv = np.empty((2, m))
    ctp = np.empty((2, m))
    cnu = np.empty(2)
    cnv = np.empty(2)
    tpv = np.zeros(2, np.int64)
    atz = zx
    az = zy
    znx = zx
    zny = zy
    wx = zx
    wy = zy
    have_prod = False
    have_w = False
    tol_last = tol_hi
    tight_done = 1.0e300
    dw_accum = 0.0
    tolscale = 1.0
    while steps < budget:
        if nrec == rec_cap:
            _squash_records(acc3, rec_sig, rec_u, rec_v, nsq, nrec, leff, m)
            return zx, zy, steps, tp, tg, 4, nrec, hasm, move
        if not have_prod:
            atz = amat.T @ zy
            az = amat @ zx
            tp += 2
            have_prod = True
        tol_att = 0.25 * tau_eff * tolscale / noise_factor
        if tol_att < prox_tol:
            tol_att = prox_tol
        elif tol_att > tol_hi:
            tol_att = tol_hi
        if (not have_w) or dw_accum > tol_att:
            if hasm == 1:
                g0x = atz - cden.T @ zy
                g0y = -(az - cden @ zx)
            else:
                g0x = atz
                g0y = -az
            if x_simplex:
                b1x = cb_x + tau * np.log(zx)
            else:
                b1x = cb_x + tau * zx
            b1y = cb_y + tau * np.log(zy)
            wx, wy, its, status, cmv = composite_solve(
                x_simplex, g0x, g0y, cden, hasm == 1, b1x, b1y, wsum1,
                lox, hix, llox, lhix, loy, hiy, lloy, lhiy,
                icx, icy, pwx, pwy, tol_att, comp_max_iter)
            if status == 2 and cmv > max(tol_att, 1e-12):
                _squash_records(acc3, rec_sig, rec_u, rec_v, nsq, nrec, leff, m)
                return zx, zy, steps, tp, tg, 3, nrec, hasm, cmv
            pwx = wx
            pwy = wy
            tol_last = tol_att
            if status != 0 and cmv > tol_last:
                tol_last = cmv
            if tol_att < tight_done:
                tight_done = tol_att
            dw_accum = 0.0
            if x_simplex:
                ugx = card * (np.log(wx) - lcoll_x)
            else:
                ugx = card * (wx - coll_x)
            ugy = card * (np.log(wy) - lcoll_y)
            g1x = amat.T @ wy + alpha * ugx
            g1y = -(amat @ wx) + alpha * ugy
            tp += 2
            if x_simplex:
                b2x = tau * np.log(zx) + alpha * np.log(wx)
            else:
                b2x = tau * zx + alpha * wx
            b2y = tau * np.log(zy) + alpha * np.log(wy)
            znx, zny = _blocks(x_simplex, g1x, g1y, b2x, b2y, wsum2,
                               lox, hix, llox, lhix, loy, hiy, lloy, lhiy)
            for j in range(n):
                cu[0, j] = (wx[j] - znx[j]) * sx[j]
                cu[1, j] = (zx[j] - wx[j]) * sx[j]
            for i in range(m):
                cv[0, i] = (wy[i] - zy[i]) * sy[i]
                cv[1, i] = (wy[i] - zny[i]) * sy[i]
            for cnd in range(2):
                s = 0.0
                for j in range(n):
                    s += cu[cnd, j] * cu[cnd, j]
                cnu[cnd] = np.sqrt(s)
                s = 0.0
                for i in range(m):
                    s += cv[cnd, i] * cv[cnd, i]
                cnv[cnd] = np.sqrt(s)
            tpv[0] = 0
            tpv[1] = 0
            have_w = True
        err_w = tol_last + dw_accum
        nois = noise_factor * err_w
        if nois < noise_abs:
            nois = noise_abs
        convicted = False
        for cand in range(2):
            nu_ = cnu[cand]
            nv_ = cnv[cand]
            if nu_ == 0.0 or nv_ == 0.0:
                continue
            if tpv[cand] == 0:
                for j in range(n):
                    tmpn[j] = col[j] * cu[cand, j]
                av = amat @ tmpn
                for i in range(m):
                    ctp[cand, i] = row[i] * av[i]
                tp += 1
                tpv[cand] = 1
            viol = 0.0
            if hasm == 1:
                mu_ = np.dot(msum, cu[cand])
                for i in range(m):
                    viol += cv[cand, i] * (ctp[cand, i] - mu_[i])
            else:
                for i in range(m):
                    viol += cv[cand, i] * ctp[cand, i]
            if viol <= tau_eff * nu_ * nv_ + nois * (nu_ + nv_):
                continue
            if guilty_base + nrec + 1 > guilty_fuse:
                _squash_records(acc3, rec_sig, rec_u, rec_v, nsq, nrec, leff, m)
                return zx, zy, steps, tp, tg, 5, nrec, hasm, move
            for j in range(n):
                uh[j] = cu[cand, j] / nu_
            for i in range(m):
                vh[i] = cv[cand, i] / nv_
            for q in range(n_uniq):
                if q == term_u:
                    for i in range(m):
                        pmat[q, i] = ctp[cand, i] / nu_
                elif anone[q]:
                    for i in range(m):
                        pmat[q, i] = 0.0
                else:
                    for j in range(n):
                        tmpn[j] = ucol[q, j] * uh[j]
                    av = amat @ tmpn
                    for i in range(m):
                        pmat[q, i] = urow[q, i] * av[i]
            tg += n_paid
            for q in range(n_uniq):
                s = 0.0
                for i in range(m):
                    s += vh[i] * pmat[q, i]
                wq[q] = s
            tvec = np.dot(acc3, uh)
            for l in range(leff):
                s = 0.0
                for i in range(m):
                    s += vh[i] * tvec[l * m + i]
                bil[l] = s
            for r in range(nsq, nrec):
                dv = 0.0
                for i in range(m):
                    dv += vh[i] * rec_v[r, i]
                du = 0.0
                for j in range(n):
                    du += uh[j] * rec_u[r, j]
                ar = dv * du
                if ar != 0.0:
                    for l in range(leff):
                        bil[l] += rec_sig[r, l] * ar
            tot = 0.0
            for l in range(leff):
                sg = wq[uend[l]] - wq[ustart[l]] - bil[l]
                if abs(sg) < drop_sigma:
                    sg = 0.0
                else:
                    tot += sg
                rec_sig[nrec, l] = sg
            for j in range(n):
                rec_u[nrec, j] = uh[j]
            for i in range(m):
                rec_v[nrec, i] = vh[i]
            rec_cand[nrec] = cand
            nrec += 1
            if tot != 0.0:
                sa = 0.0
                mv_r = 0.0
                for i in range(m):
                    a_ = abs(vh[i] / row[i])
                    sa += a_ * zy[i]
                    if a_ > mv_r:
                        mv_r = a_
                sb = 0.0
                mu_c = 0.0
                for j in range(n):
                    ucn[j] = uh[j] / col[j]
                    a_ = abs(ucn[j])
                    sb += a_ * abs(zx[j])
                    if a_ > mu_c:
                        mu_c = a_
                for i in range(m):
                    tvi = tot * vh[i]
                    vri = tvi / row[i]
                    for j in range(n):
                        msum[i, j] += tvi * uh[j]
                        cden[i, j] += vri * ucn[j]
                hasm = 1
                dw_accum += abs(tot) * (mu_c * sa + mv_r * sb) / wsum1
                tolscale = nu_ * nv_ / (nu_ + nv_)
                tight_done = 1.0e300
            else:
                # empty correction: the model did not move, so the cascade
                # cannot clear this violation; force a fresh tighter solve
                have_w = False
                tolscale = tolscale / 16.0
            if nrec - nsq >= 64:
                _squash_records(acc3, rec_sig, rec_u, rec_v, nsq, nrec, leff, m)
                nsq = nrec
            convicted = True
            break
        if convicted:
            continue
        hm_min = 1.0e300
        for cnd in range(2):
            if cnu[cnd] > 0.0 and cnv[cnd] > 0.0:
                h = cnu[cnd] * cnv[cnd] / (cnu[cnd] + cnv[cnd])
                if h < hm_min:
                    hm_min = h
        tol_goal = 0.25 * tau_eff * hm_min / noise_factor
        if tol_goal < prox_tol:
            tol_goal = prox_tol
        elif tol_goal > tol_hi:
            tol_goal = tol_hi
        if err_w > tol_goal and tol_goal < tight_done:
            # acquittals judged under more slack than the realized candidate
            # scale tolerates, and the solver has room: refine and re-judge
            tolscale = hm_min
            have_w = False
            continue
        mx = 0.0
        for i in range(n):
            d = abs(znx[i] - zx[i])
            if d > mx:
                mx = d
        for i in range(m):
            d = abs(zny[i] - zy[i])
            if d > mx:
                mx = d
        move = mx
        zx = znx
        zy = zny
        steps += 1
        have_prod = False
        have_w = False
        tight_done = 1.0e300
        tolscale = tolscale * 8.0
        if tolscale > 1.0:
            tolscale = 1.0
        if move <= fp_tol:
            _squash_records(acc3, rec_sig, rec_u, rec_v, nsq, nrec, leff, m)
            return zx, zy, steps, tp, tg, 1, nrec, hasm, move
    _squash_records(acc3, rec_sig, rec_u, rec_v, nsq, nrec, leff, m)
    return zx, zy, steps, tp, tg, 0, nrec, hasm, move


@njit(cache=True, nogil=True)
def _geo_lipschitz(x_simplex, skew):
    """Lipschitz constant of the skew coupling in the block geometry.

    Entropy blocks pair l1 primals with l_inf duals, so a simplex-simplex
    coupling is bounded by the largest entry magnitude; a ball block swaps
    l2 on its side, which raises the bound to the largest row 2-norm.  Both
    hold over the whole region, not just near one point.
    """
    m, n = skew.shape
    if x_simplex:
        big = 0.0
        for i in range(m):
            for j in range(n):
                v = abs(skew[i, j])
                if v > big:
                    big = v
        return big
    big = 0.0
    for i in range(m):
        s = 0.0
        for j in range(n):
            s += skew[i, j] * skew[i, j]
        if s > big:
            big = s
    return np.sqrt(big)


@njit(cache=True, nogil=True)
def composite_solve(x_simplex, gx, gy, skew, has_skew,
                    base_x, base_y, wsum,
                    lox, hix, llox, lhix, loy, hiy, lloy, lhiy,
                    icx, icy, ux0, uy0, tol, max_iter):
    """Strongly monotone composite VI over a boxed product block.

    Operator: g + (skew^T p_y, -skew p_x) + sum_k w_k grad V_{c_k}(p), where
    the center sum is precombined into base_x/base_y (weighted log sums on
    simplex blocks, weighted point sums on the ball block) with total weight
    wsum.  No skew: one exact block pass.  With skew: damping is chosen
    adaptively.  The global geometry-matched Lipschitz bound of the
    coupling is wildly pessimistic here, because the raw skew carries the
    inverse grounding scalings (entries amplified by the truncation floor)
    while near the warm start the effective coupling is the grounded one;
    so the scheme starts from the local-metric Frobenius bound at the warm
    start and runs plain Picard, or a damped extragradient anchored with
    weight lam, escalating lam toward the globally safe ceiling only when
    the iteration is seen diverging (two consecutive growth steps) or a
    windowed best-movement check finds no progress (oscillation between
    two points defeats any consecutive-growth test, so the backstop window
    tracks the best movement instead).  Movement is measured in the local
    norm whose diagonal weights are icx/icy, and the damped phase tightens
    the stopping threshold by wsum / (wsum + lam) because anchored steps
    compress movement relative to true distance.

    Returns (px, py, iterations, status, final_move) with status 0 converged,
    1 stagnated at machine precision, 2 iteration fuse hit.
    """
    if not has_skew:
        px, py = _blocks(x_simplex, gx, gy, base_x, base_y, wsum,
                         lox, hix, llox, lhix, loy, hiy, lloy, lhiy)
        return px, py, 1, 0, 0.0

    lip = _geo_lipschitz(x_simplex, skew)
    # local-metric Frobenius bound: diag(sqrt(u)) skew diag(sqrt(u)) at the
    # warm start, with the ball block keeping its Euclidean metric
    lloc = 0.0
    for i in range(skew.shape[0]):
        for j in range(skew.shape[1]):
            s2 = skew[i, j] * skew[i, j] * uy0[i]
            if x_simplex:
                s2 *= ux0[j]
            lloc += s2
    lloc = np.sqrt(lloc)
    lam_safe = max(1.1 * lip, 0.75 * wsum)
    if lip <= 0.45 * wsum or lloc <= 0.45 * wsum:
        lam = 0.0
    else:
        lam = min(1.1 * lloc, lam_safe)
    n = ux0.shape[0]
    m = uy0.shape[0]
    d = n + m
    depth = 4
    hist_g = np.zeros((depth + 1, d))
    hist_f = np.zeros((depth + 1, d))
    hist_n = 0
    aa_cool = 0
    aa_cool_len = 4
    aa_fail = 0
    aa_dead = False
    gbest_mark = np.inf
    best_since = np.inf
    ux = ux0.copy()
    uy = uy0.copy()
    mv = np.inf
    mv_prev = np.inf
    grow = 0
    gbest = np.inf
    gbest_at = 0
    win_best = np.inf
    win_prev = np.inf
    win_at = 0
    for it in range(max_iter):
        stop_tol = tol if lam == 0.0 else tol * wsum / (wsum + lam)
        kx = skew.T @ uy
        ky = -(skew @ ux)
        if lam > 0.0:
            if x_simplex:
                dbx = base_x + lam * np.log(ux)
            else:
                dbx = base_x + lam * ux
            dby = base_y + lam * np.log(uy)
            hx, hy = _blocks(x_simplex, gx + kx, gy + ky, dbx, dby, wsum + lam,
                             lox, hix, llox, lhix, loy, hiy, lloy, lhiy)
            k2x = skew.T @ hy
            k2y = -(skew @ hx)
            nx, ny = _blocks(x_simplex, gx + k2x, gy + k2y, dbx, dby, wsum + lam,
                             lox, hix, llox, lhix, loy, hiy, lloy, lhiy)
        else:
            nx, ny = _blocks(x_simplex, gx + kx, gy + ky, base_x, base_y, wsum,
                             lox, hix, llox, lhix, loy, hiy, lloy, lhiy)
        mv = np.sqrt(_move_sq(icx, icy, nx, ny, ux, uy))
        if mv <= stop_tol:
            return nx, ny, it + 1, 0, mv
        # Anderson bookkeeping: g = mapped point, f = residual, both in the
        # concatenated block vector.  The mixing weights minimize the local
        # norm of the combined residual, so the history dot products carry
        # the icx/icy weights.
        if hist_n > depth:
            for r in range(depth):
                hist_g[r] = hist_g[r + 1]
                hist_f[r] = hist_f[r + 1]
            hist_n = depth
        for i in range(n):
            hist_g[hist_n, i] = nx[i]
            hist_f[hist_n, i] = nx[i] - ux[i]
        for i in range(m):
            hist_g[hist_n, n + i] = ny[i]
            hist_f[hist_n, n + i] = ny[i] - uy[i]
        hist_n += 1
        if mv < best_since:
            best_since = mv
        took_aa = False
        if hist_n >= 3 and aa_cool == 0 and not aa_dead:
            if mv > 2.0 * best_since:
                # residual no longer improving under mixing; restart clean,
                # with growing cooldowns, and give up on mixing entirely
                # when restarts repeat without a new global best (a bad
                # history can otherwise re-poison the iteration forever)
                hist_n = 0
                best_since = np.inf
                aa_cool = aa_cool_len
                aa_cool_len = min(aa_cool_len * 2, 512)
                if gbest >= gbest_mark:
                    aa_fail += 1
                    if aa_fail >= 4:
                        aa_dead = True
                else:
                    aa_fail = 0
                gbest_mark = gbest
            else:
                k = hist_n - 1
                cur = hist_n - 1
                amat = np.zeros((k, k))
                bvec = np.zeros(k)
                for j in range(k):
                    for l in range(j, k):
                        s = 0.0
                        for i in range(n):
                            s += ((hist_f[j, i] - hist_f[cur, i])
                                  * (hist_f[l, i] - hist_f[cur, i]) * icx[i])
                        for i in range(m):
                            s += ((hist_f[j, n + i] - hist_f[cur, n + i])
                                  * (hist_f[l, n + i] - hist_f[cur, n + i]) * icy[i])
                        amat[j, l] = s
                        amat[l, j] = s
                    s = 0.0
                    for i in range(n):
                        s += (hist_f[j, i] - hist_f[cur, i]) * hist_f[cur, i] * icx[i]
                    for i in range(m):
                        s += ((hist_f[j, n + i] - hist_f[cur, n + i])
                              * hist_f[cur, n + i] * icy[i])
                    bvec[j] = -s
                ridge = 0.0
                for j in range(k):
                    if amat[j, j] > ridge:
                        ridge = amat[j, j]
                for j in range(k):
                    amat[j, j] += 1e-12 * ridge + 1e-300
                gam = np.linalg.solve(amat, bvec)
                ok = True
                for j in range(k):
                    if not np.isfinite(gam[j]):
                        ok = False
                if ok:
                    for i in range(n):
                        v = hist_g[cur, i]
                        for j in range(k):
                            v += gam[j] * (hist_g[j, i] - hist_g[cur, i])
                        ux[i] = v
                    for i in range(m):
                        v = hist_g[cur, n + i]
                        for j in range(k):
                            v += gam[j] * (hist_g[j, n + i] - hist_g[cur, n + i])
                        uy[i] = v
                    # mixing can leave the region; the map needs interior
                    # anchors, so fold back into the boxes / the ball
                    if x_simplex:
                        for i in range(n):
                            if ux[i] < lox[i]:
                                ux[i] = lox[i]
                            elif ux[i] > hix[i]:
                                ux[i] = hix[i]
                    else:
                        s = 0.0
                        for i in range(n):
                            s += ux[i] * ux[i]
                        s = np.sqrt(s)
                        if s > 1.0:
                            for i in range(n):
                                ux[i] /= s
                    for i in range(m):
                        if uy[i] < loy[i]:
                            uy[i] = loy[i]
                        elif uy[i] > hiy[i]:
                            uy[i] = hiy[i]
                    took_aa = True
        if not took_aa:
            ux = nx
            uy = ny
            if aa_cool > 0:
                aa_cool -= 1
        if mv > 1.5 * mv_prev and mv > 4.0 * stop_tol:
            grow += 1
        else:
            grow = 0
        mv_prev = mv
        if grow >= 3:
            # plainly diverging; damp harder right away
            if lam == 0.0:
                lam = min(max(1.1 * lloc, 0.2 * wsum), lam_safe)
            else:
                lam = min(4.0 * lam, lam_safe)
            grow = 0
            gbest_at = it
            hist_n = 0
            best_since = np.inf
            aa_cool = aa_cool_len
        if mv < 0.98 * gbest:
            gbest = mv
            gbest_at = it
            aa_fail = 0
        elif it - gbest_at >= 40:
            # movement neither grows nor reaches a new best, which steady
            # linear progress would within a few steps.  Suspect the mixing
            # first and suspend it long enough for plain steps to show
            # their rate; damp harder only if they are stuck too.
            gbest_at = it
            hist_n = 0
            best_since = np.inf
            if aa_cool < 100 and not aa_dead:
                aa_cool = 150
            elif lam < lam_safe:
                lam = min(max(2.0 * lam, 1.1 * lloc, 0.25 * wsum), lam_safe)
                aa_cool = aa_cool_len
        if mv < win_best:
            win_best = mv
        if it - win_at >= 12:
            if win_best > 0.995 * win_prev:
                # flat across two windows: a genuine stall or a cycle, not
                # slow linear progress (which the mixing accelerates anyway)
                if win_best < 1e-11:
                    return ux, uy, it + 1, 1, mv
                if lam == 0.0:
                    lam = min(max(1.1 * lloc, 0.25 * wsum), lam_safe)
                else:
                    lam = min(2.0 * lam, lam_safe)
                hist_n = 0
                best_since = np.inf
            win_prev = win_best
            win_best = np.inf
            win_at = it
    return ux, uy, max_iter, 2, mv
