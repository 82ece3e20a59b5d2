"""Loop-form kernel sources.

Every function here is written in nopython-compatible style so the numba
backend can wrap it with @njit unchanged; the numpy backend re-exports
`simulate_steps` (inherently sequential) and replaces the array sweeps
with vectorized equivalents.
"""

import math

import numpy as np


def expected_next_value(v_next, gt, ht, ilo, frac):
    """Marginalize the next-stage table over (gain, harvest) transitions.

    wx[p, g, hh, x] is the expected continuation value from current
    axes (g, hh) when the pre-harvest battery residual is X[x]; ilo/frac
    hold the battery interpolation of min(X[x] + H', b_max).
    """
    nP, nG, nH, nB = v_next.shape
    nX = ilo.shape[0]
    vg = np.zeros((nP, nG, nH, nB))
    for p in range(nP):
        for g in range(nG):
            for gq in range(nG):
                w = gt[g, gq]
                if w == 0.0:
                    continue
                for hq in range(nH):
                    for b in range(nB):
                        vg[p, g, hq, b] += w * v_next[p, gq, hq, b]
    wx = np.zeros((nP, nG, nH, nX))
    for p in range(nP):
        for g in range(nG):
            for hh in range(nH):
                for x in range(nX):
                    acc = 0.0
                    for hq in range(nH):
                        w = ht[hh, hq]
                        if w == 0.0:
                            continue
                        i = ilo[x, hq]
                        f = frac[x, hq]
                        acc += w * ((1.0 - f) * vg[p, g, hq, i] + f * vg[p, g, hq, i + 1])
                    wx[p, g, hh, x] = acc
    return wx


def backup(stage, bw, succ, wx, xidx):
    """One Bellman sweep over the (state, gain, harvest, battery) grid.

    Actions are enumerated in ascending order and ties keep the first
    (smallest-energy) minimizer; xidx[b, u] < 0 marks u infeasible at b.
    """
    nP, nG, nU = stage.shape
    nBr = bw.shape[3]
    nH = wx.shape[2]
    nB = xidx.shape[0]
    v = np.empty((nP, nG, nH, nB))
    pol = np.zeros((nP, nG, nH, nB), dtype=np.int64)
    for p in range(nP):
        for g in range(nG):
            for hh in range(nH):
                for b in range(nB):
                    best = np.inf
                    bestu = 0
                    for u in range(nU):
                        xi = xidx[b, u]
                        if xi < 0:
                            continue
                        cont = 0.0
                        for br in range(nBr):
                            w = bw[p, g, u, br]
                            if w != 0.0:
                                cont += w * wx[succ[p, g, u, br], g, hh, xi]
                        qv = stage[p, g, u] + cont
                        if qv < best:
                            best = qv
                            bestu = u
                    v[p, g, hh, b] = best
                    pol[p, g, hh, b] = bestu
    return v, pol


def belief_successors(wmat, idx0, idx1, trace_gaps, h_gu, fb0, fb1):
    """Acknowledgment-branched successor table over a sampled belief set.

    For belief i and acknowledgment gh the posterior weight vector is
    projected to the nearest sampled belief in Wasserstein-1 distance over
    the grid traces (CDF differences weighted by trace_gaps); bw holds the
    acknowledgment probabilities P(gh | g, u).
    """
    nBel, nK = wmat.shape
    nG, nU = h_gu.shape
    pred0 = np.zeros((nBel, nK))
    pred1 = np.zeros((nBel, nK))
    for i in range(nBel):
        for k in range(nK):
            w = wmat[i, k]
            if w != 0.0:
                pred0[i, idx0[k]] += w
                pred1[i, idx1[k]] += w
    cmat = np.empty((nBel, nK))
    for i in range(nBel):
        acc = 0.0
        for k in range(nK):
            acc += wmat[i, k]
            cmat[i, k] = acc
    succ = np.zeros((nBel, nG, nU, 3), dtype=np.int64)
    bw = np.zeros((nG, nU, 3))
    cpost = np.empty(nK)
    for g in range(nG):
        for u in range(nU):
            h = h_gu[g, u]
            for gh in range(3):
                l0 = fb0[gh] * (1.0 - h)
                l1 = fb1[gh] * h
                z = l0 + l1
                bw[g, u, gh] = z
                if z <= 0.0:
                    continue
                c0 = l0 / z
                c1 = l1 / z
                for i in range(nBel):
                    acc = 0.0
                    for k in range(nK):
                        acc += c0 * pred0[i, k] + c1 * pred1[i, k]
                        cpost[k] = acc
                    bi = 0
                    bd = np.inf
                    for j in range(nBel):
                        d = 0.0
                        for k in range(nK - 1):
                            d += abs(cmat[j, k] - cpost[k]) * trace_gaps[k]
                            if d >= bd:
                                break
                        if d < bd:
                            bd = d
                            bi = j
                    succ[i, g, u, gh] = bi
    return succ, bw


def noncausal_value(pred_tr, corr_tr, succ0, succ1, h_gu_seq, h_term,
                    h_next_seq, bgrid, uvals, bmax, p0_idx, b0):
    """Clairvoyant finite-horizon DP for one fixed (gain, harvest) path.

    h_gu_seq[k, j] = h(g_k * uvals[j]); h_term[b] = h(g_{T-1} * bgrid[b]);
    h_next_seq[k] = H_{k+1}.  Returns the expected cost from (P0, b0).
    """
    T = h_gu_seq.shape[0]
    nP = pred_tr.size
    nB = bgrid.size
    nU = uvals.size
    v = np.empty((nP, nB))
    vn = np.empty((nP, nB))
    for p in range(nP):
        for b in range(nB):
            v[p, b] = pred_tr[p] - h_term[b] * corr_tr[p]
    for k in range(T - 2, -1, -1):
        hn = h_next_seq[k]
        for p in range(nP):
            s0 = succ0[p]
            s1 = succ1[p]
            for b in range(nB):
                best = np.inf
                for j in range(nU):
                    if uvals[j] > bgrid[b] + 1e-9:
                        break
                    bb = bgrid[b] - uvals[j] + hn
                    if bb > bmax:
                        bb = bmax
                    if bb < 0.0:
                        bb = 0.0
                    jb = np.searchsorted(bgrid, bb)
                    if jb <= 0:
                        i0 = 0
                        f = 0.0
                    elif jb >= nB:
                        i0 = nB - 2
                        f = 1.0
                    else:
                        i0 = jb - 1
                        f = (bb - bgrid[i0]) / (bgrid[i0 + 1] - bgrid[i0])
                    h = h_gu_seq[k, j]
                    v0 = (1.0 - f) * v[s0, i0] + f * v[s0, i0 + 1]
                    v1 = (1.0 - f) * v[s1, i0] + f * v[s1, i0 + 1]
                    qv = pred_tr[p] - h * corr_tr[p] + (1.0 - h) * v0 + h * v1
                    if qv < best:
                        best = qv
                vn[p, b] = best
        tmp = v
        v = vn
        vn = tmp
    jb = np.searchsorted(bgrid, b0)
    if jb <= 0:
        return v[p0_idx, 0]
    if jb >= nB:
        return v[p0_idx, nB - 1]
    f = (b0 - bgrid[jb - 1]) / (bgrid[jb] - bgrid[jb - 1])
    return (1.0 - f) * v[p0_idx, jb - 1] + f * v[p0_idx, jb]


def simulate_steps(n_steps, uniforms,
                   a, c, q, r, p_init,
                   dkind, dbits, dx, dh,
                   gkind, gmean, gstates, gcum, ginit_cum,
                   hkind, hmean, hstates, hcum, hinit_cum,
                   fb0, fb1, fbcum,
                   bmax, b0,
                   pkind, stage_actions, cov_traces, gain_reps, harvest_reps, bgrid,
                   wmat, idx0, idx1, ktraces,
                   bstar, e0, e1,
                   rec_g, rec_h, rec_b, rec_u, rec_gam, rec_ghat,
                   rec_trp, rec_cost, rec_trphat):
    """Closed-loop scalar simulation of one seeded run.

    uniforms[k] supplies the four per-step draws (gain, harvest, reception,
    acknowledgment).  Policy kinds: 0 covariance grid (perfect feedback),
    1 covariance-estimate grid, 2 belief grid, 3 battery threshold.
    Returns the number of threshold feasibility fallbacks.
    """
    sqrt2 = math.sqrt(2.0)
    nB = bgrid.size
    n_stages = stage_actions.shape[0]
    nK = idx0.size
    nBel = wmat.shape[0]

    p_true = p_init
    p_est = p_init
    w = np.zeros(nK)
    wnew = np.zeros(nK)
    if pkind == 2:
        # start the belief at the grid point nearest P0
        j = np.searchsorted(ktraces, p_init)
        if j <= 0:
            ki = 0
        elif j >= nK:
            ki = nK - 1
        else:
            ki = j - 1 if p_init - ktraces[j - 1] <= ktraces[j] - p_init else j
        w[ki] = 1.0

    g_idx = 0
    h_idx = 0
    g = 0.0
    hv = 0.0
    B = b0
    u_prev = 0.0
    b_prev = b0
    fallbacks = 0

    for k in range(n_steps):
        # exogenous draws
        if gkind == 0:
            g = -gmean * math.log1p(-uniforms[k, 0])
        else:
            if k == 0:
                row = ginit_cum
            else:
                row = gcum[g_idx]
            j = np.searchsorted(row, uniforms[k, 0], side='right')
            if j >= gstates.size:
                j = gstates.size - 1
            g_idx = j
            g = gstates[g_idx]
        if hkind == 0:
            hv = -hmean * math.log1p(-uniforms[k, 1])
        else:
            if k == 0:
                row = hinit_cum
            else:
                row = hcum[h_idx]
            j = np.searchsorted(row, uniforms[k, 1], side='right')
            if j >= hstates.size:
                j = hstates.size - 1
            h_idx = j
            hv = hstates[h_idx]

        if k > 0:
            B = b_prev - u_prev + hv
            if B > bmax:
                B = bmax
            if B < 0.0:
                B = 0.0

        # axis lookups (nearest representative)
        if gkind == 1:
            gi = g_idx
        else:
            j = np.searchsorted(gain_reps, g)
            if j <= 0:
                gi = 0
            elif j >= gain_reps.size:
                gi = gain_reps.size - 1
            else:
                gi = j - 1 if g - gain_reps[j - 1] <= gain_reps[j] - g else j
        if hkind == 1:
            hi = h_idx
        else:
            j = np.searchsorted(harvest_reps, hv)
            if j <= 0:
                hi = 0
            elif j >= harvest_reps.size:
                hi = harvest_reps.size - 1
            else:
                hi = j - 1 if hv - harvest_reps[j - 1] <= harvest_reps[j] - hv else j

        # policy lookup
        if pkind == 2:
            mean_tr = 0.0
            acc = 0.0
            for kk in range(nK):
                mean_tr += w[kk] * ktraces[kk]
                acc += w[kk]
                wnew[kk] = acc  # reuse the buffer for the cumulative weights
            bd = np.inf
            si_bel = 0
            for jbel in range(nBel):
                d = 0.0
                cj = 0.0
                for kk in range(nK - 1):
                    cj += wmat[jbel, kk]
                    d += abs(cj - wnew[kk]) * (ktraces[kk + 1] - ktraces[kk])
                    if d >= bd:
                        break
                if d < bd:
                    bd = d
                    si_bel = jbel
            pi = si_bel
            rec_trphat[k] = mean_tr
        elif pkind == 1 or pkind == 0 or pkind == 3:
            j = np.searchsorted(cov_traces, p_est)
            if j <= 0:
                pi = 0
            elif j >= cov_traces.size:
                pi = cov_traces.size - 1
            else:
                pi = j - 1 if p_est - cov_traces[j - 1] <= cov_traces[j] - p_est else j
            rec_trphat[k] = p_est
        else:
            pi = 0

        si = k if k < n_stages else n_stages - 1
        if pkind == 3:
            bs = bstar[pi, gi, hi]
            u = e0 if B <= bs else e1
            if u > B + 1e-12:
                fallbacks += 1
                u = e0 if e0 <= B + 1e-12 else 0.0
        else:
            jb = np.searchsorted(bgrid, B)
            if jb <= 0:
                u = stage_actions[si, pi, gi, hi, 0]
            elif jb >= nB:
                u = stage_actions[si, pi, gi, hi, nB - 1]
            else:
                f = (B - bgrid[jb - 1]) / (bgrid[jb] - bgrid[jb - 1])
                u = ((1.0 - f) * stage_actions[si, pi, gi, hi, jb - 1]
                     + f * stage_actions[si, pi, gi, hi, jb])
        if u < 0.0:
            u = 0.0
        if u > B:
            u = B

        # channel outcome and acknowledgment
        x = g * u
        if dkind == 0:
            h = (0.5 * math.erfc(-math.sqrt(x) / sqrt2)) ** dbits
        else:
            h = np.interp(x, dx, dh)
        gam = 1 if uniforms[k, 2] < h else 0
        if gam == 1:
            row3 = fbcum[1]
        else:
            row3 = fbcum[0]
        if uniforms[k, 3] < row3[0]:
            ghat = 0
        elif uniforms[k, 3] < row3[1]:
            ghat = 1
        else:
            ghat = 2

        rec_g[k] = g
        rec_h[k] = hv
        rec_b[k] = B
        rec_u[k] = u
        rec_gam[k] = gam
        rec_ghat[k] = ghat
        rec_trp[k] = p_true

        # true covariance recursion
        pred = a * a * p_true + q
        if gam == 1:
            p_true = pred - a * a * p_true * p_true * c * c / (c * c * p_true + r)
        else:
            p_true = pred
        rec_cost[k] = p_true

        # policy-internal state recursion (acknowledgment driven)
        if pkind == 0 or pkind == 3:
            pred_e = a * a * p_est + q
            if ghat == 1:
                p_est = pred_e - a * a * p_est * p_est * c * c / (c * c * p_est + r)
            else:
                p_est = pred_e
        elif pkind == 1:
            l0 = fb0[ghat] * (1.0 - h)
            l1 = fb1[ghat] * h
            z = l0 + l1
            pred_e = a * a * p_est + q
            upd = pred_e - a * a * p_est * p_est * c * c / (c * c * p_est + r)
            p_est = (l0 * pred_e + l1 * upd) / z
        elif pkind == 2:
            l0 = fb0[ghat] * (1.0 - h)
            l1 = fb1[ghat] * h
            z = l0 + l1
            c0 = l0 / z
            c1 = l1 / z
            for kk in range(nK):
                wnew[kk] = 0.0
            for kk in range(nK):
                wv = w[kk]
                if wv != 0.0:
                    wnew[idx0[kk]] += c0 * wv
                    wnew[idx1[kk]] += c1 * wv
            for kk in range(nK):
                w[kk] = wnew[kk]

        b_prev = B
        u_prev = u

    return fallbacks
