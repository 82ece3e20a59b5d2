"""Vectorized numpy backend for the hot kernels.

Sweep kernels are re-implemented with array operations; the per-step
simulation loop is inherently sequential and reuses the loop source.
"""

import numpy as np

from ._loops import simulate_steps  # noqa: F401  (sequential; no array form)


def expected_next_value(v_next, gt, ht, ilo, frac):
    nH = v_next.shape[2]
    # marginalize the gain transition, then interpolate/marginalize harvest
    vg = np.einsum('gq,pqhb->pghb', gt, v_next)
    rows = np.arange(nH)[:, None]
    low = vg[:, :, rows, ilo.T]           # (nP, nG, nH', nX)
    high = vg[:, :, rows, ilo.T + 1]
    interp = (1.0 - frac.T) * low + frac.T * high
    return np.einsum('hq,pgqx->pghx', ht, interp)


def backup(stage, bw, succ, wx, xidx):
    nP, nG, nU = stage.shape
    nH = wx.shape[2]
    nB = xidx.shape[0]
    v = np.full((nP, nG, nH, nB), np.inf)
    pol = np.zeros((nP, nG, nH, nB), dtype=np.int64)
    p_ix = np.arange(nP)[:, None]
    g_ix = np.arange(nG)[None, :]
    for u in range(nU):
        feas = xidx[:, u] >= 0                      # (nB,)
        if not np.any(feas):
            continue
        xi = np.clip(xidx[:, u], 0, None)           # (nB,)
        cont = np.zeros((nP, nG, nH, nB))
        for br in range(bw.shape[3]):
            w = bw[:, :, u, br]                     # (nP, nG)
            if not np.any(w != 0.0):
                continue
            picked = wx[succ[:, :, u, br][:, :, None], g_ix[:, :, None], :, xi[None, None, :]]
            # fancy-index result comes back as (nP, nG, nB, nH)
            cont += w[:, :, None, None] * np.moveaxis(picked, 3, 2)
        qv = stage[:, :, u][:, :, None, None] + cont
        qv[:, :, :, ~feas] = np.inf
        better = qv < v
        v = np.where(better, qv, v)
        pol = np.where(better, u, pol)
    return v, pol


def belief_successors(wmat, idx0, idx1, trace_gaps, h_gu, fb0, fb1):
    nBel, nK = wmat.shape
    nG, nU = h_gu.shape
    pred0 = np.zeros((nBel, nK))
    pred1 = np.zeros((nBel, nK))
    rows = np.arange(nBel)[:, None]
    np.add.at(pred0, (rows, idx0[None, :]), wmat)
    np.add.at(pred1, (rows, idx1[None, :]), wmat)
    cmat = np.cumsum(wmat, axis=1)[:, :-1]
    gaps = trace_gaps[: nK - 1]
    succ = np.zeros((nBel, nG, nU, 3), dtype=np.int64)
    bw = np.zeros((nG, nU, 3))
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
                post = (l0 / z) * pred0 + (l1 / z) * pred1
                cpost = np.cumsum(post, axis=1)[:, :-1]
                dist = (np.abs(cpost[:, None, :] - cmat[None, :, :]) * gaps).sum(axis=2)
                succ[:, g, u, gh] = dist.argmin(axis=1)
    return succ, bw


def noncausal_value(pred_tr, corr_tr, succ0, succ1, h_gu_seq, h_term,
                    h_next_seq, bgrid, uvals, bmax, p0_idx, b0):
    T = h_gu_seq.shape[0]
    nB = bgrid.size
    v = pred_tr[:, None] - np.outer(corr_tr, h_term)
    for k in range(T - 2, -1, -1):
        hn = h_next_seq[k]
        best = np.full(v.shape, np.inf)
        for j in range(uvals.size):
            feas = uvals[j] <= bgrid + 1e-9
            if not np.any(feas):
                continue
            bb = np.clip(bgrid - uvals[j] + hn, 0.0, bmax)
            i0 = np.clip(np.searchsorted(bgrid, bb) - 1, 0, nB - 2)
            f = (bb - bgrid[i0]) / (bgrid[i0 + 1] - bgrid[i0])
            f = np.clip(f, 0.0, 1.0)
            v0 = (1.0 - f) * v[succ0][:, i0] + f * v[succ0][:, i0 + 1]
            v1 = (1.0 - f) * v[succ1][:, i0] + f * v[succ1][:, i0 + 1]
            h = h_gu_seq[k, j]
            qv = (pred_tr - h * corr_tr)[:, None] + (1.0 - h) * v0 + h * v1
            qv[:, ~feas] = np.inf
            best = np.minimum(best, qv)
        v = best
    return float(np.interp(b0, bgrid, v[p0_idx]))
