"""Pure-Python kernels: grid-walking ray traversal and per-cell fusion updates.

Reference implementation; the compiled extension in ``_core.pyx`` mirrors the
arithmetic operation-for-operation so both backends produce identical bits.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"

MATCH_BETP = 0
MATCH_PPL = 1
RULE_DEMPSTER = 0
RULE_YAGER = 1

_RENORM_DRIFT = 1e-12


def traverse(ox, oy, ex, ey, origin_x, origin_y, res, width, height):
    """Cells crossed by the segment (ox,oy)->(ex,ey), plus the endpoint cell.

    Returns (free_flat, end_flat): flat indices of strictly traversed cells in
    ray order, and the endpoint cell index or -1 when the ray left the grid.
    The sensor origin must lie inside the grid.
    """
    ix = int(math.floor((ox - origin_x) / res))
    iy = int(math.floor((oy - origin_y) / res))
    jx = int(math.floor((ex - origin_x) / res))
    jy = int(math.floor((ey - origin_y) / res))

    cells = []
    dx = ex - ox
    dy = ey - oy

    if ix == jx and iy == jy:
        return np.empty(0, dtype=np.int64), iy * width + ix

    step_x = 1 if dx > 0 else -1 if dx < 0 else 0
    step_y = 1 if dy > 0 else -1 if dy < 0 else 0

    if step_x != 0:
        next_x = origin_x + (ix + (step_x > 0)) * res
        t_max_x = (next_x - ox) / dx
        t_delta_x = res / abs(dx)
    else:
        t_max_x = math.inf
        t_delta_x = math.inf
    if step_y != 0:
        next_y = origin_y + (iy + (step_y > 0)) * res
        t_max_y = (next_y - oy) / dy
        t_delta_y = res / abs(dy)
    else:
        t_max_y = math.inf
        t_delta_y = math.inf

    end_flat = -1
    while True:
        cells.append(iy * width + ix)
        if t_max_x < t_max_y:
            ix += step_x
            t_max_x += t_delta_x
        else:
            iy += step_y
            t_max_y += t_delta_y
        if ix < 0 or ix >= width or iy < 0 or iy >= height:
            break
        if ix == jx and iy == jy:
            end_flat = iy * width + ix
            break
    return np.asarray(cells, dtype=np.int64), end_flat


def apply_logodds(L, n, idx, l_vals, l_max):
    """Sequential clamped log-odds updates on flat grid arrays."""
    Lf = L.ravel()
    nf = n.ravel()
    clamped = math.isfinite(l_max)
    for k in range(idx.shape[0]):
        c = idx[k]
        v = Lf[c] + l_vals[k]
        if clamped:
            if v > l_max:
                v = l_max
            elif v < -l_max:
                v = -l_max
        Lf[c] = v
        nf[c] += 1


def apply_belief(m_o, m_f, m_of, idx, l_vals, matching, rule, mof_floor):
    """Sequential belief updates: matched observation mass combined per cell."""
    mo = m_o.ravel()
    mf = m_f.ravel()
    mof = m_of.ravel()
    for k in range(idx.shape[0]):
        c = idx[k]
        l = l_vals[k]
        if l >= 0:
            p = 1.0 / (1.0 + math.exp(-l))
        else:
            e = math.exp(l)
            p = e / (1.0 + e)
        if matching == MATCH_BETP:
            if p >= 0.5:
                oo = 2.0 * p - 1.0
                of_ = 0.0
            else:
                oo = 0.0
                of_ = 1.0 - 2.0 * p
            oi = 1.0 - abs(2.0 * p - 1.0)
        else:
            if p >= 0.5:
                oo = 2.0 - 1.0 / p
                of_ = 0.0
                oi = 1.0 - oo
            else:
                oo = 0.0
                of_ = 2.0 - 1.0 / (1.0 - p)
                oi = 1.0 - of_

        po = mo[c]
        pf = mf[c]
        pi = mof[c]
        K = po * of_ + pf * oo
        no = po * oo + po * oi + pi * oo
        nf_ = pf * of_ + pf * oi + pi * of_
        ni = pi * oi
        if rule == RULE_DEMPSTER:
            norm = 1.0 - K
            no /= norm
            nf_ /= norm
            ni /= norm
        else:
            ni += K
        s = no + nf_ + ni
        if abs(s - 1.0) > _RENORM_DRIFT:
            no /= s
            nf_ /= s
            ni /= s
        if mof_floor > 0.0 and ni < mof_floor:
            scale = (1.0 - mof_floor) / (no + nf_)
            no *= scale
            nf_ *= scale
            ni = mof_floor
        mo[c] = no
        mf[c] = nf_
        mof[c] = ni
