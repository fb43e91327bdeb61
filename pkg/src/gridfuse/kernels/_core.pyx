# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: mirrors gridfuse.kernels._py operation-for-operation."""

from libc.math cimport exp, fabs, floor, isfinite, INFINITY

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"

MATCH_BETP = 0
MATCH_PPL = 1
RULE_DEMPSTER = 0
RULE_YAGER = 1

cdef double _RENORM_DRIFT = 1e-12


def traverse(double ox, double oy, double ex, double ey,
             double origin_x, double origin_y, double res,
             Py_ssize_t width, Py_ssize_t height):
    cdef Py_ssize_t ix = <Py_ssize_t>floor((ox - origin_x) / res)
    cdef Py_ssize_t iy = <Py_ssize_t>floor((oy - origin_y) / res)
    cdef Py_ssize_t jx = <Py_ssize_t>floor((ex - origin_x) / res)
    cdef Py_ssize_t jy = <Py_ssize_t>floor((ey - origin_y) / res)

    cdef double dx = ex - ox
    cdef double dy = ey - oy

    if ix == jx and iy == jy:
        return np.empty(0, dtype=np.int64), iy * width + ix

    cdef int step_x = 1 if dx > 0 else (-1 if dx < 0 else 0)
    cdef int step_y = 1 if dy > 0 else (-1 if dy < 0 else 0)

    cdef double t_max_x, t_delta_x, t_max_y, t_delta_y, next_x, next_y
    if step_x != 0:
        next_x = origin_x + (ix + (1 if step_x > 0 else 0)) * res
        t_max_x = (next_x - ox) / dx
        t_delta_x = res / fabs(dx)
    else:
        t_max_x = INFINITY
        t_delta_x = INFINITY
    if step_y != 0:
        next_y = origin_y + (iy + (1 if step_y > 0 else 0)) * res
        t_max_y = (next_y - oy) / dy
        t_delta_y = res / fabs(dy)
    else:
        t_max_y = INFINITY
        t_delta_y = INFINITY

    # Worst-case cell count along the segment.
    cdef Py_ssize_t cap = width + height + 2
    out = np.empty(cap, dtype=np.int64)
    cdef cnp.int64_t[::1] buf = out
    cdef Py_ssize_t count = 0
    cdef Py_ssize_t end_flat = -1

    while True:
        if count >= cap:
            break
        buf[count] = iy * width + ix
        count += 1
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
    return out[:count], end_flat


def apply_logodds(cnp.float64_t[:, ::1] L, cnp.int64_t[:, ::1] n,
                  cnp.int64_t[::1] idx, cnp.float64_t[::1] l_vals,
                  double l_max):
    cdef cnp.float64_t[::1] Lf = np.asarray(L).ravel()
    cdef cnp.int64_t[::1] nf = np.asarray(n).ravel()
    cdef bint clamped = isfinite(l_max)
    cdef Py_ssize_t k, c
    cdef double v
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


def apply_belief(cnp.float64_t[:, ::1] m_o, cnp.float64_t[:, ::1] m_f,
                 cnp.float64_t[:, ::1] m_of,
                 cnp.int64_t[::1] idx, cnp.float64_t[::1] l_vals,
                 int matching, int rule, double mof_floor):
    cdef cnp.float64_t[::1] mo = np.asarray(m_o).ravel()
    cdef cnp.float64_t[::1] mf = np.asarray(m_f).ravel()
    cdef cnp.float64_t[::1] mof = np.asarray(m_of).ravel()
    cdef Py_ssize_t k, c
    cdef double l, p, e, oo, of_, oi, po, pf, pi, K, no, nf_, ni, s, norm, scale
    for k in range(idx.shape[0]):
        c = idx[k]
        l = l_vals[k]
        if l >= 0:
            p = 1.0 / (1.0 + exp(-l))
        else:
            e = exp(l)
            p = e / (1.0 + e)
        if matching == MATCH_BETP:
            if p >= 0.5:
                oo = 2.0 * p - 1.0
                of_ = 0.0
            else:
                oo = 0.0
                of_ = 1.0 - 2.0 * p
            oi = 1.0 - fabs(2.0 * p - 1.0)
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
        if fabs(s - 1.0) > _RENORM_DRIFT:
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
