# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry/kinematics kernels.

Same API as ``_numcore``; keep the two in lockstep.  Capsules are packed
as rows [ax, ay, az, bx, by, bz, radius], float64 C-contiguous.
"""

import numpy as np

from libc.math cimport sqrt, sin, cos

BACKEND_NAME = "compiled"

cdef double _EPS = 1e-12


cdef inline double _clamp01(double x) nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef double _segseg(const double* p0, const double* p1,
                    const double* q0, const double* q1) nogil:
    cdef double d1[3]
    cdef double d2[3]
    cdef double r[3]
    cdef double a = 0.0, e = 0.0, f = 0.0, c = 0.0, b = 0.0
    cdef double denom, s, t, dx, dist2 = 0.0
    cdef int i
    for i in range(3):
        d1[i] = p1[i] - p0[i]
        d2[i] = q1[i] - q0[i]
        r[i] = p0[i] - q0[i]
        a += d1[i] * d1[i]
        e += d2[i] * d2[i]
        f += d2[i] * r[i]
        c += d1[i] * r[i]
        b += d1[i] * d2[i]
    if a <= _EPS and e <= _EPS:
        s = 0.0
        t = 0.0
    elif a <= _EPS:
        s = 0.0
        t = _clamp01(f / e)
    elif e <= _EPS:
        t = 0.0
        s = _clamp01(-c / a)
    else:
        denom = a * e - b * b
        if denom > _EPS:
            s = _clamp01((b * f - c * e) / denom)
        else:
            s = 0.0
        t = (b * s + f) / e
        if t < 0.0:
            t = 0.0
            s = _clamp01(-c / a)
        elif t > 1.0:
            t = 1.0
            s = _clamp01((b - c) / a)
    for i in range(3):
        dx = (p0[i] + d1[i] * s) - (q0[i] + d2[i] * t)
        dist2 += dx * dx
    return sqrt(dist2)


def segseg_distance(p0, p1, q0, q1):
    """Minimum distance between segments [p0,p1] and [q0,q1]."""
    cdef double[::1] a = np.ascontiguousarray(p0, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(p1, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(q0, dtype=np.float64)
    cdef double[::1] d = np.ascontiguousarray(q1, dtype=np.float64)
    return _segseg(&a[0], &b[0], &c[0], &d[0])


def capsule_gap(cap_a, cap_b):
    """Signed clearance between two packed capsules (negative = overlap depth)."""
    cdef double[::1] a = np.ascontiguousarray(cap_a, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(cap_b, dtype=np.float64)
    return _segseg(&a[0], &a[3], &b[0], &b[3]) - a[6] - b[6]


def capsule_gaps_pairwise(caps_a, caps_b):
    """(N,M) signed clearances between every capsule pair."""
    cdef double[:, ::1] A = np.ascontiguousarray(caps_a, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(caps_b, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            for j in range(m):
                out[i, j] = _segseg(&A[i, 0], &A[i, 3], &B[j, 0], &B[j, 3]) - A[i, 6] - B[j, 6]
    return out_arr


cdef void _fk_chain(const double* dh, const double* q, Py_ssize_t n,
                    double* world) nogil:
    # world: n contiguous 3x4 row-major frames (rotation | translation)
    cdef double ct, st, ca, sa, aa, dd
    cdef double loc[12]
    cdef double acc[12]
    cdef double nxt[12]
    cdef Py_ssize_t j, r, k
    for j in range(n):
        aa = dh[4 * j + 0]
        ca = cos(dh[4 * j + 1])
        sa = sin(dh[4 * j + 1])
        dd = dh[4 * j + 2]
        ct = cos(q[j] + dh[4 * j + 3])
        st = sin(q[j] + dh[4 * j + 3])
        loc[0] = ct; loc[1] = -st * ca; loc[2] = st * sa; loc[3] = aa * ct
        loc[4] = st; loc[5] = ct * ca; loc[6] = -ct * sa; loc[7] = aa * st
        loc[8] = 0.0; loc[9] = sa; loc[10] = ca; loc[11] = dd
        if j == 0:
            for k in range(12):
                world[k] = loc[k]
            for k in range(12):
                acc[k] = loc[k]
        else:
            for r in range(3):
                for k in range(3):
                    nxt[4 * r + k] = (acc[4 * r + 0] * loc[0 + k]
                                      + acc[4 * r + 1] * loc[4 + k]
                                      + acc[4 * r + 2] * loc[8 + k])
                nxt[4 * r + 3] = (acc[4 * r + 0] * loc[3]
                                  + acc[4 * r + 1] * loc[7]
                                  + acc[4 * r + 2] * loc[11]
                                  + acc[4 * r + 3])
            for k in range(12):
                acc[k] = nxt[k]
                world[12 * j + k] = nxt[k]


def fk_transforms(dh, qs):
    """(S,n,4,4) world transform of every joint frame, batched over samples."""
    cdef double[:, ::1] DH = np.ascontiguousarray(dh, dtype=np.float64)
    qs_arr = np.atleast_2d(np.ascontiguousarray(qs, dtype=np.float64))
    cdef double[:, ::1] Q = qs_arr
    cdef Py_ssize_t S = Q.shape[0], n = Q.shape[1], s, j, r, k
    scratch_arr = np.empty(12 * n, dtype=np.float64)
    cdef double[::1] scratch = scratch_arr
    out_arr = np.zeros((S, n, 4, 4), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    with nogil:
        for s in range(S):
            _fk_chain(&DH[0, 0], &Q[s, 0], n, &scratch[0])
            for j in range(n):
                for r in range(3):
                    for k in range(4):
                        out[s, j, r, k] = scratch[12 * j + 4 * r + k]
                out[s, j, 3, 3] = 1.0
    return out_arr


def fk_world_capsules(dh, qs, cap_local, cap_joint, ee_offset):
    """World link capsules and end-effector positions along joint samples.

    Returns (caps (S,L,7), ee_pos (S,3)).
    """
    cdef double[:, ::1] DH = np.ascontiguousarray(dh, dtype=np.float64)
    qs_arr = np.atleast_2d(np.ascontiguousarray(qs, dtype=np.float64))
    cdef double[:, ::1] Q = qs_arr
    cdef double[:, ::1] CL = np.ascontiguousarray(cap_local, dtype=np.float64)
    cdef long[::1] CJ = np.ascontiguousarray(cap_joint, dtype=np.int64)
    cdef double[:, ::1] EE = np.ascontiguousarray(ee_offset, dtype=np.float64)
    cdef Py_ssize_t S = Q.shape[0], n = Q.shape[1], L = CL.shape[0]
    cdef Py_ssize_t s, l, r, jl
    scratch_arr = np.empty(12 * n, dtype=np.float64)
    cdef double[::1] scratch = scratch_arr
    caps_arr = np.empty((S, L, 7), dtype=np.float64)
    ee_arr = np.empty((S, 3), dtype=np.float64)
    cdef double[:, :, ::1] caps = caps_arr
    cdef double[:, ::1] ee = ee_arr
    cdef double* fr
    with nogil:
        for s in range(S):
            _fk_chain(&DH[0, 0], &Q[s, 0], n, &scratch[0])
            for l in range(L):
                jl = CJ[l]
                fr = &scratch[12 * jl]
                for r in range(3):
                    caps[s, l, r] = (fr[4 * r + 0] * CL[l, 0]
                                     + fr[4 * r + 1] * CL[l, 1]
                                     + fr[4 * r + 2] * CL[l, 2]
                                     + fr[4 * r + 3])
                    caps[s, l, 3 + r] = (fr[4 * r + 0] * CL[l, 3]
                                         + fr[4 * r + 1] * CL[l, 4]
                                         + fr[4 * r + 2] * CL[l, 5]
                                         + fr[4 * r + 3])
                caps[s, l, 6] = CL[l, 6]
            fr = &scratch[12 * (n - 1)]
            for r in range(3):
                ee[s, r] = (fr[4 * r + 0] * EE[0, 3]
                            + fr[4 * r + 1] * EE[1, 3]
                            + fr[4 * r + 2] * EE[2, 3]
                            + fr[4 * r + 3])
    return caps_arr, ee_arr


def first_collision_sample(caps, pair_idx, obstacles, margin):
    """First sample index with a self or static violation, else -1."""
    cdef double[:, :, ::1] C = np.ascontiguousarray(caps, dtype=np.float64)
    pair_arr = np.ascontiguousarray(np.asarray(pair_idx, dtype=np.int64).reshape(-1, 2))
    cdef long[:, ::1] P = pair_arr
    obs_arr = np.ascontiguousarray(np.asarray(obstacles, dtype=np.float64).reshape(-1, 7))
    cdef double[:, ::1] O = obs_arr
    cdef double mg = margin
    cdef Py_ssize_t S = C.shape[0], np_ = P.shape[0], no = O.shape[0]
    cdef Py_ssize_t s, p, o, ia, ib
    cdef double g
    cdef Py_ssize_t hit = -1
    with nogil:
        for s in range(S):
            for p in range(np_):
                ia = P[p, 0]
                ib = P[p, 1]
                g = _segseg(&C[s, ia, 0], &C[s, ia, 3], &C[s, ib, 0], &C[s, ib, 3]) - C[s, ia, 6] - C[s, ib, 6]
                if g <= mg:
                    hit = s
                    break
            if hit >= 0:
                break
            for o in range(no):
                for p in range(C.shape[1]):
                    g = _segseg(&C[s, p, 0], &C[s, p, 3], &O[o, 0], &O[o, 3]) - C[s, p, 6] - O[o, 6]
                    if g <= mg:
                        hit = s
                        break
                if hit >= 0:
                    break
            if hit >= 0:
                break
    return int(hit)


def verify_capsule_sweep(caps, sag, human, growth, exempt):
    """Check swept robot capsules against grown human capsules per interval.

    Returns int64[3] = (interval, link, body) of the first violation, else
    all -1.
    """
    cdef double[:, :, ::1] C = np.ascontiguousarray(caps, dtype=np.float64)
    cdef double[::1] SG = np.ascontiguousarray(sag, dtype=np.float64)
    hum_arr = np.ascontiguousarray(np.asarray(human, dtype=np.float64).reshape(-1, 7))
    cdef double[:, ::1] HU = hum_arr
    cdef double[:, ::1] G = np.ascontiguousarray(growth, dtype=np.float64)
    cdef unsigned char[:, ::1] X = np.ascontiguousarray(exempt, dtype=np.uint8)
    cdef Py_ssize_t S = C.shape[0], L = C.shape[1], H = HU.shape[0]
    cdef Py_ssize_t k, l, h, i
    cdef double mid[6]
    cdef double ma, mb, dx, r_sweep, d
    out = np.full(3, -1, dtype=np.int64)
    cdef long[::1] out_v = out
    if H == 0 or S < 2:
        return out
    with nogil:
        for k in range(S - 1):
            for l in range(L):
                if X[k, l]:
                    continue
                ma = 0.0
                mb = 0.0
                for i in range(3):
                    mid[i] = 0.5 * (C[k, l, i] + C[k + 1, l, i])
                    mid[3 + i] = 0.5 * (C[k, l, 3 + i] + C[k + 1, l, 3 + i])
                    dx = C[k + 1, l, i] - C[k, l, i]
                    ma += dx * dx
                    dx = C[k + 1, l, 3 + i] - C[k, l, 3 + i]
                    mb += dx * dx
                ma = sqrt(ma)
                mb = sqrt(mb)
                if mb > ma:
                    ma = mb
                r_sweep = C[k, l, 6] + 0.5 * ma + SG[k]
                for h in range(H):
                    d = _segseg(&mid[0], &mid[3], &HU[h, 0], &HU[h, 3])
                    if d - r_sweep - HU[h, 6] - G[k, h] <= 0.0:
                        out_v[0] = k
                        out_v[1] = l
                        out_v[2] = h
                        break
                if out_v[0] >= 0:
                    break
            if out_v[0] >= 0:
                break
    return out


def min_capsule_gap_pair(caps_a, caps_b):
    """(gap, i, j) for the closest pair between two capsule sets."""
    cdef double[:, ::1] A = np.ascontiguousarray(np.asarray(caps_a, dtype=np.float64).reshape(-1, 7))
    cdef double[:, ::1] B = np.ascontiguousarray(np.asarray(caps_b, dtype=np.float64).reshape(-1, 7))
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], i, j
    cdef Py_ssize_t bi = -1, bj = -1
    cdef double best = np.inf
    cdef double g
    if n == 0 or m == 0:
        return np.inf, -1, -1
    with nogil:
        for i in range(n):
            for j in range(m):
                g = _segseg(&A[i, 0], &A[i, 3], &B[j, 0], &B[j, 3]) - A[i, 6] - B[j, 6]
                if g < best:
                    best = g
                    bi = i
                    bj = j
    return best, int(bi), int(bj)
