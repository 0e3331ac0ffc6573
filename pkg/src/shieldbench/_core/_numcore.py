"""Pure-numpy implementations of the hot geometry/kinematics kernels.

Mirror of the compiled extension in ``_fastcore``; the two must agree to
numerical round-off on all inputs (see tests/test_core_backends.py).
Capsules are packed as rows [ax, ay, az, bx, by, bz, radius].
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_EPS = 1e-12


def segseg_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between segments [p0,p1] and [q0,q1]."""
    a = np.asarray(p0, dtype=np.float64)[None, :]
    b = np.asarray(p1, dtype=np.float64)[None, :]
    c = np.asarray(q0, dtype=np.float64)[None, :]
    d = np.asarray(q1, dtype=np.float64)[None, :]
    return float(_segseg_batch(a, b, c, d)[0])


def _segseg_batch(p0, p1, q0, q1):
    """Vectorized segment-segment distance (Ericson's clamped closed form)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = np.einsum("ij,ij->i", d1, d1)
    e = np.einsum("ij,ij->i", d2, d2)
    f = np.einsum("ij,ij->i", d2, r)
    c = np.einsum("ij,ij->i", d1, r)
    b = np.einsum("ij,ij->i", d1, d2)

    denom = a * e - b * b
    a_deg = a <= _EPS
    e_deg = e <= _EPS

    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(denom > _EPS, np.clip((b * f - c * e) / np.where(denom > _EPS, denom, 1.0), 0.0, 1.0), 0.0)
        t = np.where(e_deg, 0.0, (b * s + f) / np.where(e_deg, 1.0, e))
        # re-clamp s when t leaves [0,1]
        t_low = t < 0.0
        t_high = t > 1.0
        s = np.where(t_low, np.clip(-c / np.where(a_deg, 1.0, a), 0.0, 1.0), s)
        s = np.where(t_high, np.clip((b - c) / np.where(a_deg, 1.0, a), 0.0, 1.0), s)
        t = np.clip(t, 0.0, 1.0)
        # degenerate segments
        s = np.where(a_deg, 0.0, s)
        t = np.where(a_deg & ~e_deg, np.clip(f / np.where(e_deg, 1.0, e), 0.0, 1.0), t)
        t = np.where(e_deg, 0.0, t)
        s = np.where(e_deg & ~a_deg, np.clip(-c / np.where(a_deg, 1.0, a), 0.0, 1.0), s)

    cp = p0 + d1 * s[:, None]
    cq = q0 + d2 * t[:, None]
    diff = cp - cq
    return np.sqrt(np.einsum("ij,ij->i", diff, diff))


def capsule_gap(cap_a, cap_b) -> float:
    """Signed clearance between two packed capsules (negative = overlap depth)."""
    cap_a = np.asarray(cap_a, dtype=np.float64)
    cap_b = np.asarray(cap_b, dtype=np.float64)
    d = segseg_distance(cap_a[:3], cap_a[3:6], cap_b[:3], cap_b[3:6])
    return d - cap_a[6] - cap_b[6]


def capsule_gaps_pairwise(caps_a, caps_b):
    """(N,M) signed clearances between every capsule pair."""
    caps_a = np.ascontiguousarray(caps_a, dtype=np.float64)
    caps_b = np.ascontiguousarray(caps_b, dtype=np.float64)
    n, m = caps_a.shape[0], caps_b.shape[0]
    ai = np.repeat(np.arange(n), m)
    bi = np.tile(np.arange(m), n)
    d = _segseg_batch(caps_a[ai, :3], caps_a[ai, 3:6], caps_b[bi, :3], caps_b[bi, 3:6])
    gaps = d - caps_a[ai, 6] - caps_b[bi, 6]
    return gaps.reshape(n, m)


def _dh_local(dh, qs):
    """(S,n,4,4) joint transforms for DH rows [a, alpha, d, theta_offset]."""
    S, n = qs.shape
    a = dh[:, 0]
    al = dh[:, 1]
    d = dh[:, 2]
    th = qs + dh[:, 3][None, :]
    ct, st = np.cos(th), np.sin(th)
    ca, sa = np.cos(al), np.sin(al)
    T = np.zeros((S, n, 4, 4))
    T[:, :, 0, 0] = ct
    T[:, :, 0, 1] = -st * ca
    T[:, :, 0, 2] = st * sa
    T[:, :, 0, 3] = a * ct
    T[:, :, 1, 0] = st
    T[:, :, 1, 1] = ct * ca
    T[:, :, 1, 2] = -ct * sa
    T[:, :, 1, 3] = a * st
    T[:, :, 2, 1] = sa
    T[:, :, 2, 2] = ca
    T[:, :, 2, 3] = d
    T[:, :, 3, 3] = 1.0
    return T


def fk_transforms(dh, qs):
    """(S,n,4,4) world transform of every joint frame, batched over samples."""
    dh = np.asarray(dh, dtype=np.float64)
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    local = _dh_local(dh, qs)
    S, n = qs.shape
    out = np.empty((S, n, 4, 4))
    acc = local[:, 0]
    out[:, 0] = acc
    for j in range(1, n):
        acc = acc @ local[:, j]
        out[:, j] = acc
    return out


def fk_world_capsules(dh, qs, cap_local, cap_joint, ee_offset):
    """World link capsules and end-effector positions along joint samples.

    Returns (caps (S,L,7), ee_pos (S,3)).
    """
    qs = np.atleast_2d(np.asarray(qs, dtype=np.float64))
    world = fk_transforms(dh, qs)
    cap_local = np.asarray(cap_local, dtype=np.float64)
    cap_joint = np.asarray(cap_joint, dtype=np.int64)
    S = qs.shape[0]
    L = cap_local.shape[0]
    caps = np.empty((S, L, 7))
    frames = world[:, cap_joint]  # (S,L,4,4)
    R = frames[:, :, :3, :3]
    t = frames[:, :, :3, 3]
    caps[:, :, 0:3] = np.einsum("slij,lj->sli", R, cap_local[:, 0:3]) + t
    caps[:, :, 3:6] = np.einsum("slij,lj->sli", R, cap_local[:, 3:6]) + t
    caps[:, :, 6] = cap_local[:, 6]
    ee_T = world[:, -1] @ np.asarray(ee_offset, dtype=np.float64)
    return caps, ee_T[:, :3, 3]


def first_collision_sample(caps, pair_idx, obstacles, margin) -> int:
    """First sample index with a self or static violation, else -1.

    ``pair_idx`` holds the non-exempt link capsule index pairs to test.
    """
    caps = np.asarray(caps, dtype=np.float64)
    S = caps.shape[0]
    pair_idx = np.asarray(pair_idx, dtype=np.int64).reshape(-1, 2)
    obstacles = np.asarray(obstacles, dtype=np.float64).reshape(-1, 7)
    for s in range(S):
        row = caps[s]
        if pair_idx.shape[0]:
            a = row[pair_idx[:, 0]]
            b = row[pair_idx[:, 1]]
            d = _segseg_batch(a[:, :3], a[:, 3:6], b[:, :3], b[:, 3:6])
            if np.any(d - a[:, 6] - b[:, 6] <= margin):
                return s
        if obstacles.shape[0]:
            gaps = capsule_gaps_pairwise(row, obstacles)
            if np.any(gaps <= margin):
                return s
    return -1


def verify_capsule_sweep(caps, sag, human, growth, exempt):
    """Check swept robot capsules against grown human capsules per interval.

    caps: (S,L,7) robot capsules at the S shielded samples.
    sag: (S-1,) extra inflation covering curved link motion per interval.
    human: (H,7) measured human body capsules.
    growth: (S-1,H) per-interval radial growth (meas error + speed bound).
    exempt: (S-1,L) bool, pairs exempt from the separation requirement.

    Returns int64[3] = (interval, link, body) of the first violation, else
    all -1.
    """
    caps = np.asarray(caps, dtype=np.float64)
    human = np.asarray(human, dtype=np.float64).reshape(-1, 7)
    growth = np.asarray(growth, dtype=np.float64)
    sag = np.asarray(sag, dtype=np.float64)
    exempt = np.asarray(exempt, dtype=bool)
    S, L, _ = caps.shape
    H = human.shape[0]
    out = np.full(3, -1, dtype=np.int64)
    if H == 0 or S < 2:
        return out
    for k in range(S - 1):
        A = caps[k]
        B = caps[k + 1]
        mid = 0.5 * (A + B)
        move_a = np.linalg.norm(B[:, 0:3] - A[:, 0:3], axis=1)
        move_b = np.linalg.norm(B[:, 3:6] - A[:, 3:6], axis=1)
        r_sweep = A[:, 6] + 0.5 * np.maximum(move_a, move_b) + sag[k]
        li = np.repeat(np.arange(L), H)
        hi = np.tile(np.arange(H), L)
        d = _segseg_batch(mid[li, 0:3], mid[li, 3:6], human[hi, 0:3], human[hi, 3:6])
        gap = d - r_sweep[li] - human[hi, 6] - growth[k, hi]
        bad = (gap <= 0.0) & ~exempt[k, li]
        if np.any(bad):
            first = int(np.argmax(bad))
            out[0] = k
            out[1] = li[first]
            out[2] = hi[first]
            return out
    return out


def min_capsule_gap_pair(caps_a, caps_b):
    """(gap, i, j) for the closest pair between two capsule sets."""
    gaps = capsule_gaps_pairwise(caps_a, caps_b)
    if gaps.size == 0:
        return np.inf, -1, -1
    flat = int(np.argmin(gaps))
    i, j = divmod(flat, gaps.shape[1])
    return float(gaps[i, j]), i, j
