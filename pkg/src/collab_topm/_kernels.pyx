# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.  Must stay draw-for-draw identical to ``_pykernels``."""

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport ceil, floor, log, sqrt
from libc.stdint cimport int8_t, int64_t
from libc.string cimport memset
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport binomial_t, random_binomial, random_standard_normal

import numpy as np


cdef inline bint _better(const double* means, int64_t a, int64_t b) noexcept nogil:
    # Total order: larger mean first, then smaller index.
    return means[a] > means[b] or (means[a] == means[b] and a < b)


cdef inline void _reposition(int64_t* order, int64_t* pos, Py_ssize_t n, const double* means,
                             int64_t a) noexcept nogil:
    cdef Py_ssize_t p = pos[a]
    while p > 0 and _better(means, a, order[p - 1]):
        order[p] = order[p - 1]
        pos[order[p]] = p
        p -= 1
    while p < n - 1 and _better(means, order[p + 1], a):
        order[p] = order[p + 1]
        pos[order[p]] = p
        p += 1
    order[p] = a
    pos[a] = p


def lucb_run(const double[::1] theta, bint flip, int64_t[::1] counts, int64_t[::1] sums,
             int64_t[::1] order, Py_ssize_t m, double n_beta, double delta, int64_t t,
             int64_t t_step, double eps_stop, const double[::1] u):
    """Compiled twin of ``_pykernels.lucb_run``; ``order`` must hold the current ranking."""
    cdef Py_ssize_t n = theta.shape[0], total = u.shape[0], used = 0, k, j
    cdef double[::1] means_mv = np.empty(n, dtype=np.float64)
    cdef double[::1] rad_mv = np.empty(n, dtype=np.float64)
    cdef double* means = &means_mv[0]
    cdef double* rad = &rad_mv[0]
    cdef int64_t[::1] pos_mv = np.empty(n, dtype=np.int64)
    cdef int64_t* pos = &pos_mv[0]
    cdef int64_t* od = &order[0]
    cdef double tt, sl, v, b, best_h = 0.0, best_l = 0.0, beta_h = 0.0, beta_l = 0.0
    cdef int64_t a, h, low, r
    cdef int64_t pair[2]
    cdef bint stopped = False
    for k in range(n):
        means[k] = <double>sums[k] / <double>counts[k]
        rad[k] = sqrt(0.5 / <double>counts[k])
        pos[od[k]] = k
    with nogil:
        while True:
            tt = <double>t
            tt = tt * tt
            sl = sqrt(log(5.0 * n_beta * tt * tt / (4.0 * delta)))
            h = -1
            for k in range(m):
                a = od[k]
                b = sl * rad[a]
                v = means[a] - b
                if h < 0 or v < best_h or (v == best_h and a < h):
                    h = a
                    best_h = v
                    beta_h = b
            low = -1
            for k in range(m, n):
                a = od[k]
                b = sl * rad[a]
                v = means[a] + b
                if low < 0 or v > best_l or (v == best_l and a < low):
                    low = a
                    best_l = v
                    beta_l = b
            if eps_stop >= 0.0 and (means[low] + beta_l) - (means[h] - beta_h) < eps_stop / 2.0:
                stopped = True
                break
            if used + 2 > total:
                break
            pair[0] = h
            pair[1] = low
            for j in range(2):
                a = pair[j]
                r = 1 if u[used] < theta[a] else 0
                if flip:
                    r = 1 - r
                counts[a] += 1
                sums[a] += r
                used += 1
                means[a] = <double>sums[a] / <double>counts[a]
                rad[a] = sqrt(0.5 / <double>counts[a])
                _reposition(od, pos, n, means, a)
            t += t_step
    return t, used, stopped


cdef inline int64_t _draw(bitgen_t* bg, binomial_t* bt, int64_t count, double p, bint flip,
                          double normal_var) noexcept nogil:
    cdef double var, x
    cdef int64_t s
    if count == 0:
        return 0
    var = <double>count * p * (1.0 - p)
    if var >= normal_var:
        x = floor(<double>count * p + sqrt(var) * random_standard_normal(bg) + 0.5)
        if x < 0.0:
            s = 0
        elif x > <double>count:
            s = count
        else:
            s = <int64_t>x
    else:
        s = random_binomial(bg, p, count, bt)
    return count - s if flip else s


cdef void _select_top(int64_t* arr, Py_ssize_t size, Py_ssize_t kth, const double* means) noexcept nogil:
    # Rearranges arr so that arr[0..kth] are the kth+1 best under _better.
    cdef Py_ssize_t lo = 0, hi = size - 1, i, j
    cdef int64_t pivot, tmp
    while hi > lo:
        pivot = arr[(lo + hi) // 2]
        i = lo
        j = hi
        while i <= j:
            while _better(means, arr[i], pivot):
                i += 1
            while _better(means, pivot, arr[j]):
                j -= 1
            if i <= j:
                tmp = arr[i]
                arr[i] = arr[j]
                arr[j] = tmp
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            return


def subset_best_arm_batch(gen, const double[::1] theta, bint flip, double incl_p, int64_t K,
                          int64_t rounds, double delta, int64_t budget, double beta, int64_t copies,
                          double normal_var, int64_t[:, :, ::1] counts_out, int64_t[:, ::1] rewards_out):
    """Compiled twin of ``_pykernels.subset_best_arm_batch``."""
    cdef Py_ssize_t n = theta.shape[0]
    cdef bitgen_t* bg = <bitgen_t*>PyCapsule_GetPointer(gen.bit_generator.capsule, "BitGenerator")
    cdef binomial_t bt, bt_v
    memset(&bt, 0, sizeof(bt))
    memset(&bt_v, 0, sizeof(bt_v))
    arms_np = np.full(copies, -1, dtype=np.int64)
    branch_np = np.zeros(copies, dtype=np.int8)
    cdef int64_t[::1] arms_out = arms_np
    cdef int8_t[::1] branch_out = branch_np
    cdef int8_t[::1] mark = np.zeros(n, dtype=np.int8)
    cdef int64_t[::1] V = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] alive = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] scratch = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] cnt = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] sm = np.zeros(n, dtype=np.int64)
    cdef double[::1] est_mv = np.zeros(n, dtype=np.float64)
    cdef double[::1] gap = np.zeros(n, dtype=np.float64)
    cdef double[::1] need = np.zeros(n, dtype=np.float64)
    cdef double[::1] hat = np.zeros(n, dtype=np.float64)
    cdef int64_t[::1] sizes = np.zeros(max(rounds, 1), dtype=np.int64)
    # Per-agent loads shared by all agents; expanded into counts_out at the end.
    cdef int64_t[:, ::1] shared = np.zeros((counts_out.shape[0], n), dtype=np.int64)
    cdef double* est = &est_mv[0]
    cdef int64_t c, k, j, t, tau, half, per_round, per_agent, s, nsizes, a, x, winner, rival
    cdef int64_t ca, base, rem, off, ag, n_alive, keep, q, vr
    cdef Py_ssize_t i
    cdef double total, gamma, lhs, rhs, v
    cdef bint ok
    with gen.bit_generator.lock, nogil:
        for c in range(copies):
            k = random_binomial(bg, incl_p, n, &bt_v)
            for j in range(n - k, n):
                t = <int64_t>(bg.next_double(bg.state) * <double>(j + 1))
                if mark[t]:
                    mark[j] = 1
                else:
                    mark[t] = 1
            q = 0
            for i in range(n):
                if mark[i]:
                    V[q] = i
                    q += 1
                    mark[i] = 0
            if bg.next_double(bg.state) < 0.5:
                tau = budget
            else:
                tau = <int64_t>floor(<double>budget / beta)
                branch_out[c] = 1
            if k == 0:
                continue
            if k == 1:
                arms_out[c] = V[0]
                continue
            half = tau // 2
            per_round = half // rounds
            nsizes = 0
            s = k
            ok = True
            while s > 1 and nsizes < rounds:
                sizes[nsizes] = s
                if per_round // s == 0:
                    ok = False
                nsizes += 1
                s = (s + 1) // 2
            if not ok:
                continue
            for i in range(k):
                a = V[i]
                cnt[a] = 0
                sm[a] = 0
                alive[i] = a
            n_alive = k
            winner = -1
            for j in range(nsizes):
                s = sizes[j]
                per_agent = per_round // s
                for i in range(n_alive):
                    a = alive[i]
                    x = _draw(bg, &bt, K * per_agent, theta[a], flip, normal_var)
                    cnt[a] += K * per_agent
                    sm[a] += x
                    est[a] = <double>sm[a] / <double>cnt[a]
                    shared[j, a] += per_agent
                    rewards_out[j, a] += x
                if j == nsizes - 1:
                    winner = alive[0]
                    for i in range(1, n_alive):
                        if _better(est, alive[i], winner):
                            winner = alive[i]
                else:
                    keep = (s + 1) // 2
                    for i in range(n_alive):
                        scratch[i] = alive[i]
                    _select_top(&scratch[0], n_alive, keep - 1, est)
                    for i in range(keep):
                        mark[scratch[i]] = 1
                    q = 0
                    for i in range(n_alive):
                        if mark[alive[i]]:
                            mark[alive[i]] = 0
                            alive[q] = alive[i]
                            q += 1
                    n_alive = q
            vr = nsizes
            rival = -1
            for i in range(k):
                a = V[i]
                if a != winner and (rival < 0 or _better(est, a, rival)):
                    rival = a
            ok = True
            for i in range(k):
                a = V[i]
                if a == winner:
                    gap[a] = est[winner] - est[rival]
                else:
                    gap[a] = est[winner] - est[a]
                if not gap[a] > 0.0:
                    ok = False
            if not ok:
                continue
            gamma = log(<double>k / delta)
            total = 0.0
            for i in range(k):
                a = V[i]
                need[a] = ceil(64.0 * gamma / (gap[a] * gap[a]))
                total += need[a]
            if total > <double>K * <double>half:
                continue
            off = 0
            for i in range(k):
                a = V[i]
                ca = <int64_t>need[a]
                base = ca // K
                rem = ca % K
                shared[vr, a] += base
                ag = off
                for q in range(rem):
                    counts_out[vr, ag, a] += 1
                    ag += 1
                    if ag == K:
                        ag = 0
                off = (off + ca) % K
                x = _draw(bg, &bt, ca, theta[a], flip, normal_var)
                rewards_out[vr, a] += x
                hat[a] = <double>x / <double>ca
            lhs = hat[winner] - gap[winner] / 4.0
            rhs = 0.0
            ok = False
            for i in range(k):
                a = V[i]
                if a != winner:
                    v = hat[a] + gap[a] / 4.0
                    if not ok or v > rhs:
                        rhs = v
                        ok = True
            if lhs > rhs:
                arms_out[c] = winner
        for j in range(counts_out.shape[0]):
            for ag in range(K):
                for i in range(n):
                    counts_out[j, ag, i] += shared[j, i]
    return arms_np, branch_np
