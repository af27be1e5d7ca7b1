# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops in ``_kernels_py``; identical signatures."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    C_SR = 0
    C_FL = 1
    C_MMD = 2

SR, FL, MMD = 0, 1, 2


def sq_dists(X):
    cdef const double[:, ::1] A = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = A.shape[0], d = A.shape[1], i, j, k
    out = np.zeros((n, n), dtype=np.float64)
    cdef double[:, ::1] D = out
    cdef double s, t
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for k in range(d):
                    t = A[i, k] - A[j, k]
                    s += t * t
                D[i, j] = s
                D[j, i] = s
    return out


cdef inline double _mmd_value(double cross, double intra, Py_ssize_t size, Py_ssize_t n,
                              Py_ssize_t fixed_size) nogil:
    cdef double k = <double>(fixed_size if fixed_size > 0 else size)
    if size == 0 or k == 0:
        return 0.0
    return 2.0 * cross / (n * k) - intra / (k * k)


def mmd_value(double cross, double intra, Py_ssize_t size, Py_ssize_t n, Py_ssize_t fixed_size):
    return _mmd_value(cross, intra, size, n, fixed_size)


cdef double _gain(int kind, const double[:, ::1] K, Py_ssize_t c, double[::1] sim_to_s,
                  double[::1] cur_max, const double[::1] colsum, double cross, double intra,
                  Py_ssize_t size, Py_ssize_t fixed_size, double before) nogil:
    cdef Py_ssize_t n = K.shape[0], u
    cdef double s, v, k
    if kind == C_SR:
        return -(2.0 * sim_to_s[c] + K[c, c])
    if kind == C_FL:
        s = 0.0
        for u in range(n):
            v = K[u, c] - cur_max[u]
            if v > 0.0:
                s += v
        return s
    k = <double>(fixed_size if fixed_size > 0 else size + 1)
    return (2.0 * (cross + colsum[c]) / (n * k)
            - (intra + 2.0 * sim_to_s[c] + K[c, c]) / (k * k) - before)


def div_gains(int kind, K, cand, sim_to_s, cur_max, colsum, double cross, double intra,
              Py_ssize_t size, Py_ssize_t fixed_size):
    cdef const double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef long long[::1] cv = np.ascontiguousarray(cand, dtype=np.int64)
    cdef double[::1] st = sim_to_s, cm = cur_max
    cdef const double[::1] cs = np.ascontiguousarray(colsum, dtype=np.float64)
    cdef Py_ssize_t m = cv.shape[0], i
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double before = _mmd_value(cross, intra, size, Kv.shape[0], fixed_size)
    with nogil:
        for i in range(m):
            o[i] = _gain(kind, Kv, cv[i], st, cm, cs, cross, intra, size, fixed_size, before)
    return out


cdef double _add(int kind, const double[:, ::1] K, Py_ssize_t pick, double[::1] sim_to_s,
                 double[::1] cur_max) nogil:
    cdef Py_ssize_t n = K.shape[0], u
    cdef double inc = 2.0 * sim_to_s[pick] + K[pick, pick]
    for u in range(n):
        sim_to_s[u] += K[u, pick]
        if kind == C_FL and K[u, pick] > cur_max[u]:
            cur_max[u] = K[u, pick]
    return inc


def add_point(int kind, K, Py_ssize_t pick, sim_to_s, cur_max):
    cdef const double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    return _add(kind, Kv, pick, sim_to_s, cur_max)


def greedy(scores, K, double gamma, Py_ssize_t m, int kind, colsum, Py_ssize_t fixed_size, allowed):
    cdef const double[:, ::1] Kv = np.ascontiguousarray(K, dtype=np.float64)
    cdef const double[::1] sc = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const double[::1] cs = np.ascontiguousarray(colsum, dtype=np.float64)
    cdef Py_ssize_t n = Kv.shape[0], step, c, best
    free_arr = np.ascontiguousarray(allowed, dtype=np.uint8).copy()
    cdef unsigned char[::1] free = free_arr
    sim_arr = np.zeros(n)
    max_arr = np.zeros(n)
    cdef double[::1] sim_to_s = sim_arr, cur_max = max_arr
    chosen = np.empty(m, dtype=np.int64)
    obj_gain = np.empty(m)
    div_gain = np.empty(m)
    cdef long long[::1] ch = chosen
    cdef double[::1] og = obj_gain, dg = div_gain
    cdef double cross = 0.0, intra = 0.0, before, g, total, best_total, best_g
    with nogil:
        for step in range(m):
            before = _mmd_value(cross, intra, step, n, fixed_size)
            best = -1
            best_total = 0.0
            best_g = 0.0
            for c in range(n):
                if not free[c]:
                    continue
                g = _gain(kind, Kv, c, sim_to_s, cur_max, cs, cross, intra, step, fixed_size, before)
                total = sc[c] + gamma * g
                if best < 0 or total > best_total:
                    best = c
                    best_total = total
                    best_g = g
            ch[step] = best
            og[step] = best_total
            dg[step] = best_g
            intra += _add(kind, Kv, best, sim_to_s, cur_max)
            cross += cs[best]
            free[best] = 0
    return chosen, obj_gain, div_gain
