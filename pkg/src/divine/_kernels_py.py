"""Pure-numpy versions of the hot loops; same signatures as ``_kernels.pyx``.

Diversity kinds are passed as integers: 0 sum-redundancy, 1 facility
location, 2 MMD. State arrays are updated in place.
"""
import numpy as np
from scipy.spatial.distance import pdist, squareform

SR, FL, MMD = 0, 1, 2
_CHUNK = 256


def sq_dists(X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        return np.zeros((X.shape[0], X.shape[0]))
    return squareform(pdist(X, "sqeuclidean"))


def mmd_value(cross, intra, size, n, fixed_size):
    k = fixed_size if fixed_size > 0 else size
    if size == 0 or k == 0:
        return 0.0
    return 2.0 * cross / (n * k) - intra / (k * k)


def div_gains(kind, K, cand, sim_to_s, cur_max, colsum, cross, intra, size, fixed_size):
    """Marginal diversity gain of each candidate given the current state."""
    cand = np.asarray(cand, dtype=np.int64)
    diag = K[cand, cand]
    if kind == SR:
        return -(2.0 * sim_to_s[cand] + diag)
    if kind == FL:
        out = np.empty(len(cand))
        for lo in range(0, len(cand), _CHUNK):
            block = K[:, cand[lo:lo + _CHUNK]]
            out[lo:lo + _CHUNK] = np.maximum(block - cur_max[:, None], 0.0).sum(axis=0)
        return out
    n = K.shape[0]
    before = mmd_value(cross, intra, size, n, fixed_size)
    new_cross = cross + colsum[cand]
    new_intra = intra + 2.0 * sim_to_s[cand] + diag
    k = fixed_size if fixed_size > 0 else size + 1
    return 2.0 * new_cross / (n * k) - new_intra / (k * k) - before


def add_point(kind, K, pick, sim_to_s, cur_max):
    """Fold ``pick`` into the state arrays; returns the intra-set increment."""
    inc = 2.0 * sim_to_s[pick] + K[pick, pick]
    sim_to_s += K[:, pick]
    if kind == FL:
        np.maximum(cur_max, K[:, pick], out=cur_max)
    return inc


def greedy(scores, K, gamma, m, kind, colsum, fixed_size, allowed):
    """Deterministic greedy; ties resolved toward the lowest index.

    Returns (chosen, objective_gains, diversity_gains).
    """
    n = K.shape[0]
    scores = np.asarray(scores, dtype=np.float64)
    free = np.asarray(allowed, dtype=bool).copy()
    sim_to_s = np.zeros(n)
    cur_max = np.zeros(n)
    cross = intra = 0.0
    chosen = np.empty(m, dtype=np.int64)
    obj_gain = np.empty(m)
    div_gain = np.empty(m)
    for step in range(m):
        cand = np.flatnonzero(free)
        g = div_gains(kind, K, cand, sim_to_s, cur_max, colsum, cross, intra, step, fixed_size)
        total = scores[cand] + gamma * g
        k = int(np.argmax(total))
        pick = int(cand[k])
        chosen[step] = pick
        obj_gain[step] = total[k]
        div_gain[step] = g[k]
        intra += add_point(kind, K, pick, sim_to_s, cur_max)
        cross += colsum[pick]
        free[pick] = False
    return chosen, obj_gain, div_gain
