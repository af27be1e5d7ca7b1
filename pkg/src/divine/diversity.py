"""RBF similarity kernel and submodular diversity functions.

Double sums over a set run over ordered pairs and include ``u == v``, so
``r_sr(D) == 0`` holds exactly. ``DiversityFn`` keeps the running state
needed for O(n) marginal gains; it is mutable, so clone it per selection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .dataset import Dataset

KINDS = {"sr": kernels.SR, "fl": kernels.FL, "mmd": kernels.MMD}
MEDIAN_SUBSAMPLE = 4000


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    entries: np.ndarray
    bandwidth: float
    ids: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def colsum(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    @property
    def kappa(self) -> float:
        return float(self.entries.sum())


def median_distance(X, seed: int = 0, max_points: int = MEDIAN_SUBSAMPLE) -> float:
    """Median pairwise Euclidean distance; subsamples rows above ``max_points``."""
    X = np.asarray(X, dtype=float)
    if X.shape[0] > max_points:
        rows = np.random.default_rng(seed).choice(X.shape[0], max_points, replace=False)
        X = X[np.sort(rows)]
    D = kernels.sq_dists(X)
    iu = np.triu_indices(X.shape[0], k=1)
    return float(np.sqrt(np.median(D[iu])))


def rbf_kernel(ds: Dataset, bandwidth="median") -> KernelMatrix:
    X = ds.raw_features
    if isinstance(bandwidth, str):
        if bandwidth != "median":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        if ds.n < 2:
            raise ValueError("median bandwidth needs at least two points")
        sigma = median_distance(X)
        if sigma <= 0:
            raise ValueError("median pairwise distance is 0 (all points identical)")
    else:
        sigma = float(bandwidth)
        if not sigma > 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    K = np.exp(-kernels.sq_dists(X) / (2.0 * sigma * sigma))
    # far-apart pairs underflow to 0; keep entries strictly positive
    np.clip(K, np.finfo(float).tiny, 1.0, out=K)
    np.fill_diagonal(K, 1.0)
    return KernelMatrix(entries=K, bandwidth=sigma, ids=ds.ids.copy())


def _members(S, n) -> np.ndarray:
    S = np.asarray(list(S) if not isinstance(S, np.ndarray) else S, dtype=np.int64)
    if S.size and (S.min() < 0 or S.max() >= n):
        raise IndexError("set member out of range")
    if len(np.unique(S)) != len(S):
        raise ValueError("set contains duplicates")
    return S


def r_sr(K: KernelMatrix, S) -> float:
    S = _members(S, K.n)
    return K.kappa - float(K.entries[np.ix_(S, S)].sum())


def r_fl(K: KernelMatrix, S) -> float:
    S = _members(S, K.n)
    if S.size == 0:
        return 0.0
    return float(K.entries[:, S].max(axis=1).sum())


def r_mmd(K: KernelMatrix, S, fixed_size: int | None = None) -> float:
    """MMD-style diversity; ``fixed_size`` freezes |S| in the constants."""
    S = _members(S, K.n)
    if S.size == 0:
        return 0.0
    cross = float(K.entries[:, S].sum())
    intra = float(K.entries[np.ix_(S, S)].sum())
    return kernels.mmd_value(cross, intra, S.size, K.n, fixed_size or 0)


class DiversityFn:
    """One of SR, FL or MMD with incremental state for greedy selection."""

    def __init__(self, kind: str, kernel: KernelMatrix, fixed_size: int | None = None):
        kind = kind.lower()
        if kind not in KINDS:
            raise ValueError(f"unknown diversity kind {kind!r}; expected one of {sorted(KINDS)}")
        if fixed_size is not None and fixed_size < 1:
            raise ValueError("fixed_size must be >= 1")
        self.kind = kind
        self.code = KINDS[kind]
        self.kernel = kernel
        self.fixed_size = fixed_size
        self._colsum = kernel.colsum
        self._kappa = kernel.kappa
        self.reset()

    @property
    def n(self) -> int:
        return self.kernel.n

    @property
    def colsum(self) -> np.ndarray:
        return self._colsum

    @property
    def chosen(self) -> list[int]:
        return list(self._chosen)

    def reset(self) -> None:
        self._chosen: list[int] = []
        self._in = np.zeros(self.n, dtype=bool)
        self.sim_to_s = np.zeros(self.n)
        self.cur_max = np.zeros(self.n)
        self.cross = 0.0
        self.intra = 0.0

    def clone(self) -> "DiversityFn":
        other = DiversityFn(self.kind, self.kernel, self.fixed_size)
        for i in self._chosen:
            other.add(i)
        return other

    def evaluate(self, S) -> float:
        """From-scratch value of an arbitrary set."""
        if self.kind == "sr":
            return r_sr(self.kernel, S)
        if self.kind == "fl":
            return r_fl(self.kernel, S)
        return r_mmd(self.kernel, S, self.fixed_size)

    @property
    def value(self) -> float:
        """Value of the current set from the cached state."""
        size = len(self._chosen)
        if self.kind == "sr":
            return self._kappa - self.intra
        if self.kind == "fl":
            return float(self.cur_max.sum()) if size else 0.0
        return kernels.mmd_value(self.cross, self.intra, size, self.n, self.fixed_size or 0)

    def gains(self, candidates=None) -> np.ndarray:
        if candidates is None:
            candidates = np.flatnonzero(~self._in)
        cand = np.asarray(candidates, dtype=np.int64)
        if np.any(self._in[cand]):
            raise ValueError("candidate already in the selected set")
        return kernels.div_gains(self.code, self.kernel.entries, cand, self.sim_to_s,
                                 self.cur_max, self._colsum, self.cross, self.intra,
                                 len(self._chosen), self.fixed_size or 0)

    def gain(self, candidate: int) -> float:
        return float(self.gains([candidate])[0])

    def add(self, candidate: int) -> None:
        candidate = int(candidate)
        if self._in[candidate]:
            raise ValueError(f"point {candidate} already in the selected set")
        self.intra += kernels.add_point(self.code, self.kernel.entries, candidate,
                                        self.sim_to_s, self.cur_max)
        self.cross += float(self._colsum[candidate])
        self._in[candidate] = True
        self._chosen.append(candidate)


def marginal_gain(divfn: DiversityFn, S, candidate: int) -> float:
    """R(S + {candidate}) - R(S) using a fresh incremental state."""
    S = _members(S, divfn.n)
    if candidate in set(S.tolist()):
        raise ValueError(f"point {candidate} already in S")
    fn = DiversityFn(divfn.kind, divfn.kernel, divfn.fixed_size)
    for i in S:
        fn.add(i)
    return fn.gain(candidate)
