"""Greedy selection of influential and diverse points.

The objective for a size-m set S is ``sum_{i in S} I_i + gamma * R(S)``.
Every selector breaks ties toward the lowest index, so results are
deterministic for a given input.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import model
from ._backend import kernels
from .dataset import Dataset
from .diversity import DiversityFn
from .errors import SelectionError
from .evalfn import EvalFn

DEFAULT_GRID = np.concatenate([[0.0], np.logspace(-4, 5, 41)])
BRUTE_FORCE_LIMIT = 10**6


def _values(scores) -> np.ndarray:
    vals = getattr(scores, "values", scores)
    return np.asarray(vals, dtype=float)


def _check_m(m: int, n: int) -> None:
    if m < 1:
        raise SelectionError(f"m must be >= 1, got {m}")
    if m > n:
        raise SelectionError(f"m={m} exceeds the number of points n={n}")


@dataclass(eq=False)
class SelectionResult:
    chosen: list[int]
    gamma: float
    importance_sum: float
    diversity_value: float
    objective: float
    per_step_gains: list[float] = field(default_factory=list)
    chosen_ids: list[int] | None = None

    def to_dict(self) -> dict:
        out = {"chosen": [int(i) for i in self.chosen], "gamma": float(self.gamma),
               "importance_sum": float(self.importance_sum),
               "diversity_value": float(self.diversity_value),
               "objective": float(self.objective),
               "per_step_gains": [float(g) for g in self.per_step_gains]}
        if self.chosen_ids is not None:
            out["chosen_ids"] = [int(i) for i in self.chosen_ids]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "SelectionResult":
        return cls(chosen=list(obj["chosen"]), gamma=obj["gamma"],
                   importance_sum=obj["importance_sum"], diversity_value=obj["diversity_value"],
                   objective=obj["objective"], per_step_gains=list(obj.get("per_step_gains", [])),
                   chosen_ids=obj.get("chosen_ids"))

    @classmethod
    def from_json(cls, text: str) -> "SelectionResult":
        return cls.from_dict(json.loads(text))


def _result(vals, divfn: DiversityFn, gamma, chosen, gains, ids=None) -> SelectionResult:
    chosen = [int(i) for i in chosen]
    imp = float(vals[chosen].sum())
    div = divfn.evaluate(chosen)
    return SelectionResult(chosen=chosen, gamma=float(gamma), importance_sum=imp,
                           diversity_value=div, objective=imp + gamma * div,
                           per_step_gains=[float(g) for g in gains],
                           chosen_ids=None if ids is None else [int(ids[i]) for i in chosen])


def greedy_select(scores, divfn: DiversityFn, gamma: float, m: int,
                  candidates=None) -> SelectionResult:
    """Greedy maximisation of importance plus ``gamma`` times diversity.

    ``candidates`` optionally restricts the pool with a boolean mask.
    """
    vals = _values(scores)
    n = divfn.n
    if len(vals) != n:
        raise SelectionError(f"{len(vals)} scores for a kernel over {n} points")
    if gamma < 0:
        raise SelectionError("gamma must be non-negative")
    allowed = np.ones(n, dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool)
    _check_m(m, int(allowed.sum()))
    chosen, obj_gain, _ = kernels.greedy(vals, divfn.kernel.entries, float(gamma), int(m),
                                         divfn.code, divfn.colsum, divfn.fixed_size or 0,
                                         allowed.astype(np.uint8))
    return _result(vals, divfn, gamma, chosen, obj_gain, getattr(scores, "ids", None))


def default_sample_size(n: int, m: int, eps: float = 0.1) -> int:
    return max(1, min(n, math.ceil(n / m * math.log(1.0 / eps))))


def stochastic_greedy_select(scores, divfn: DiversityFn, gamma: float, m: int,
                             s: int | None = None, seed: int = 0) -> SelectionResult:
    """Greedy over a uniform sample of ``s`` unchosen candidates per step."""
    vals = _values(scores)
    n = divfn.n
    _check_m(m, n)
    if gamma < 0:
        raise SelectionError("gamma must be non-negative")
    if s is None:
        s = default_sample_size(n, m)
    if not 1 <= s <= n:
        raise SelectionError(f"sample size must lie in [1, {n}], got {s}")
    rng = np.random.default_rng(seed)
    state = DiversityFn(divfn.kind, divfn.kernel, divfn.fixed_size)
    free = np.ones(n, dtype=bool)
    gains = []
    for _ in range(m):
        pool = np.flatnonzero(free)
        if s < len(pool):
            pool = np.sort(rng.choice(pool, size=s, replace=False))
        total = vals[pool] + gamma * state.gains(pool)
        k = int(np.argmax(total))
        state.add(pool[k])
        free[pool[k]] = False
        gains.append(total[k])
    return _result(vals, divfn, gamma, state.chosen, gains, getattr(scores, "ids", None))


def greedy_select_with_rescoring(train: Dataset, measure: str, f: EvalFn, divfn: DiversityFn,
                                 gamma: float, m: int, eval_ds: Dataset | None = None,
                                 reg: float = model.DEFAULT_REG, tol: float = model.DEFAULT_TOL,
                                 **score_kw) -> SelectionResult:
    """Greedy where importance is recomputed on the remaining points after each pick."""
    from .valuation import compute_scores

    if measure not in ("LOO", "IF"):
        raise SelectionError(f"rescoring supports LOO and IF, not {measure}")
    n = train.n
    _check_m(m, n)
    state = DiversityFn(divfn.kind, divfn.kernel, divfn.fixed_size)
    remaining = np.arange(n)
    first = None
    gains = []
    for step in range(m):
        sub = train if step == 0 else train.subset(remaining)
        sc = compute_scores(measure, sub, f, eval_ds=eval_ds, reg=reg, tol=tol, **score_kw)
        if first is None:
            first = sc.values
        total = sc.values + gamma * state.gains(remaining)
        k = int(np.argmax(total))
        state.add(remaining[k])
        gains.append(total[k])
        remaining = np.delete(remaining, k)
    return _result(first, divfn, gamma, state.chosen, gains, train.ids)


def brute_force_select(scores, divfn: DiversityFn, gamma: float, m: int) -> SelectionResult:
    """Exhaustive optimum; the lexicographically first optimal set wins ties."""
    vals = _values(scores)
    n = divfn.n
    _check_m(m, n)
    if math.comb(n, m) > BRUTE_FORCE_LIMIT:
        raise SelectionError(f"C({n},{m}) = {math.comb(n, m)} subsets exceeds {BRUTE_FORCE_LIMIT}")
    best, best_obj = None, -np.inf
    for combo in itertools.combinations(range(n), m):
        obj = vals[list(combo)].sum() + gamma * divfn.evaluate(combo)
        if obj > best_obj:
            best, best_obj = combo, obj
    return _result(vals, divfn, gamma, best, [], getattr(scores, "ids", None))


@dataclass(eq=False)
class TradeoffCurve:
    gammas: np.ndarray
    influence_retained_fraction: np.ndarray
    diversity_value: np.ndarray
    importance_sum: np.ndarray
    chosen: list[list[int]]

    COLUMNS = ("gamma", "influence_retained_fraction", "diversity_value", "importance_sum", "chosen")

    def __len__(self):
        return len(self.gammas)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for g, f, d, s, c in zip(self.gammas, self.influence_retained_fraction,
                                 self.diversity_value, self.importance_sum, self.chosen):
            w.writerow([repr(float(g)), repr(float(f)), repr(float(d)), repr(float(s)),
                        " ".join(str(int(i)) for i in c)])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TradeoffCurve":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
        return cls(col("gamma"), col("influence_retained_fraction"), col("diversity_value"),
                   col("importance_sum"), [[int(t) for t in r["chosen"].split()] for r in rows])


def _check_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise SelectionError("gamma grid is empty")
    if np.any(grid < 0) or np.any(np.diff(grid) <= 0):
        raise SelectionError("gamma grid must be non-negative and strictly increasing")
    return grid


def _sweep(scores, divfn, m, grid, n_jobs):
    return Parallel(n_jobs=n_jobs)(delayed(greedy_select)(scores, divfn, g, m) for g in grid)


def tradeoff_curve(scores, divfn: DiversityFn, m: int, gamma_grid=None,
                   n_jobs: int = 1) -> TradeoffCurve:
    grid = _check_grid(DEFAULT_GRID if gamma_grid is None else gamma_grid)
    if grid[0] != 0.0:
        raise SelectionError("gamma grid must include 0")
    results = _sweep(scores, divfn, m, grid, n_jobs)
    base = results[0].importance_sum
    if base == 0.0:
        raise SelectionError("total importance of the gamma=0 selection is 0; cannot normalise")
    imp = np.array([r.importance_sum for r in results])
    return TradeoffCurve(gammas=grid, influence_retained_fraction=imp / base,
                         diversity_value=np.array([r.diversity_value for r in results]),
                         importance_sum=imp, chosen=[r.chosen for r in results])


def gamma_by_influence_budget(curve: TradeoffCurve, budget_fraction: float) -> float:
    """Largest grid gamma keeping at least ``1 - budget_fraction`` of the influence."""
    if not 0.0 <= budget_fraction <= 1.0:
        raise SelectionError("budget fraction must lie in [0, 1]")
    if budget_fraction == 0.0:
        return 0.0
    ok = np.flatnonzero(curve.influence_retained_fraction >= 1.0 - budget_fraction - 1e-12)
    gamma = float(curve.gammas[ok.max()]) if ok.size else 0.0
    if gamma == 0.0:
        warnings.warn("only gamma=0 meets the influence budget", RuntimeWarning, stacklevel=2)
    return gamma


def pairwise_distance_sum(X, chosen) -> float:
    idx = np.sort(np.asarray(chosen, dtype=np.int64))
    return float(np.sqrt(kernels.sq_dists(X[idx])).sum())


def gamma_by_max_pairwise_distance(scores, divfn: DiversityFn, m: int, gamma_grid,
                                   ds: Dataset, n_jobs: int = 1) -> float:
    """Grid gamma whose greedy set has the largest summed pairwise distance."""
    grid = _check_grid(gamma_grid)
    X = ds.raw_features
    best, best_val = float(grid[0]), -np.inf
    for g, res in zip(grid, _sweep(scores, divfn, m, grid, n_jobs)):
        val = pairwise_distance_sum(X, res.chosen)
        if val > best_val:
            best, best_val = float(g), val
    return best


def _kmeans_labels(X, k, seed):
    from sklearn.cluster import KMeans

    for attempt in range(2):
        labels = KMeans(n_clusters=k, random_state=seed + attempt, n_init=10).fit_predict(X)
        if np.all(np.bincount(labels, minlength=k) > 0):
            return labels
    raise SelectionError(f"KMeans with k={k} produced an empty cluster twice")


def cluster_coverage(ds: Dataset, rankings: dict, k_grid, seed: int = 0) -> list[dict]:
    """Shortest ranking prefix that touches every KMeans cluster.

    Returns rows ``{k, method, m, lower_bound}``; ``m`` is None when a
    ranking never covers all clusters.
    """
    X = ds.raw_features
    sd = X.std(axis=0)
    X = (X - X.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    rows = []
    for k in k_grid:
        if not 1 <= k <= ds.n:
            raise SelectionError(f"k must lie in [1, {ds.n}], got {k}")
        labels = _kmeans_labels(X, int(k), seed)
        for name, order in rankings.items():
            seen, m = set(), None
            for pos, i in enumerate(order, start=1):
                seen.add(int(labels[i]))
                if len(seen) == k:
                    m = pos
                    break
            rows.append({"k": int(k), "method": name, "m": m, "lower_bound": int(k)})
    return rows
