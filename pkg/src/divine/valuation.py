"""Per-point importance scores.

All measures share one sign convention: ``I_i = f(theta_without_i) - f(theta_hat)``
style differences, so a positive score means the point is helpful for
lowering ``f`` and a negative score means it is harmful.

Removing a point inside a measure means zeroing its weight while the other
weights stay at their original value, so that exact refits, influence
functions and Shapley coalitions all describe the same perturbation.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import model
from .dataset import Dataset
from .errors import ConfigError, ConvergenceError
from .evalfn import EvalFn

log = logging.getLogger(__name__)

MEASURES = ("LOO", "IF", "DS_exact", "DS_mc", "CFP")
SIGN_CONVENTION = "positive = helpful"


@dataclass(eq=False)
class ImportanceScores:
    values: np.ndarray
    ids: np.ndarray
    measure: str
    eval: str
    sign_convention: str = SIGN_CONVENTION
    additive: bool = False
    converged: bool = True
    variant: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        if self.values.shape != self.ids.shape:
            raise ValueError("values and ids must have the same length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("importance scores must be finite")

    def __len__(self):
        return len(self.values)

    def negated(self) -> "ImportanceScores":
        return ImportanceScores(-self.values, self.ids, self.measure, self.eval,
                                "positive = harmful", self.additive, self.converged,
                                self.variant, dict(self.meta))

    def to_dict(self) -> dict:
        header = {"measure": self.measure, "eval": self.eval, "sign_convention": self.sign_convention,
                  "additive": self.additive, "converged": self.converged, "variant": self.variant,
                  **self.meta}
        return {"meta": header,
                "scores": [{"id": int(i), "score": float(v)} for i, v in zip(self.ids, self.values)]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    @classmethod
    def from_dict(cls, obj: dict) -> "ImportanceScores":
        meta = dict(obj["meta"])
        rows = obj["scores"]
        return cls(
            values=[r["score"] for r in rows],
            ids=[r["id"] for r in rows],
            measure=meta.pop("measure"),
            eval=meta.pop("eval"),
            sign_convention=meta.pop("sign_convention", SIGN_CONVENTION),
            additive=meta.pop("additive", False),
            converged=meta.pop("converged", True),
            variant=meta.pop("variant", None),
            meta=meta,
        )

    @classmethod
    def from_json(cls, text: str) -> "ImportanceScores":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class MCConfig:
    max_permutations: int = 1000
    truncation_tol: float | None = None  # None -> 1e-4 * f(theta_hat)
    convergence_window: int | None = 100  # None disables early stopping
    seed: int = 0

    def __post_init__(self):
        if self.max_permutations < 1:
            raise ConfigError("max_permutations must be >= 1")


class _Refitter:
    """Refits the model on weight-masked versions of one training set."""

    def __init__(self, train: Dataset, reg: float, tol: float):
        self.train = train
        self.reg = reg
        self.tol = tol
        self.X = train.features
        self.y = train.labels
        self.w = train.weights
        theta, ok, gnorm, it = model.newton_fit(self.X, self.y, self.w, reg, tol)
        if not ok:
            raise ConvergenceError(f"base fit did not converge (gradient norm {gnorm:.3g})")
        self.theta = theta

    def fit_weights(self, w, theta0=None):
        if not np.any(w > 0):
            return np.zeros_like(self.theta), True
        theta, ok, _, _ = model.newton_fit(self.X, self.y, w, self.reg, self.tol,
                                           self.theta if theta0 is None else theta0)
        return theta, ok

    def without(self, drop, theta0=None):
        w = self.w.copy()
        w[np.asarray(drop, dtype=np.int64)] = 0.0
        return self.fit_weights(w, theta0)


def _eval_ds(train, eval_ds):
    return train if eval_ds is None else eval_ds


def damped_hessian(params, train: Dataset, damping: float | None = None) -> np.ndarray:
    """Hessian of the training objective; adds ``1e-3 * trace / d`` when it is
    numerically singular, or ``damping`` when given explicitly."""
    H = model.hessian(params, train).matrix
    if damping is not None:
        return H + damping * np.eye(H.shape[0])
    if np.linalg.eigvalsh(H)[0] < 1e-8:
        H = H + 1e-3 * np.trace(H) / H.shape[0] * np.eye(H.shape[0])
    return H


def loo_scores(train: Dataset, f: EvalFn, reg: float = model.DEFAULT_REG,
               tol: float = model.DEFAULT_TOL, eval_ds: Dataset | None = None,
               n_jobs: int = 1) -> ImportanceScores:
    if train.n < 2:
        raise ConfigError("leave-one-out needs at least two training points")
    ev = _eval_ds(train, eval_ds)
    rf = _Refitter(train, reg, tol)
    base = f(rf.theta, ev)

    def one(i):
        theta, ok = rf.without([i])
        if not ok:
            raise ConvergenceError(f"leave-one-out fit without point id {train.ids[i]} did not converge")
        return f(theta, ev) - base

    if n_jobs == 1:
        values = [one(i) for i in range(train.n)]
    else:
        values = Parallel(n_jobs=n_jobs)(delayed(one)(i) for i in range(train.n))
    return ImportanceScores(values, train.ids, "LOO", f.name, additive=False,
                            meta={"split": f.eval_split})


def if_scores(train: Dataset, f: EvalFn, damping: float | None = None,
              reg: float = model.DEFAULT_REG, tol: float = model.DEFAULT_TOL,
              eval_ds: Dataset | None = None, variant: str = "auto",
              params: model.ModelParams | None = None) -> ImportanceScores:
    """Influence-function scores.

    ``variant="gradient"`` is the linearised score ``w_i * grad_f' H^-1 grad_l_i``
    (one linear solve plus n dot products). ``variant="displacement"`` moves the
    parameters to ``theta_hat + w_i H^-1 grad_l_i`` and evaluates ``f`` there;
    ``"auto"`` picks the gradient form whenever ``f`` is differentiable.
    """
    if variant == "auto":
        variant = "gradient" if f.differentiable else "displacement"
    if variant not in ("gradient", "displacement"):
        raise ConfigError(f"unknown IF variant {variant!r}")
    if variant == "gradient" and not f.differentiable:
        raise ConfigError(f"{f.kind} has no gradient; use the displacement variant")
    ev = _eval_ds(train, eval_ds)
    if params is None:
        params = model.fit(train, reg, tol)
    H = damped_hessian(params, train, damping)
    G = model.grad_points(params, train)  # n x d
    w = train.weights
    if variant == "gradient":
        v = np.linalg.solve(H, f.gradient(params, ev))
        values = w * (G @ v)
    else:
        shifts = np.linalg.solve(H, G.T).T * w[:, None]
        base = f(params, ev)
        values = np.array([f(params.theta + s, ev) - base for s in shifts])
    return ImportanceScores(values, train.ids, "IF", f.name,
                            additive=(variant == "gradient"), variant=variant,
                            meta={"split": f.eval_split})


def if_local_scores(train: Dataset, test_point, damping: float | None = None,
                    reg: float = model.DEFAULT_REG, tol: float = model.DEFAULT_TOL,
                    params: model.ModelParams | None = None) -> ImportanceScores:
    """Influence of each training point on the loss at ``test_point = (x, y)``."""
    x, y = test_point
    if params is None:
        params = model.fit(train, reg, tol)
    H = damped_hessian(params, train, damping)
    v = np.linalg.solve(H, model.grad_point(params, x, y))
    values = train.weights * (model.grad_points(params, train) @ v)
    return ImportanceScores(values, train.ids, "IF", "local", additive=True, variant="gradient")


def _shapley_coefficients(n):
    # weight of a coalition of size k when adding one more player
    return np.array([math.factorial(k) * math.factorial(n - k - 1) / math.factorial(n)
                     for k in range(n)])


def shapley_exact(train: Dataset, f: EvalFn, reg: float = model.DEFAULT_REG,
                  tol: float = model.DEFAULT_TOL, eval_ds: Dataset | None = None,
                  max_n: int = 12) -> ImportanceScores:
    """Exact Data Shapley by enumerating all 2^n coalitions."""
    n = train.n
    if n > max_n:
        raise ConfigError(f"exact Shapley enumerates 2^n fits; n={n} exceeds the limit {max_n}")
    ev = _eval_ds(train, eval_ds)
    rf = _Refitter(train, reg, tol)
    bits = 1 << np.arange(n)
    utility = np.empty(1 << n)
    failed = []
    for mask in range(1 << n):
        member = (mask & bits) > 0
        theta, ok = rf.fit_weights(np.where(member, rf.w, 0.0))
        if not ok:
            failed.append(mask)
            theta = np.zeros_like(rf.theta)
        utility[mask] = f(theta, ev)
    coef = _shapley_coefficients(n)
    sizes = np.array([bin(m).count("1") for m in range(1 << n)])
    values = np.zeros(n)
    masks = np.arange(1 << n)
    for i in range(n):
        without = masks[(masks & bits[i]) == 0]
        values[i] = np.sum(coef[sizes[without]] * (utility[without] - utility[without | bits[i]]))
    meta = {"split": f.eval_split, "empty_value": float(utility[0]),
            "full_value": float(utility[-1])}
    if failed:
        meta["baseline_substituted"] = len(failed)
    return ImportanceScores(values, train.ids, "DS_exact", f.name, additive=True, meta=meta)


def shapley_mc(train: Dataset, f: EvalFn, cfg: MCConfig = MCConfig(),
               reg: float = model.DEFAULT_REG, tol: float = model.DEFAULT_TOL,
               eval_ds: Dataset | None = None, cache_limit: int = 500_000) -> ImportanceScores:
    """Truncated Monte-Carlo permutation estimate of Data Shapley."""
    n = train.n
    ev = _eval_ds(train, eval_ds)
    rf = _Refitter(train, reg, tol)
    full = f(rf.theta, ev)
    trunc = 1e-4 * abs(full) if cfg.truncation_tol is None else cfg.truncation_tol
    cache = {0: f(np.zeros_like(rf.theta), ev), (1 << n) - 1: full}
    empty = cache[0]

    def utility(key, member, theta0):
        if key in cache:
            return cache[key], theta0
        theta, ok = rf.fit_weights(np.where(member, rf.w, 0.0), theta0)
        if not ok:
            theta = np.zeros_like(rf.theta)
        value = f(theta, ev)
        if len(cache) < cache_limit:
            cache[key] = value
        return value, theta

    total = np.zeros(n)
    history = []
    converged = False
    t = 0
    for t in range(1, cfg.max_permutations + 1):
        perm = np.random.default_rng([cfg.seed, t]).permutation(n)
        member = np.zeros(n, dtype=bool)
        key = 0
        prev = empty
        theta = None
        for j in perm:
            if abs(prev - full) < trunc:
                break
            member[j] = True
            key |= 1 << int(j)
            cur, theta = utility(key, member, theta)
            total[j] += prev - cur
            prev = cur
        mean = total / t
        history.append(mean)
        w = cfg.convergence_window
        if w and t > w:
            old = history[-w - 1]
            scale = np.linalg.norm(mean)
            if scale > 0 and np.linalg.norm(mean - old) / scale < 0.01:
                converged = True
                break
            history = history[-w - 1:]
    if not converged and cfg.convergence_window is None:
        converged = True  # fixed budget requested
    return ImportanceScores(total / t, train.ids, "DS_mc", f.name, additive=True,
                            converged=converged,
                            meta={"split": f.eval_split, "seed": cfg.seed, "permutations": t,
                                  "truncation_tol": trunc})


def _cfp_retrain_one(X, y, w, theta_hat, i, reg, tol, max_doublings):
    pred = 1.0 if X[i] @ theta_hat >= 0 else -1.0
    Xa = np.vstack([X, X[i]])
    ya = np.append(y, -pred)
    c = w[i] if w[i] > 0 else 1.0 / len(w)
    theta = theta_hat
    for _ in range(max_doublings + 1):
        wa = np.append(w, c)
        theta, _, _, _ = model.newton_fit(Xa, ya, wa, reg, tol, theta)
        if (1.0 if X[i] @ theta >= 0 else -1.0) != pred:
            return theta, True
        c *= 2.0
    return theta, False


def cfp_scores(train: Dataset, f: EvalFn, mode: str = "retrain",
               reg: float = model.DEFAULT_REG, tol: float = model.DEFAULT_TOL,
               eval_ds: Dataset | None = None, damping: float | None = None,
               max_doublings: int = 20, n_jobs: int = 1) -> ImportanceScores:
    """Counterfactual-prediction scores: the change in ``f`` when the model is
    forced to flip its prediction on each training point."""
    ev = _eval_ds(train, eval_ds)
    params = model.fit(train, reg, tol)
    base = f(params, ev)
    X, y, w = train.features, train.labels, train.weights
    unflippable = []
    if mode == "retrain":
        jobs = (delayed(_cfp_retrain_one)(X, y, w, params.theta, i, reg, tol, max_doublings)
                for i in range(train.n))
        results = Parallel(n_jobs=n_jobs)(jobs) if n_jobs != 1 else \
            [_cfp_retrain_one(X, y, w, params.theta, i, reg, tol, max_doublings) for i in range(train.n)]
        values = np.empty(train.n)
        for i, (theta, flipped) in enumerate(results):
            if not flipped:
                unflippable.append(int(train.ids[i]))
            values[i] = f(theta, ev) - base
    elif mode == "closed_form":
        H = damped_hessian(params, train, damping)
        Hinv_X = np.linalg.solve(H, X.T).T
        q = np.einsum("ij,ij->i", X, Hinv_X)
        m = X @ params.theta
        scale = np.where(m != 0, m / q * (1.0 + 1e-6), 1e-12)
        values = np.array([f(params.theta - s * hx, ev) - base for s, hx in zip(scale, Hinv_X)])
    else:
        raise ConfigError(f"unknown CFP mode {mode!r}")
    meta = {"split": f.eval_split, "mode": mode}
    if unflippable:
        meta["unflippable"] = unflippable
    return ImportanceScores(values, train.ids, "CFP", f.name, additive=False, variant=mode, meta=meta)


def group_importance(scores: ImportanceScores, subset) -> float:
    if not scores.additive:
        warnings.warn(f"{scores.measure} scores are only approximately additive",
                      RuntimeWarning, stacklevel=2)
    idx = np.asarray(list(subset), dtype=np.int64)
    return float(scores.values[idx].sum())


def compute_scores(measure: str, train: Dataset, f: EvalFn, eval_ds: Dataset | None = None,
                   reg: float = model.DEFAULT_REG, tol: float = model.DEFAULT_TOL,
                   mc: MCConfig | None = None, **kw) -> ImportanceScores:
    """Dispatch on a measure name (``LOO``, ``IF``, ``DS_exact``, ``DS_mc``, ``CFP``)."""
    if measure == "LOO":
        return loo_scores(train, f, reg, tol, eval_ds, n_jobs=kw.get("n_jobs", 1))
    if measure == "IF":
        return if_scores(train, f, kw.get("damping"), reg, tol, eval_ds, kw.get("variant", "auto"))
    if measure == "DS_exact":
        return shapley_exact(train, f, reg, tol, eval_ds)
    if measure == "DS_mc":
        return shapley_mc(train, f, mc or MCConfig(), reg, tol, eval_ds)
    if measure == "CFP":
        return cfp_scores(train, f, kw.get("mode", "retrain"), reg, tol, eval_ds,
                          n_jobs=kw.get("n_jobs", 1))
    raise ConfigError(f"unknown measure {measure!r}; expected one of {MEASURES}")
